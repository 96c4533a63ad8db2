use super::params::ModelParams;
use crate::error::{Error, Result};

/// AdamW hyperparameters. Defaults: beta = (0.9, 0.999), eps = 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators mirroring the parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: ModelParams,
    v: ModelParams,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        OptimizerState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Ceiling that keeps the system matrix strictly negative under training.
const A_CEILING: f64 = -1e-6;

/// One decoupled-weight-decay adaptive update, in place.
///
/// Weight decay multiplies parameters by (1 - lr * wd) independently of the
/// adaptive term; bias-corrected moments follow the usual recurrences.
/// Afterwards the A matrices are projected back below zero, preserving the
/// `abar in (0, 1]` state-boundedness invariant under arbitrary updates.
pub fn apply_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    opt: &mut OptimizerState,
    hp: &AdamW,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&opt.m) {
        return Err(Error::usage("optimizer shapes do not match parameters"));
    }
    opt.step += 1;
    let t = opt.step as f64;
    let bc1 = 1.0 - hp.beta1.powf(t);
    let bc2 = 1.0 - hp.beta2.powf(t);

    let gs = grads.tensor_slices();
    let ms = opt.m.tensor_slices_mut();
    let vs = opt.v.tensor_slices_mut();
    for (((p, g), m), v) in params
        .tensor_slices_mut()
        .into_iter()
        .zip(gs)
        .zip(ms)
        .zip(vs)
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= hp.lr * hp.weight_decay * p[i];
            p[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
    for b in &mut params.blocks {
        for a in b.a.iter_mut() {
            if *a > A_CEILING {
                *a = A_CEILING;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, TrainBatch, TrainSample};

    #[test]
    fn zero_grads_zero_decay_leave_params_unchanged() {
        let mut p = ModelParams::init(ModelConfig::new(8, 4, 2, 5)).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = OptimizerState::new(&p);
        apply_update(&mut p, &g, &mut opt, &AdamW::new(1e-3, 0.0)).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_grads_with_decay_scale_params() {
        let mut p = ModelParams::init(ModelConfig::new(8, 4, 2, 5)).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut opt = OptimizerState::new(&p);
        apply_update(&mut p, &g, &mut opt, &AdamW::new(1e-3, 0.1)).unwrap();
        let factor = 1.0 - 1e-4;
        for (a, b) in p.tensor_slices().iter().zip(before.tensor_slices()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y * factor).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let mut p = ModelParams::init(ModelConfig::new(8, 4, 2, 5)).unwrap();
        let other = ModelParams::init(ModelConfig::new(8, 6, 2, 5)).unwrap();
        let mut opt = OptimizerState::new(&p);
        let err = apply_update(&mut p, &other.zeros_like(), &mut opt, &AdamW::new(1e-3, 0.0));
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn a_stays_strictly_negative_under_adverse_updates() {
        let mut p = ModelParams::init(ModelConfig::new(8, 4, 2, 5)).unwrap();
        let mut opt = OptimizerState::new(&p);
        let mut g = p.zeros_like();
        // Push A upward hard: gradient descending on -A drives A toward 0+.
        for b in &mut g.blocks {
            for a in b.a.iter_mut() {
                *a = -100.0;
            }
        }
        for _ in 0..100 {
            apply_update(&mut p, &g, &mut opt, &AdamW::new(0.1, 0.0)).unwrap();
        }
        for b in &p.blocks {
            assert!(b.a.iter().all(|&x| x < 0.0));
        }
        p.validate().unwrap();
    }

    #[test]
    fn repeated_updates_reduce_loss_on_fixed_batch() {
        let mut p = ModelParams::init(ModelConfig::new(8, 6, 2, 9)).unwrap();
        let batch = TrainBatch {
            samples: vec![TrainSample {
                tokens: vec![3, 1, 4, 1, 5],
                targets: vec![(4, 2)],
            }],
        };
        let mut opt = OptimizerState::new(&p);
        let hp = AdamW::new(1e-3, 0.0);
        let first = p.loss(&batch).unwrap();
        for _ in 0..200 {
            let (_, g) = p.loss_and_grads(&batch).unwrap();
            apply_update(&mut p, &g, &mut opt, &hp).unwrap();
        }
        let last = p.loss(&batch).unwrap();
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }
}
