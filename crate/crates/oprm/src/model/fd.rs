//! Central-difference gradient oracle.
//!
//! Differentiates the forward loss numerically, one scalar parameter at a
//! time. It never touches the backward pass, so it is an independent check
//! of [`ModelParams::loss_and_grads`].

use super::batch::TrainBatch;
use super::params::ModelParams;
use crate::error::{Error, Result};

/// (f(x+eps) - f(x-eps)) / 2 eps. Exact for quadratics up to rounding.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Central finite differences of the batch loss for every learnable scalar.
pub fn finite_diff_grad(
    params: &ModelParams,
    batch: &TrainBatch,
    eps: f64,
) -> Result<ModelParams> {
    if !(eps > 0.0) {
        return Err(Error::usage("finite-difference eps must be positive"));
    }
    let mut work = params.clone();
    let mut grads = params.zeros_like();
    let n_tensors = params.tensor_slices().len();
    for ti in 0..n_tensors {
        let len = params.tensor_slices()[ti].len();
        for i in 0..len {
            let orig = work.tensor_slices()[ti][i];
            work.tensor_slices_mut()[ti][i] = orig + eps;
            let plus = work.loss(batch)?;
            work.tensor_slices_mut()[ti][i] = orig - eps;
            let minus = work.loss(batch)?;
            work.tensor_slices_mut()[ti][i] = orig;
            grads.tensor_slices_mut()[ti][i] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(grads)
}

/// Largest relative error between two gradient sets, with a small absolute
/// floor so zero-gradient parameters compare cleanly.
pub fn max_relative_error(analytic: &ModelParams, numeric: &ModelParams) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic
        .tensor_slices()
        .iter()
        .zip(numeric.tensor_slices().iter())
    {
        for (&x, &y) in a.iter().zip(n.iter()) {
            let denom = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}
