//! Reverse-mode differentiation through the full stack: head, both blocks,
//! the S6 recurrence, the causal convolution, the gate, and the pre-norm.
//!
//! The training path records and differentiates sequences stage by stage
//! with samples of equal length stacked into shared matrices, so every
//! projection is one cache-friendly matrix product; only the recurrence and
//! the convolution walk the time axis. Inference streams token by token
//! instead; the finite-difference oracle (which drives the streaming
//! forward) ties the two paths together.

use super::batch::{TrainBatch, TrainSample};
use super::forward::{matvec, outer_acc, NORM_EPS};
use super::params::ModelParams;
use super::state::HiddenState;
use crate::error::{Error, Result};
use crate::util::{self, silu, silu_prime, softplus};
use ndarray::linalg::general_mat_mul;
use ndarray::Array2;

/// Samples stacked per gradient group; bounds tape memory while keeping the
/// matrix products large.
const STACK: usize = 16;

/// Stable log-sum-exp plus probabilities, reused by loss and backward.
fn softmax_parts(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    (max + sum.ln(), probs)
}

/// Whole-group forward record of one layer. Matrices hold `s * t_len + t`
/// rows; abar and h_prev hold d*ds entries per row.
pub(crate) struct LayerTape {
    pub u: Array2<f64>,
    pub rms: Vec<f64>,
    pub normed: Array2<f64>,
    pub g_pre: Array2<f64>,
    pub g: Array2<f64>,
    pub cin: Array2<f64>,
    pub x: Array2<f64>,
    pub delta: Array2<f64>,
    pub b_t: Array2<f64>,
    pub c_t: Array2<f64>,
    pub abar: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub y: Array2<f64>,
}

impl ModelParams {
    /// Forward one layer over a stack of equal-length sequences, recording
    /// everything. `u` is the layer input; `t_len` the per-sample length.
    pub(crate) fn layer_forward_tape(
        &self,
        layer: usize,
        u: Array2<f64>,
        t_len: usize,
    ) -> Result<(Array2<f64>, LayerTape)> {
        let p = &self.blocks[layer];
        let d = self.cfg.d;
        let ds = self.cfg.d_state;
        let k = self.cfg.conv_k;
        let rows = u.dim().0;
        let n_samples = rows / t_len;
        debug_assert_eq!(rows % t_len, 0);

        // Pre-norm.
        let gains = p.norm_gain.as_slice().unwrap();
        let mut rms = vec![0.0; rows];
        let mut normed = Array2::zeros((rows, d));
        {
            let us = u.as_slice().unwrap();
            let ns = normed.as_slice_mut().unwrap();
            for r in 0..rows {
                let row = &us[r * d..(r + 1) * d];
                let mean_sq = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
                let rr = (mean_sq + NORM_EPS).sqrt();
                rms[r] = rr;
                let nrow = &mut ns[r * d..(r + 1) * d];
                for c in 0..d {
                    nrow[c] = row[c] / rr * gains[c];
                }
            }
        }

        // Gate and conv-input projections.
        let mut g_pre = Array2::zeros((rows, d));
        general_mat_mul(1.0, &normed, &p.w_gate.t(), 0.0, &mut g_pre);
        let mut g = Array2::zeros((rows, d));
        for (gv, &zv) in g.iter_mut().zip(g_pre.iter()) {
            *gv = silu(zv);
        }
        let mut cin = Array2::zeros((rows, d));
        general_mat_mul(1.0, &normed, &p.w_conv_in.t(), 0.0, &mut cin);

        // Causal depthwise convolution with zero history per sample.
        let kernel = p.conv_kernel.as_slice().unwrap();
        let mut x = Array2::zeros((rows, d));
        {
            let cs = cin.as_slice().unwrap();
            let xs = x.as_slice_mut().unwrap();
            for s in 0..n_samples {
                for t in 0..t_len {
                    let r = s * t_len + t;
                    let xrow = &mut xs[r * d..(r + 1) * d];
                    for c in 0..d {
                        let krow = &kernel[c * k..(c + 1) * k];
                        let mut acc = 0.0;
                        for j in 0..k {
                            let src = t as isize - (k as isize - 1) + j as isize;
                            if src >= 0 {
                                acc += krow[j] * cs[(s * t_len + src as usize) * d + c];
                            }
                        }
                        xrow[c] = acc;
                    }
                }
            }
        }

        // Discretization and state projections.
        let mut delta = Array2::zeros((rows, d));
        general_mat_mul(1.0, &x, &p.s_delta.t(), 0.0, &mut delta);
        let offs = self.dt_offset.as_slice().unwrap();
        {
            let dl = delta.as_slice_mut().unwrap();
            for r in 0..rows {
                let row = &mut dl[r * d..(r + 1) * d];
                for c in 0..d {
                    row[c] = softplus(row[c] + offs[c]);
                }
            }
        }
        let mut b_t = Array2::zeros((rows, ds));
        general_mat_mul(1.0, &x, &p.s_b.t(), 0.0, &mut b_t);
        let mut c_t = Array2::zeros((rows, ds));
        general_mat_mul(1.0, &x, &p.s_c.t(), 0.0, &mut c_t);

        // S6 recurrence, per sample.
        let a = p.a.as_slice().unwrap();
        let mut h = vec![0.0; n_samples * d * ds];
        let mut abar_all = vec![0.0; rows * d * ds];
        let mut h_prev_all = vec![0.0; rows * d * ds];
        let mut y = Array2::zeros((rows, d));
        {
            let xs = x.as_slice().unwrap();
            let dls = delta.as_slice().unwrap();
            let bs = b_t.as_slice().unwrap();
            let cs = c_t.as_slice().unwrap();
            let ys = y.as_slice_mut().unwrap();
            for t in 0..t_len {
                for s in 0..n_samples {
                    let r = s * t_len + t;
                    let hs = &mut h[s * d * ds..(s + 1) * d * ds];
                    h_prev_all[r * d * ds..(r + 1) * d * ds].copy_from_slice(hs);
                    let ab_t = &mut abar_all[r * d * ds..(r + 1) * d * ds];
                    let brow = &bs[r * ds..(r + 1) * ds];
                    let crow = &cs[r * ds..(r + 1) * ds];
                    for c in 0..d {
                        let dl = dls[r * d + c];
                        let bx = xs[r * d + c] * dl;
                        let arow = &a[c * ds..(c + 1) * ds];
                        let hrow = &mut hs[c * ds..(c + 1) * ds];
                        let mut acc = 0.0;
                        for n in 0..ds {
                            let z = arow[n] * dl;
                            if !(z <= 0.0) {
                                return Err(Error::numeric(
                                    t,
                                    format!("abar exp({z}) outside (0,1] at channel {c}"),
                                ));
                            }
                            let abar = crate::util::fast_exp(z).min(1.0);
                            hrow[n] = abar * hrow[n] + brow[n] * bx;
                            acc += crow[n] * hrow[n];
                            ab_t[c * ds + n] = abar;
                        }
                        ys[r * d + c] = acc;
                    }
                }
            }
        }

        // Gate and residual.
        let mut out = u.clone();
        {
            let os = out.as_slice_mut().unwrap();
            let ys = y.as_slice().unwrap();
            let gs = g.as_slice().unwrap();
            for i in 0..rows * d {
                os[i] += ys[i] * gs[i];
            }
        }

        Ok((
            out,
            LayerTape {
                u,
                rms,
                normed,
                g_pre,
                g,
                cin,
                x,
                delta,
                b_t,
                c_t,
                abar: abar_all,
                h_prev: h_prev_all,
                y,
            },
        ))
    }

    /// Record the forward pass of a stack of equal-length samples.
    fn forward_tape(&self, samples: &[TrainSample]) -> Result<(Vec<LayerTape>, Array2<f64>)> {
        let d = self.cfg.d;
        let t_len = samples[0].tokens.len();
        let rows = samples.len() * t_len;
        let mut u = Array2::zeros((rows, d));
        for (s, sample) in samples.iter().enumerate() {
            for (t, &tok) in sample.tokens.iter().enumerate() {
                u.row_mut(s * t_len + t)
                    .as_slice_mut()
                    .unwrap()
                    .copy_from_slice(self.embed_token(tok)?);
            }
        }
        let mut tapes = Vec::with_capacity(self.cfg.n_layers);
        for layer in 0..self.cfg.n_layers {
            let (out, tape) = self.layer_forward_tape(layer, u, t_len)?;
            tapes.push(tape);
            u = out;
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(t_len - 1, "non-finite block output"));
        }
        Ok((tapes, u))
    }

    /// Cross-entropy summed over this sample's targets (no normalization).
    /// Token-streaming, shared with inference.
    fn sample_loss_sum(&self, sample: &TrainSample) -> Result<f64> {
        let mut by_pos: std::collections::BTreeMap<usize, Vec<u32>> = Default::default();
        for &(pos, gold) in &sample.targets {
            by_pos.entry(pos).or_default().push(gold);
        }
        let mut state = HiddenState::new(&self.cfg);
        let mut ws = self.forward_scratch();
        let mut sum = 0.0;
        for (t, &tok) in sample.tokens.iter().enumerate() {
            self.features_step(&mut state, tok, &mut ws)?;
            if let Some(golds) = by_pos.get(&t) {
                let logits = self.logits_from_features(ws.features());
                let (lse, _) = softmax_parts(&logits);
                for &g in golds {
                    sum += lse - logits[g as usize];
                }
            }
        }
        Ok(sum)
    }

    /// Mean cross-entropy over every target in the batch. Forward-only,
    /// token-streaming; this is the path the finite-difference oracle
    /// drives, independent of the batched training pass.
    pub fn loss(&self, batch: &TrainBatch) -> Result<f64> {
        batch.validate(self.cfg.vocab_size)?;
        let count = batch.target_count();
        if count == 0 {
            return Err(Error::usage("batch has no targets"));
        }
        let mut sum = 0.0;
        for s in &batch.samples {
            sum += self.sample_loss_sum(s)?;
        }
        Ok(sum / count as f64)
    }

    /// Backward pass for a stack of equal-length samples. `inv_count` is
    /// 1 / (total targets in the whole batch) so group gradients sum to the
    /// batch gradient.
    fn stacked_grads(
        &self,
        samples: &[TrainSample],
        inv_count: f64,
        grads: &mut ModelParams,
    ) -> Result<f64> {
        let t_len = samples[0].tokens.len();
        if samples.iter().any(|s| s.tokens.len() != t_len) {
            return Err(Error::usage("stacked samples must share one length"));
        }
        let (tapes, feats) = self.forward_tape(samples)?;
        let d = self.cfg.d;
        let ds = self.cfg.d_state;
        let k = self.cfg.conv_k;
        let rows = samples.len() * t_len;

        // d loss / d final-block-output, per row.
        let mut dout: Array2<f64> = Array2::zeros((rows, d));
        let mut loss_sum = 0.0;
        for (s, sample) in samples.iter().enumerate() {
            for &(pos, gold) in &sample.targets {
                let r = s * t_len + pos;
                let f = feats.row(r);
                let f = f.as_slice().unwrap();
                let logits = self.logits_from_features(f);
                let (lse, probs) = softmax_parts(&logits);
                loss_sum += lse - logits[gold as usize];
                let mut dlogits = probs;
                dlogits[gold as usize] -= 1.0;
                for v in &mut dlogits {
                    *v *= inv_count;
                }
                outer_acc(&mut grads.head, f, &dlogits);
                let mut df = vec![0.0; d];
                matvec(&self.head, &dlogits, &mut df);
                let mut row = dout.row_mut(r);
                let row = row.as_slice_mut().unwrap();
                for c in 0..d {
                    row[c] += df[c];
                }
            }
        }

        // Walk the blocks top-down; `dout` enters as the gradient at each
        // block's output and leaves as the gradient at its input.
        for layer in (0..self.cfg.n_layers).rev() {
            let p = &self.blocks[layer];
            let gp = &mut grads.blocks[layer];
            let tape = &tapes[layer];
            let a = p.a.as_slice().unwrap();
            let gains = p.norm_gain.as_slice().unwrap();

            // o = y * g: split into the recurrence branch and the gate branch.
            let douts = dout.as_slice().unwrap();
            let gs = tape.g.as_slice().unwrap();
            let gps = tape.g_pre.as_slice().unwrap();
            let ys = tape.y.as_slice().unwrap();
            let mut dy = Array2::zeros((rows, d));
            let mut dg_pre = Array2::zeros((rows, d));
            {
                let dys = dy.as_slice_mut().unwrap();
                let dgs = dg_pre.as_slice_mut().unwrap();
                for i in 0..rows * d {
                    dys[i] = douts[i] * gs[i];
                    dgs[i] = douts[i] * ys[i] * silu_prime(gps[i]);
                }
            }

            // Recurrence backward (reverse time), producing the gradients at
            // x, delta, b, c and accumulating dA.
            let mut dx = Array2::zeros((rows, d));
            let mut ddelta_pre = Array2::zeros((rows, d));
            let mut db = Array2::zeros((rows, ds));
            let mut dc = Array2::zeros((rows, ds));
            {
                let dys = dy.as_slice().unwrap();
                let xs = tape.x.as_slice().unwrap();
                let dls = tape.delta.as_slice().unwrap();
                let bs = tape.b_t.as_slice().unwrap();
                let cs = tape.c_t.as_slice().unwrap();
                let dxs = dx.as_slice_mut().unwrap();
                let ddps = ddelta_pre.as_slice_mut().unwrap();
                let dbs = db.as_slice_mut().unwrap();
                let dcs = dc.as_slice_mut().unwrap();
                let ga = gp.a.as_slice_mut().unwrap();
                let mut carry = vec![0.0; samples.len() * d * ds];
                let mut h_now = vec![0.0; ds];
                for t in (0..t_len).rev() {
                    for s in 0..samples.len() {
                        let r = s * t_len + t;
                        let abar = &tape.abar[r * d * ds..(r + 1) * d * ds];
                        let h_prev = &tape.h_prev[r * d * ds..(r + 1) * d * ds];
                        let brow = &bs[r * ds..(r + 1) * ds];
                        let crow = &cs[r * ds..(r + 1) * ds];
                        let dbrow = &mut dbs[r * ds..(r + 1) * ds];
                        let dcrow = &mut dcs[r * ds..(r + 1) * ds];
                        let carry_s = &mut carry[s * d * ds..(s + 1) * d * ds];
                        for c in 0..d {
                            let dl = dls[r * d + c];
                            let xc = xs[r * d + c];
                            let dy_c = dys[r * d + c];
                            let arow = &a[c * ds..(c + 1) * ds];
                            let ab = &abar[c * ds..(c + 1) * ds];
                            let hp = &h_prev[c * ds..(c + 1) * ds];
                            let cr = &mut carry_s[c * ds..(c + 1) * ds];
                            let mut ddelta_c = 0.0;
                            let mut dx_c = 0.0;
                            for n in 0..ds {
                                h_now[n] = ab[n] * hp[n] + brow[n] * dl * xc;
                                let dh_tot = cr[n] + dy_c * crow[n];
                                dcrow[n] += dy_c * h_now[n];
                                cr[n] = dh_tot * ab[n];
                                ga[c * ds + n] += dh_tot * hp[n] * ab[n] * dl;
                                ddelta_c += dh_tot * (hp[n] * ab[n] * arow[n] + brow[n] * xc);
                                dbrow[n] += dh_tot * dl * xc;
                                dx_c += dh_tot * brow[n] * dl;
                            }
                            // sigma of the softplus pre-activation, recovered
                            // from delta: sigma(z) = 1 - exp(-softplus(z)).
                            ddps[r * d + c] = ddelta_c * (-(-dl).exp_m1());
                            dxs[r * d + c] = dx_c;
                        }
                    }
                }
            }

            // Projection gradients as matrix products.
            let mut dnormed = Array2::zeros((rows, d));
            general_mat_mul(1.0, &dg_pre.t(), &tape.normed, 1.0, &mut gp.w_gate);
            general_mat_mul(1.0, &dg_pre, &p.w_gate, 1.0, &mut dnormed);
            general_mat_mul(1.0, &ddelta_pre.t(), &tape.x, 1.0, &mut gp.s_delta);
            general_mat_mul(1.0, &ddelta_pre, &p.s_delta, 1.0, &mut dx);
            general_mat_mul(1.0, &db.t(), &tape.x, 1.0, &mut gp.s_b);
            general_mat_mul(1.0, &db, &p.s_b, 1.0, &mut dx);
            general_mat_mul(1.0, &dc.t(), &tape.x, 1.0, &mut gp.s_c);
            general_mat_mul(1.0, &dc, &p.s_c, 1.0, &mut dx);

            // Convolution backward.
            let kernel = p.conv_kernel.as_slice().unwrap();
            let gker = gp.conv_kernel.as_slice_mut().unwrap();
            let mut dcin = Array2::zeros((rows, d));
            {
                let dxs = dx.as_slice().unwrap();
                let cs = tape.cin.as_slice().unwrap();
                let dcs = dcin.as_slice_mut().unwrap();
                for s in 0..samples.len() {
                    for t in 0..t_len {
                        let r = s * t_len + t;
                        for c in 0..d {
                            let dxc = dxs[r * d + c];
                            if dxc == 0.0 {
                                continue;
                            }
                            let krow = &kernel[c * k..(c + 1) * k];
                            for j in 0..k {
                                let src = t as isize - (k as isize - 1) + j as isize;
                                if src >= 0 {
                                    let sr = s * t_len + src as usize;
                                    gker[c * k + j] += dxc * cs[sr * d + c];
                                    dcs[sr * d + c] += dxc * krow[j];
                                }
                            }
                        }
                    }
                }
            }
            general_mat_mul(1.0, &dcin.t(), &tape.normed, 1.0, &mut gp.w_conv_in);
            general_mat_mul(1.0, &dcin, &p.w_conv_in, 1.0, &mut dnormed);

            // Pre-norm backward; din = residual + norm path.
            let mut din = dout;
            {
                let dins = din.as_slice_mut().unwrap();
                let dns = dnormed.as_slice().unwrap();
                let us = tape.u.as_slice().unwrap();
                let ggain = gp.norm_gain.as_slice_mut().unwrap();
                for r in 0..rows {
                    let rms = tape.rms[r];
                    let urow = &us[r * d..(r + 1) * d];
                    let dnrow = &dns[r * d..(r + 1) * d];
                    let mut dot = 0.0;
                    for c in 0..d {
                        ggain[c] += dnrow[c] * urow[c] / rms;
                        dot += dnrow[c] * gains[c] * urow[c];
                    }
                    let scale = dot / (d as f64 * rms * rms * rms);
                    let dirow = &mut dins[r * d..(r + 1) * d];
                    for c in 0..d {
                        dirow[c] += dnrow[c] * gains[c] / rms - urow[c] * scale;
                    }
                }
            }
            dout = din;
        }

        // Embedding rows.
        let ge = grads.embed.as_slice_mut().unwrap();
        let douts = dout.as_slice().unwrap();
        for (s, sample) in samples.iter().enumerate() {
            for (t, &tok) in sample.tokens.iter().enumerate() {
                let r = s * t_len + t;
                let row = tok as usize * d;
                for c in 0..d {
                    ge[row + c] += douts[r * d + c];
                }
            }
        }
        Ok(loss_sum)
    }

    /// Mean cross-entropy over answer positions plus exact gradients for
    /// every learnable tensor, via backprop through time. Per-sample
    /// computation with a fixed reduction order.
    pub fn loss_and_grads(&self, batch: &TrainBatch) -> Result<(f64, ModelParams)> {
        self.loss_and_grads_with_workers(batch, 1)
    }

    /// Parallel variant of [`ModelParams::loss_and_grads`]: per-sample
    /// gradients are computed on up to `workers` threads and summed in
    /// sample order, so the result is bit-identical for every worker count.
    pub fn loss_and_grads_with_workers(
        &self,
        batch: &TrainBatch,
        workers: usize,
    ) -> Result<(f64, ModelParams)> {
        batch.validate(self.cfg.vocab_size)?;
        let count = batch.target_count();
        if count == 0 {
            return Err(Error::usage("batch has no targets"));
        }
        let inv_count = 1.0 / count as f64;

        let per_sample = util::par_try_map_indexed(workers, batch.samples.len(), |i| {
            let mut g = self.zeros_like();
            let loss_sum =
                self.stacked_grads(std::slice::from_ref(&batch.samples[i]), inv_count, &mut g)?;
            Ok::<(f64, ModelParams), Error>((loss_sum, g))
        })
        .map_err(|(_, e)| e)?;

        let mut grads = self.zeros_like();
        let mut loss_sum = 0.0;
        for (ls, g) in per_sample {
            loss_sum += ls;
            grads.add_scaled(&g, 1.0);
        }
        Ok((loss_sum * inv_count, grads))
    }

    /// Throughput variant used by the training loop: equal-length samples
    /// are stacked in groups so the projections run as large matrix
    /// products. Single-threaded and deterministic; agrees with the
    /// per-sample path to rounding.
    pub fn loss_and_grads_stacked(&self, batch: &TrainBatch) -> Result<(f64, ModelParams)> {
        batch.validate(self.cfg.vocab_size)?;
        let count = batch.target_count();
        if count == 0 {
            return Err(Error::usage("batch has no targets"));
        }
        let inv_count = 1.0 / count as f64;
        let mut grads = self.zeros_like();
        let mut loss_sum = 0.0;
        let mut i = 0;
        while i < batch.samples.len() {
            let t_len = batch.samples[i].tokens.len();
            let mut j = i + 1;
            while j < batch.samples.len()
                && j - i < STACK
                && batch.samples[j].tokens.len() == t_len
            {
                j += 1;
            }
            loss_sum += self.stacked_grads(&batch.samples[i..j], inv_count, &mut grads)?;
            i = j;
        }
        Ok((loss_sum * inv_count, grads))
    }
}
