use super::params::{BlockParams, ModelParams};
use super::state::{HiddenState, LayerState};
use crate::error::{Error, Result};
use crate::types::{OutputDistribution, TokenId};
use crate::util::{silu, softplus};
use ndarray::{Array1, Array2};

/// Epsilon inside the RMS-norm square root.
pub(crate) const NORM_EPS: f64 = 1e-6;

/// y = M x. Four-lane unrolled reduction; the lane sum order is part of the
/// function's (deterministic) definition.
pub(crate) fn matvec(m: &Array2<f64>, x: &[f64], y: &mut [f64]) {
    let (rows, cols) = m.dim();
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(y.len(), rows);
    let ms = m.as_slice().unwrap();
    let lanes = cols / 4 * 4;
    for i in 0..rows {
        let row = &ms[i * cols..(i + 1) * cols];
        let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
        let mut j = 0;
        while j < lanes {
            a0 += row[j] * x[j];
            a1 += row[j + 1] * x[j + 1];
            a2 += row[j + 2] * x[j + 2];
            a3 += row[j + 3] * x[j + 3];
            j += 4;
        }
        let mut acc = (a0 + a1) + (a2 + a3);
        while j < cols {
            acc += row[j] * x[j];
            j += 1;
        }
        y[i] = acc;
    }
}

/// G += a b^T
pub(crate) fn outer_acc(g: &mut Array2<f64>, a: &[f64], b: &[f64]) {
    let (rows, cols) = g.dim();
    debug_assert_eq!(a.len(), rows);
    debug_assert_eq!(b.len(), cols);
    let gs = g.as_slice_mut().unwrap();
    for i in 0..rows {
        let ai = a[i];
        if ai != 0.0 {
            let row = &mut gs[i * cols..(i + 1) * cols];
            for j in 0..cols {
                row[j] += ai * b[j];
            }
        }
    }
}

/// Zero-order-hold discretization of one channel:
/// `abar = exp(a * delta)` elementwise, `bbar = b * delta`.
///
/// With `a < 0` and `delta >= 0` every `abar` entry lies in (0, 1]; this is
/// checked and violated entries surface as numeric errors.
pub fn discretize(a_row: &[f64], delta: f64, b_t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !delta.is_finite()
        || a_row.iter().any(|x| !x.is_finite())
        || b_t.iter().any(|x| !x.is_finite())
    {
        return Err(Error::numeric(0, "non-finite discretization input"));
    }
    let mut abar = Vec::with_capacity(a_row.len());
    for &a in a_row {
        let ab = (a * delta).exp();
        if !(ab > 0.0 && ab <= 1.0) {
            return Err(Error::numeric(
                0,
                format!("abar {ab} outside (0,1] (a={a}, delta={delta})"),
            ));
        }
        abar.push(ab);
    }
    let bbar = b_t.iter().map(|&b| b * delta).collect();
    Ok((abar, bbar))
}

/// Reusable buffers for untaped block steps.
pub(crate) struct BlockScratch {
    normed: Vec<f64>,
    g_pre: Vec<f64>,
    g: Vec<f64>,
    cin: Vec<f64>,
    x: Vec<f64>,
    delta: Vec<f64>,
    b_t: Vec<f64>,
    c_t: Vec<f64>,
}

impl BlockScratch {
    pub(crate) fn new(d: usize, ds: usize) -> Self {
        BlockScratch {
            normed: vec![0.0; d],
            g_pre: vec![0.0; d],
            g: vec![0.0; d],
            cin: vec![0.0; d],
            x: vec![0.0; d],
            delta: vec![0.0; d],
            b_t: vec![0.0; ds],
            c_t: vec![0.0; ds],
        }
    }
}

/// One streaming step of one block: pre-norm, gate, causal depthwise conv,
/// the S6 recurrence, gating, residual. `u` is the block input; the output
/// lands in `out`; `ls` advances in place. All intermediates go to the
/// supplied buffers so the taped training path records without copying.
#[allow(clippy::too_many_arguments)]
pub(crate) fn block_step_core(
    p: &BlockParams,
    dt_offset: &Array1<f64>,
    ls: &mut LayerState,
    u: &[f64],
    out: &mut [f64],
    step: usize,
    normed: &mut [f64],
    g_pre: &mut [f64],
    g: &mut [f64],
    cin: &mut [f64],
    x: &mut [f64],
    delta: &mut [f64],
    b_t: &mut [f64],
    c_t: &mut [f64],
    mut record: Option<(&mut f64, &mut [f64], &mut [f64], &mut [f64])>,
) -> Result<()> {
    let d = u.len();
    let ds = p.s_b.dim().0;
    let k = p.conv_kernel.dim().1;

    // Pre-norm with learned gains.
    let mean_sq = u.iter().map(|v| v * v).sum::<f64>() / d as f64;
    let rms = (mean_sq + NORM_EPS).sqrt();
    let gains = p.norm_gain.as_slice().unwrap();
    for c in 0..d {
        normed[c] = u[c] / rms * gains[c];
    }

    // Gate branch.
    matvec(&p.w_gate, normed, g_pre);
    for c in 0..d {
        g[c] = silu(g_pre[c]);
    }

    // Causal depthwise convolution over the projected inputs; kernel column
    // k-1 multiplies the current token, earlier columns read the buffer.
    matvec(&p.w_conv_in, normed, cin);
    let kernel = p.conv_kernel.as_slice().unwrap();
    let buf = ls.conv_buf.as_slice_mut().unwrap();
    for c in 0..d {
        let krow = &kernel[c * k..(c + 1) * k];
        let brow = &mut buf[c * (k - 1)..(c + 1) * (k - 1)];
        let mut acc = krow[k - 1] * cin[c];
        for j in 0..k - 1 {
            acc += krow[j] * brow[j];
        }
        x[c] = acc;
        brow.rotate_left(1);
        brow[k - 2] = cin[c];
    }

    // Input-dependent discretization and projections.
    matvec(&p.s_delta, x, delta);
    let offs = dt_offset.as_slice().unwrap();
    for c in 0..d {
        delta[c] = softplus(delta[c] + offs[c]);
    }
    matvec(&p.s_b, x, b_t);
    matvec(&p.s_c, x, c_t);

    if let Some((rms_rec, _, h_prev_rec, u_rec)) = record.as_mut() {
        **rms_rec = rms;
        h_prev_rec.copy_from_slice(ls.h.as_slice().unwrap());
        u_rec.copy_from_slice(u);
    }

    // S6 recurrence, per channel.
    let a = p.a.as_slice().unwrap();
    let h = ls.h.as_slice_mut().unwrap();
    for c in 0..d {
        let dl = delta[c];
        let bx = x[c] * dl;
        let arow = &a[c * ds..(c + 1) * ds];
        let hrow = &mut h[c * ds..(c + 1) * ds];
        let mut acc = 0.0;
        for n in 0..ds {
            let z = arow[n] * dl;
            if !(z <= 0.0) {
                return Err(Error::numeric(
                    step,
                    format!("abar exp({z}) outside (0,1] at channel {c}"),
                ));
            }
            let abar = crate::util::fast_exp(z).min(1.0);
            hrow[n] = abar * hrow[n] + b_t[n] * bx;
            acc += c_t[n] * hrow[n];
            if let Some((_, abar_rec, _, _)) = record.as_mut() {
                abar_rec[c * ds + n] = abar;
            }
        }
        // Gate and residual.
        out[c] = u[c] + acc * g[c];
    }
    Ok(())
}

/// Untaped block step using scratch buffers.
pub(crate) fn block_step(
    p: &BlockParams,
    dt_offset: &Array1<f64>,
    ls: &mut LayerState,
    u: &[f64],
    out: &mut [f64],
    step: usize,
    scratch: &mut BlockScratch,
) -> Result<()> {
    block_step_core(
        p,
        dt_offset,
        ls,
        u,
        out,
        step,
        &mut scratch.normed,
        &mut scratch.g_pre,
        &mut scratch.g,
        &mut scratch.cin,
        &mut scratch.x,
        &mut scratch.delta,
        &mut scratch.b_t,
        &mut scratch.c_t,
        None,
    )
}

impl ModelParams {
    pub(crate) fn embed_token(&self, token: TokenId) -> Result<&[f64]> {
        if (token as usize) >= self.cfg.vocab_size {
            return Err(Error::usage(format!(
                "token {token} outside vocabulary of size {}",
                self.cfg.vocab_size
            )));
        }
        let d = self.cfg.d;
        let e = self.embed.as_slice().unwrap();
        Ok(&e[token as usize * d..(token as usize + 1) * d])
    }

    pub(crate) fn forward_scratch(&self) -> ForwardScratch {
        ForwardScratch {
            block: BlockScratch::new(self.cfg.d, self.cfg.d_state),
            a: vec![0.0; self.cfg.d],
            b: vec![0.0; self.cfg.d],
        }
    }

    /// Consume one token, leaving the final-block features in `ws.a`.
    pub(crate) fn features_step(
        &self,
        state: &mut HiddenState,
        token: TokenId,
        ws: &mut ForwardScratch,
    ) -> Result<()> {
        let step = state.position;
        ws.a.copy_from_slice(self.embed_token(token)?);
        for (block, ls) in self.blocks.iter().zip(state.layers.iter_mut()) {
            block_step(block, &self.dt_offset, ls, &ws.a, &mut ws.b, step, &mut ws.block)?;
            std::mem::swap(&mut ws.a, &mut ws.b);
        }
        if ws.a.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(step, "non-finite block output"));
        }
        state.position += 1;
        Ok(())
    }

    pub(crate) fn logits_from_features(&self, feats: &[f64]) -> Vec<f64> {
        let (d, v) = self.head.dim();
        debug_assert_eq!(feats.len(), d);
        let hs = self.head.as_slice().unwrap();
        let mut logits = vec![0.0; v];
        for c in 0..d {
            let f = feats[c];
            if f != 0.0 {
                let row = &hs[c * v..(c + 1) * v];
                for j in 0..v {
                    logits[j] += f * row[j];
                }
            }
        }
        logits
    }

    fn distribution(&self, feats: &[f64], step: usize) -> Result<OutputDistribution> {
        OutputDistribution::from_logits(&self.logits_from_features(feats)).map_err(|e| match e {
            Error::Numeric { what, .. } => Error::Numeric { step, what },
            other => other,
        })
    }

    /// Run the whole sequence from an empty state; returns the final state
    /// and the next-token distribution at the last position.
    pub fn prefill(&self, tokens: &[TokenId]) -> Result<(HiddenState, OutputDistribution)> {
        if tokens.is_empty() {
            return Err(Error::usage("prefill requires a nonempty token sequence"));
        }
        let mut state = HiddenState::new(&self.cfg);
        let mut ws = self.forward_scratch();
        for &t in tokens {
            self.features_step(&mut state, t, &mut ws)?;
        }
        let dist = self.distribution(ws.features(), state.position - 1)?;
        Ok((state, dist))
    }

    /// Consume one token from an existing state. Constant time and space in
    /// the tokens consumed so far.
    pub fn step(
        &self,
        state: &mut HiddenState,
        token: TokenId,
    ) -> Result<OutputDistribution> {
        let mut ws = self.forward_scratch();
        self.features_step(state, token, &mut ws)?;
        self.distribution(ws.features(), state.position - 1)
    }
}

/// Working buffers for streaming forward passes; `a` holds the latest
/// final-block features.
pub(crate) struct ForwardScratch {
    block: BlockScratch,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ForwardScratch {
    pub(crate) fn features(&self) -> &[f64] {
        &self.a
    }
}
