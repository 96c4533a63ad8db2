//! Wall-clock scaling of chunked vs monolithic prefill, and decode-cost
//! checks. Timings are the one non-deterministic output of the tool.

use crate::engine::{
    build_prompts, decode_autoregressive, make_chunks, speculative_prefill, Decoding,
};
use crate::error::Result;
use crate::model::{HiddenState, ModelParams};
use crate::types::TokenId;
use crate::util;
use rand::Rng;
use std::time::Instant;

/// Least-squares line fit with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let pred = slope * x + intercept;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - my) * (y - my);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LinFit {
        slope,
        intercept,
        r2,
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub b: usize,
    pub context_tokens: usize,
    pub vanilla_prefill_s: f64,
    pub chunked_prefill_s: f64,
    pub decode_per_token_s: f64,
    pub prefill_state_bytes: usize,
    pub decode_state_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Chunked prefill time vs chunk count.
    pub chunked_fit: LinFit,
    /// Per-token decode time vs chunk count (flat when decoding holds one state).
    pub decode_fit: LinFit,
    pub workers: usize,
    pub chunk_len: usize,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "b,context_tokens,vanilla_prefill_s,chunked_prefill_s,decode_per_token_s,prefill_state_bytes,decode_state_bytes\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{},{}\n",
                r.b,
                r.context_tokens,
                r.vanilla_prefill_s,
                r.chunked_prefill_s,
                r.decode_per_token_s,
                r.prefill_state_bytes,
                r.decode_state_bytes
            ));
        }
        out
    }

    pub fn fits_csv(&self) -> String {
        format!(
            "fit,slope,intercept,r2\nchunked_prefill_vs_b,{:.6},{:.6},{:.6}\ndecode_per_token_vs_b,{:.6},{:.6},{:.6}\n",
            self.chunked_fit.slope,
            self.chunked_fit.intercept,
            self.chunked_fit.r2,
            self.decode_fit.slope,
            self.decode_fit.intercept,
            self.decode_fit.r2
        )
    }
}

/// Time chunked vs monolithic prefill over a sweep of chunk counts at fixed
/// chunk length, plus the per-token decode cost.
pub fn run_bench(
    params: &ModelParams,
    chunk_len: usize,
    chunk_counts: &[usize],
    decode_tokens: usize,
    repeats: usize,
    workers: usize,
) -> Result<BenchReport> {
    let vocab_size = params.cfg.vocab_size as u32;
    let mut rng = util::rng_for(0, &[0xbe]);
    let state_bytes = HiddenState::new(&params.cfg).size_bytes();
    let mut rows = Vec::with_capacity(chunk_counts.len());
    let suffix: Vec<TokenId> = vec![1, 2];

    for &b in chunk_counts {
        let context: Vec<TokenId> = (0..b * chunk_len)
            .map(|_| rng.random_range(0..vocab_size))
            .collect();
        let chunks = make_chunks(&context, chunk_len, 0)?;
        let prompts = build_prompts(&[], &chunks, &suffix);
        let mut full = context.clone();
        full.extend_from_slice(&suffix);

        // Warm-up, then median wall-clock over the repeats.
        let _ = params.prefill(&full)?;
        let vanilla = median(
            (0..repeats)
                .map(|_| {
                    let t = Instant::now();
                    let _ = params.prefill(&full).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .collect(),
        );
        let _ = speculative_prefill(params, &prompts, Decoding::Greedy, &[], workers)?;
        let chunked = median(
            (0..repeats)
                .map(|_| {
                    let t = Instant::now();
                    let _ =
                        speculative_prefill(params, &prompts, Decoding::Greedy, &[], workers)
                            .unwrap();
                    t.elapsed().as_secs_f64()
                })
                .collect(),
        );

        let (state, dist) = params.prefill(&prompts[0])?;
        let first = dist.argmax();
        let decode = median(
            (0..repeats)
                .map(|_| {
                    let t = Instant::now();
                    let _ = decode_autoregressive(
                        params,
                        state.clone(),
                        first,
                        Decoding::Greedy,
                        decode_tokens.max(2),
                        &[],
                    )
                    .unwrap();
                    t.elapsed().as_secs_f64()
                })
                .collect(),
        ) / decode_tokens.max(2) as f64;

        rows.push(BenchRow {
            b,
            context_tokens: context.len(),
            vanilla_prefill_s: vanilla,
            chunked_prefill_s: chunked,
            decode_per_token_s: decode,
            prefill_state_bytes: b * state_bytes,
            decode_state_bytes: state_bytes,
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.b as f64).collect();
    let chunked_fit = linear_fit(
        &xs,
        &rows.iter().map(|r| r.chunked_prefill_s).collect::<Vec<_>>(),
    );
    let decode_fit = linear_fit(
        &xs,
        &rows.iter().map(|r| r.decode_per_token_s).collect::<Vec<_>>(),
    );
    Ok(BenchReport {
        rows,
        chunked_fit,
        decode_fit,
        workers,
        chunk_len,
    })
}

/// Per-step wall-clock as a function of stream position; the slope stays at
/// zero because a step's cost does not depend on how much has been consumed.
pub fn step_time_fit(params: &ModelParams, total_steps: usize, bucket: usize) -> Result<LinFit> {
    let mut state = HiddenState::new(&params.cfg);
    let mut rng = util::rng_for(1, &[0x57]);
    let vocab_size = params.cfg.vocab_size as u32;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let buckets = total_steps / bucket.max(1);
    for bi in 0..buckets {
        let t = Instant::now();
        for _ in 0..bucket {
            let tok = rng.random_range(0..vocab_size);
            params.step(&mut state, tok)?;
        }
        xs.push((bi * bucket) as f64);
        ys.push(t.elapsed().as_secs_f64() / bucket as f64);
    }
    Ok(linear_fit(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_fits_perfectly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_line_has_reasonable_r2() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 * x + if (*x as i64) % 2 == 0 { 0.1 } else { -0.1 })
            .collect();
        let f = linear_fit(&xs, &ys);
        assert!(f.r2 > 0.99);
    }

    #[test]
    fn flat_data_fits_zero_slope() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [4.0, 4.0, 4.0];
        let f = linear_fit(&xs, &ys);
        assert_eq!(f.slope, 0.0);
        assert_eq!(f.r2, 1.0);
    }
}
