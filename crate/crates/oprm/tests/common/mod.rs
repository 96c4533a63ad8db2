#![allow(dead_code)]

//! Shared helpers for integration tests.

use oprm::engine::Backend;
use oprm::{OutputDistribution, Result, TokenId};

/// Backend that deterministically maps any consumed sequence to a
/// distribution via a caller-supplied function. The state is the full token
/// history, so scripts can condition on anything.
pub struct FnBackend<F>
where
    F: Fn(&[TokenId]) -> Vec<f64> + Sync,
{
    pub vocab: usize,
    pub f: F,
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&[TokenId]) -> Vec<f64> + Sync,
{
    type State = Vec<TokenId>;

    fn prefill(&self, tokens: &[TokenId]) -> Result<(Self::State, OutputDistribution)> {
        let state = tokens.to_vec();
        let dist = OutputDistribution::from_probs((self.f)(&state))?;
        Ok((state, dist))
    }

    fn step(&self, state: &mut Self::State, token: TokenId) -> Result<OutputDistribution> {
        state.push(token);
        OutputDistribution::from_probs((self.f)(state))
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }
}

/// One-hot distribution helper.
pub fn one_hot(vocab: usize, token: TokenId) -> Vec<f64> {
    let mut p = vec![0.0; vocab];
    p[token as usize] = 1.0;
    p
}

/// Uniform distribution helper.
pub fn uniform(vocab: usize) -> Vec<f64> {
    vec![1.0 / vocab as f64; vocab]
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
