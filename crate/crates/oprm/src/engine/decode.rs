use super::backend::Backend;
use crate::error::{Error, Result};
use crate::types::{OutputDistribution, TokenId};
use crate::util;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Decoding rule applied to each next-token distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Decoding {
    Greedy,
    /// Sample from probs^(1/temperature); seeded, so runs are reproducible.
    Temperature { temperature: f64, seed: u64 },
}

impl Decoding {
    pub fn validate(&self) -> Result<()> {
        if let Decoding::Temperature { temperature, .. } = self {
            if !(*temperature > 0.0) {
                return Err(Error::usage("sampling temperature must be > 0"));
            }
        }
        Ok(())
    }
}

/// A decoding rule bound to its RNG stream.
pub(crate) struct Sampler {
    rule: Decoding,
    rng: Option<ChaCha8Rng>,
}

impl Sampler {
    /// `stream` distinguishes independent uses of the same config seed
    /// (per-chunk first tokens vs the decode loop).
    pub(crate) fn new(rule: Decoding, stream: &[u64]) -> Sampler {
        let rng = match rule {
            Decoding::Greedy => None,
            Decoding::Temperature { seed, .. } => Some(util::rng_for(seed, stream)),
        };
        Sampler { rule, rng }
    }

    pub(crate) fn pick(&mut self, dist: &OutputDistribution) -> TokenId {
        match self.rule {
            Decoding::Greedy => dist.argmax(),
            Decoding::Temperature { temperature, .. } => {
                let rng = self.rng.as_mut().expect("temperature sampler has rng");
                sample_tempered(dist, temperature, rng)
            }
        }
    }
}

fn sample_tempered(dist: &OutputDistribution, temperature: f64, rng: &mut ChaCha8Rng) -> TokenId {
    // p^(1/T) renormalized, computed via logs for stability.
    let inv_t = 1.0 / temperature;
    let logw: Vec<f64> = dist
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { p.ln() * inv_t } else { f64::NEG_INFINITY })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut coin = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        coin -= w;
        if coin <= 0.0 {
            return i as TokenId;
        }
    }
    (weights.len() - 1) as TokenId
}

/// RNG stream tag for the decode loop.
pub(crate) const SALT_DECODE: u64 = 0xdec0;
/// RNG stream tag for per-chunk first tokens; combined with the chunk index.
pub(crate) const SALT_FIRST: u64 = 0xf157;

/// Decode autoregressively from a selected state.
///
/// Emits `first_token`, then repeatedly steps the backend and applies the
/// decoding rule until a stop token has been emitted or `max_new_tokens` is
/// reached. The stop token is included in the answer. Only this one state is
/// held for the whole decode.
pub fn decode_autoregressive<B: Backend>(
    backend: &B,
    state: B::State,
    first_token: TokenId,
    decoding: Decoding,
    max_new_tokens: usize,
    stop_tokens: &[TokenId],
) -> Result<Vec<TokenId>> {
    decoding.validate()?;
    let sampler = Sampler::new(decoding, &[SALT_DECODE]);
    decode_with_sampler(backend, state, first_token, sampler, max_new_tokens, stop_tokens)
}

pub(crate) fn decode_with_sampler<B: Backend>(
    backend: &B,
    mut state: B::State,
    first_token: TokenId,
    mut sampler: Sampler,
    max_new_tokens: usize,
    stop_tokens: &[TokenId],
) -> Result<Vec<TokenId>> {
    let mut answer = vec![first_token];
    while answer.len() < max_new_tokens && !stop_tokens.contains(answer.last().unwrap()) {
        let dist = backend.step(&mut state, *answer.last().unwrap())?;
        answer.push(sampler.pick(&dist));
    }
    Ok(answer)
}
