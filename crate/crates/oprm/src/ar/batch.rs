use super::sample::gen_sample;
use crate::error::{Error, Result};
use crate::model::{TrainBatch, TrainSample};
use crate::types::TokenId;
use crate::util;
use crate::vocab::Vocab;
use rand::Rng;
use serde::{Deserialize, Serialize};

const SALT_CONTEXT: u64 = 0xc0;
const SALT_QUERIES: u64 = 0xdd;

/// How one training batch is assembled from a blend of fact counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchProtocol {
    /// Fact counts M; one context is sampled per entry.
    pub m_blend: Vec<usize>,
    /// Padded context length N.
    pub context_len: usize,
    /// Above this many facts, only this many randomly chosen queries are
    /// used per context.
    pub query_cap: usize,
    /// Extra copies per context that query an absent key with the error
    /// token as gold, as a fraction of the real copies. 0 disables them.
    pub idk_fraction: f64,
}

impl BatchProtocol {
    pub fn new(m_blend: Vec<usize>, context_len: usize) -> Self {
        BatchProtocol {
            m_blend,
            context_len,
            query_cap: 16,
            idk_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_blend.is_empty() {
            return Err(Error::usage("m_blend must be nonempty"));
        }
        if !(0.0..=1.0).contains(&self.idk_fraction) {
            return Err(Error::usage("idk_fraction must be in [0, 1]"));
        }
        if self.query_cap == 0 {
            return Err(Error::usage("query_cap must be >= 1"));
        }
        Ok(())
    }
}

/// Teacher-forced training copy: context, key, query marker, and the value
/// tokens as supervised positions.
fn copy_for_query(layout: &[TokenId], key: &[TokenId], gold: &[TokenId], vocab: &Vocab) -> TrainSample {
    let mut tokens: Vec<TokenId> = Vec::with_capacity(layout.len() + key.len() + gold.len());
    tokens.extend_from_slice(layout);
    tokens.extend_from_slice(key);
    tokens.push(vocab.query_marker());
    let base = tokens.len() - 1;
    let mut targets = Vec::with_capacity(gold.len());
    for (i, &g) in gold.iter().enumerate() {
        targets.push((base + i, g));
        if i + 1 < gold.len() {
            tokens.push(g);
        }
    }
    TrainSample { tokens, targets }
}

/// Build one training batch.
///
/// For each M in the blend: sample one context, then add one copy per
/// queried fact — every fact when M <= query_cap, otherwise query_cap facts
/// chosen at random. With `idk_fraction > 0`, extra copies querying a key
/// absent from the context (gold: the error token) are appended.
pub fn make_training_batch(proto: &BatchProtocol, vocab: &Vocab, seed: u64) -> Result<TrainBatch> {
    proto.validate()?;
    let mut samples = Vec::new();
    for (slot, &m) in proto.m_blend.iter().enumerate() {
        let ctx_seed = util::derive_seed(seed, &[SALT_CONTEXT, slot as u64, m as u64]);
        let sample = gen_sample(m, proto.context_len, vocab, ctx_seed)?;

        let mut rng = util::rng_for(seed, &[SALT_QUERIES, slot as u64, m as u64]);
        let queried: Vec<usize> = if m <= proto.query_cap {
            (0..m).collect()
        } else {
            let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, m, proto.query_cap)
                .iter()
                .collect();
            picks.sort_unstable();
            picks
        };
        let n_real = queried.len();
        for f in queried {
            samples.push(copy_for_query(
                &sample.layout,
                &sample.facts[f].key,
                &sample.facts[f].value,
                vocab,
            ));
        }

        let n_idk = (proto.idk_fraction * n_real as f64).round() as usize;
        let gold_err = vec![vocab.error_token()];
        for _ in 0..n_idk {
            let absent = loop {
                let cand: Vec<TokenId> = (0..vocab.key_len())
                    .map(|_| rng.random_range(vocab.key_range()))
                    .collect();
                if sample.facts.iter().all(|f| f.key != cand) {
                    break cand;
                }
            };
            samples.push(copy_for_query(&sample.layout, &absent, &gold_err, vocab));
        }
    }
    Ok(TrainBatch { samples })
}
