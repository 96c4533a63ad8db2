use crate::engine::PromptParts;
use crate::error::{Error, Result};
use crate::types::TokenId;
use crate::util;
use crate::vocab::Vocab;
use rand::Rng;
use serde::{Deserialize, Serialize};

const SALT_SAMPLE: u64 = 0x5a3b;

/// One key-value pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub key: Vec<TokenId>,
    pub value: Vec<TokenId>,
}

/// One associative-recall context: M facts laid out over exactly N tokens
/// with evenly spaced padding, plus a default query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ARSample {
    pub m: usize,
    pub n: usize,
    pub facts: Vec<Fact>,
    /// The padded context, length exactly `n`.
    pub layout: Vec<TokenId>,
    /// Start position of each fact's key within `layout`.
    pub key_positions: Vec<usize>,
    /// Index of the fact queried by default.
    pub queried: usize,
}

impl ARSample {
    pub fn query(&self) -> &[TokenId] {
        &self.facts[self.queried].key
    }

    pub fn gold(&self) -> &[TokenId] {
        &self.facts[self.queried].value
    }

    /// Prompt for querying fact `fact_idx`: the layout is the context and
    /// the suffix is the key followed by the query marker.
    pub fn prompt_parts_for(&self, fact_idx: usize, vocab: &Vocab) -> PromptParts {
        let key = &self.facts[fact_idx].key;
        let mut suffix = key.clone();
        suffix.push(vocab.query_marker());
        PromptParts::new(Vec::new(), self.layout.clone(), suffix, 0..key.len())
            .expect("query span is within the suffix by construction")
    }

    pub fn prompt_parts(&self, vocab: &Vocab) -> PromptParts {
        self.prompt_parts_for(self.queried, vocab)
    }

    /// One JSON record per line: m, n, facts, layout, query, gold.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "m": self.m,
            "n": self.n,
            "facts": self.facts,
            "layout": self.layout,
            "query": self.query(),
            "gold": self.gold(),
        })
        .to_string()
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Record {
            m: usize,
            n: usize,
            facts: Vec<Fact>,
            layout: Vec<TokenId>,
            query: Vec<TokenId>,
        }
        let r: Record = serde_json::from_str(line)
            .map_err(|e| Error::usage(format!("bad dataset record: {e}")))?;
        let queried = r
            .facts
            .iter()
            .position(|f| f.key == r.query)
            .ok_or_else(|| Error::usage("dataset record queries an unknown key"))?;
        let key_positions = key_positions_of(&r.layout, &r.facts)?;
        Ok(ARSample {
            m: r.m,
            n: r.n,
            facts: r.facts,
            layout: r.layout,
            key_positions,
            queried,
        })
    }

    pub fn validate(&self, vocab: &Vocab) -> Result<()> {
        if self.layout.len() != self.n {
            return Err(Error::usage("layout length differs from n"));
        }
        let mut stripped: Vec<TokenId> = Vec::new();
        for &t in &self.layout {
            if t != vocab.pad_token() {
                stripped.push(t);
            }
        }
        let mut concat = Vec::new();
        for f in &self.facts {
            concat.extend_from_slice(&f.key);
            concat.extend_from_slice(&f.value);
        }
        if stripped != concat {
            return Err(Error::usage("stripping pads does not recover the facts"));
        }
        for (i, f) in self.facts.iter().enumerate() {
            for other in &self.facts[i + 1..] {
                if f.key == other.key {
                    return Err(Error::usage("keys must be pairwise distinct"));
                }
            }
        }
        Ok(())
    }
}

fn key_positions_of(layout: &[TokenId], facts: &[Fact]) -> Result<Vec<usize>> {
    let mut positions = Vec::with_capacity(facts.len());
    let mut cursor = 0usize;
    for f in facts {
        let flat: Vec<TokenId> = f.key.iter().chain(f.value.iter()).copied().collect();
        let pos = (cursor..=layout.len().saturating_sub(flat.len()))
            .find(|&p| layout[p..p + flat.len()] == flat[..])
            .ok_or_else(|| Error::usage("fact not found in layout"))?;
        positions.push(pos);
        cursor = pos + flat.len();
    }
    Ok(positions)
}

/// Evenly spaced pad-run lengths: one gap after each fact, lengths differing
/// by at most one, remainder on the earliest gaps.
pub(crate) fn gap_lengths(pads: usize, gaps: usize) -> Vec<usize> {
    let base = pads / gaps;
    let rem = pads % gaps;
    (0..gaps).map(|i| base + usize::from(i < rem)).collect()
}

/// Generate one sample. Facts depend only on `(m, vocab, seed)` — never on
/// `n` — so length sweeps vary padding while holding content fixed.
pub fn gen_sample(m: usize, n: usize, vocab: &Vocab, seed: u64) -> Result<ARSample> {
    if m == 0 {
        return Err(Error::usage("need at least one fact"));
    }
    let fact_len = vocab.fact_len();
    if m * fact_len > n {
        return Err(Error::usage(format!(
            "{m} facts of {fact_len} tokens do not fit in {n}"
        )));
    }
    if (m as u64) > vocab.key_space() {
        return Err(Error::usage("more facts than distinct keys"));
    }
    let mut rng = util::rng_for(seed, &[SALT_SAMPLE, m as u64]);

    // Keys first, then values, then the queried index: the draw order is
    // part of the determinism contract.
    let key_range = vocab.key_range();
    let mut keys: Vec<Vec<TokenId>> = Vec::with_capacity(m);
    if vocab.key_len() == 1 {
        let picks = rand::seq::index::sample(&mut rng, key_range.len(), m);
        for i in picks.iter() {
            keys.push(vec![key_range.start + i as TokenId]);
        }
    } else {
        // Rejection-sample distinct key strings.
        while keys.len() < m {
            let cand: Vec<TokenId> = (0..vocab.key_len())
                .map(|_| rng.random_range(key_range.clone()))
                .collect();
            if !keys.contains(&cand) {
                keys.push(cand);
            }
        }
    }
    let value_range = vocab.value_range();
    let facts: Vec<Fact> = keys
        .into_iter()
        .map(|key| Fact {
            value: (0..vocab.value_len())
                .map(|_| rng.random_range(value_range.clone()))
                .collect(),
            key,
        })
        .collect();
    let queried = rng.random_range(0..m);

    let pads = n - m * fact_len;
    let gaps = gap_lengths(pads, m);
    let mut layout = Vec::with_capacity(n);
    let mut key_positions = Vec::with_capacity(m);
    for (f, gap) in facts.iter().zip(&gaps) {
        key_positions.push(layout.len());
        layout.extend_from_slice(&f.key);
        layout.extend_from_slice(&f.value);
        layout.extend(std::iter::repeat_n(vocab.pad_token(), *gap));
    }
    debug_assert_eq!(layout.len(), n);

    Ok(ARSample {
        m,
        n,
        facts,
        layout,
        key_positions,
        queried,
    })
}

/// Controlled-protocol sample: single-token keys and values.
pub fn gen_controlled_sample(m: usize, n: usize, vocab: &Vocab, seed: u64) -> Result<ARSample> {
    if vocab.fact_len() != 2 {
        return Err(Error::usage(
            "controlled protocol expects single-token keys and values",
        ));
    }
    gen_sample(m, n, vocab, seed)
}

/// Zero-shot-protocol sample: 3-letter keys, 5-digit values.
pub fn gen_zero_shot_sample(m: usize, n: usize, vocab: &Vocab, seed: u64) -> Result<ARSample> {
    if vocab.key_len() != 3 || vocab.value_len() != 5 {
        return Err(Error::usage(
            "zero-shot protocol expects 3-letter keys and 5-digit values",
        ));
    }
    gen_sample(m, n, vocab, seed)
}
