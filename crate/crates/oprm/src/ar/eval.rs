use super::sample::gen_sample;
use crate::engine::{oprm_generate, vanilla_generate, Backend, Decoding, GenerationConfig, PromptParts};
use crate::error::{Error, Result};
use crate::types::TokenId;
use crate::util;
use crate::vocab::Vocab;
use serde::{Deserialize, Serialize};

const SALT_EVAL_CTX: u64 = 0xe7a1;

/// Anything that can answer an associative-recall prompt.
pub trait Generator: Sync {
    fn generate(&self, parts: &PromptParts, max_new_tokens: usize) -> Result<Vec<TokenId>>;
}

/// Full-prompt baseline generation.
pub struct VanillaGenerator<'a, B: Backend> {
    pub backend: &'a B,
    pub decoding: Decoding,
}

impl<B: Backend> Generator for VanillaGenerator<'_, B> {
    fn generate(&self, parts: &PromptParts, max_new_tokens: usize) -> Result<Vec<TokenId>> {
        vanilla_generate(self.backend, &parts.flat(), self.decoding, max_new_tokens, &[])
    }
}

/// Chunked speculative-prefill generation.
pub struct OprmGenerator<'a, B: Backend> {
    pub backend: &'a B,
    pub cfg: GenerationConfig,
}

impl<B: Backend> Generator for OprmGenerator<'_, B> {
    fn generate(&self, parts: &PromptParts, max_new_tokens: usize) -> Result<Vec<TokenId>> {
        let mut cfg = self.cfg.clone();
        cfg.max_new_tokens = max_new_tokens;
        oprm_generate(self.backend, parts, &cfg).map(|(answer, _)| answer)
    }
}

/// Evaluation protocol: which fact counts, how many contexts, which seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    /// Strictly increasing fact counts.
    pub grid: Vec<usize>,
    pub contexts_per_m: usize,
    pub seeds: Vec<u64>,
    /// Padded context length N.
    pub context_len: usize,
    /// Query at most this many facts per context (None: query all).
    pub query_cap: Option<usize>,
    pub workers: usize,
}

impl EvalProtocol {
    pub fn new(grid: Vec<usize>, contexts_per_m: usize, context_len: usize) -> Self {
        EvalProtocol {
            grid,
            contexts_per_m,
            seeds: vec![0],
            context_len,
            query_cap: None,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::usage("evaluation grid must be nonempty"));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::usage("evaluation grid must be strictly increasing"));
        }
        if self.contexts_per_m == 0 || self.seeds.is_empty() {
            return Err(Error::usage("need at least one context and one seed"));
        }
        Ok(())
    }
}

/// Accuracy at one fact count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    pub accuracy: f64,
    pub contexts: usize,
    pub queries: usize,
}

/// Accuracy as a function of the number of facts in the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARCurve {
    pub points: Vec<CurvePoint>,
    pub seeds: Vec<u64>,
    pub context_len: usize,
}

impl ARCurve {
    pub fn accuracy_at(&self, m: usize) -> Option<f64> {
        self.points.iter().find(|p| p.m == m).map(|p| p.accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,accuracy,contexts,queries\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{:.6},{},{}\n",
                p.m, p.accuracy, p.contexts, p.queries
            ));
        }
        out
    }
}

/// Outcome of one query, for positional analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalRecord {
    pub m: usize,
    pub fact_index: usize,
    /// Key start position divided by the context length.
    pub pos_frac: f64,
    pub correct: bool,
}

/// Evaluate a generator over the grid; also returns one record per query.
///
/// Purity contract: identical (generator, protocol, vocab) inputs give an
/// identical curve for any worker count — contexts use per-(seed, index)
/// derived streams and results reduce in context order.
pub fn eval_ar_detailed<G: Generator>(
    generator: &G,
    vocab: &Vocab,
    proto: &EvalProtocol,
) -> Result<(ARCurve, Vec<RetrievalRecord>)> {
    proto.validate()?;
    let mut points = Vec::with_capacity(proto.grid.len());
    let mut records = Vec::new();
    for &m in &proto.grid {
        // One work unit per (seed, context) pair.
        let units: Vec<(u64, usize)> = proto
            .seeds
            .iter()
            .flat_map(|&s| (0..proto.contexts_per_m).map(move |c| (s, c)))
            .collect();
        let per_unit = util::par_try_map_indexed(proto.workers, units.len(), |ui| {
            let (seed, ctx) = units[ui];
            let ctx_seed = util::derive_seed(seed, &[SALT_EVAL_CTX, m as u64, ctx as u64]);
            let sample = gen_sample(m, proto.context_len, vocab, ctx_seed)?;
            let queried: Vec<usize> = match proto.query_cap {
                Some(cap) if m > cap => {
                    let mut rng = util::rng_for(ctx_seed, &[1]);
                    let mut picks: Vec<usize> =
                        rand::seq::index::sample(&mut rng, m, cap).iter().collect();
                    picks.sort_unstable();
                    picks
                }
                _ => (0..m).collect(),
            };
            let mut unit_records = Vec::with_capacity(queried.len());
            for f in queried {
                let parts = sample.prompt_parts_for(f, vocab);
                let answer = generator.generate(&parts, vocab.value_len())?;
                let correct = answer == sample.facts[f].value;
                unit_records.push(RetrievalRecord {
                    m,
                    fact_index: f,
                    pos_frac: sample.key_positions[f] as f64 / proto.context_len as f64,
                    correct,
                });
            }
            Ok::<Vec<RetrievalRecord>, Error>(unit_records)
        })
        .map_err(|(_, e)| e)?;

        let mut queries = 0usize;
        let mut correct = 0usize;
        for unit in per_unit {
            for r in unit {
                queries += 1;
                correct += r.correct as usize;
                records.push(r);
            }
        }
        points.push(CurvePoint {
            m,
            accuracy: correct as f64 / queries.max(1) as f64,
            contexts: proto.seeds.len() * proto.contexts_per_m,
            queries,
        });
    }
    Ok((
        ARCurve {
            points,
            seeds: proto.seeds.clone(),
            context_len: proto.context_len,
        },
        records,
    ))
}

/// Curve-only wrapper around [`eval_ar_detailed`].
pub fn eval_ar_curve<G: Generator>(
    generator: &G,
    vocab: &Vocab,
    proto: &EvalProtocol,
) -> Result<ARCurve> {
    eval_ar_detailed(generator, vocab, proto).map(|(curve, _)| curve)
}

/// How capacity is read off a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CapacityRule {
    /// Expected facts retrieved: max over the grid of m * accuracy(m).
    ExpectedFacts,
    /// Largest m with accuracy >= the threshold (0 if none).
    Threshold { accuracy: f64 },
}

/// Capacity of one model, relative to the fact count it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub d: usize,
    pub d_state: usize,
    pub m_trained: usize,
    pub capacity: f64,
    pub ratio: f64,
}

impl CapacityReport {
    pub fn csv_header() -> &'static str {
        "d,d_state,m_trained,capacity,ratio\n"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6}\n",
            self.d, self.d_state, self.m_trained, self.capacity, self.ratio
        )
    }
}

/// Reduce a curve to a capacity figure.
pub fn capacity_report(
    curve: &ARCurve,
    d: usize,
    d_state: usize,
    m_trained: usize,
    rule: CapacityRule,
) -> CapacityReport {
    let capacity = match rule {
        CapacityRule::ExpectedFacts => curve
            .points
            .iter()
            .map(|p| p.m as f64 * p.accuracy)
            .fold(0.0, f64::max),
        CapacityRule::Threshold { accuracy } => curve
            .points
            .iter()
            .filter(|p| p.accuracy >= accuracy)
            .map(|p| p.m as f64)
            .fold(0.0, f64::max),
    };
    CapacityReport {
        d,
        d_state,
        m_trained,
        capacity,
        ratio: capacity / m_trained as f64,
    }
}

/// Normalized histogram of where successful retrievals sat in the context.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
    pub normalized: Vec<f64>,
    pub total: usize,
}

impl Histogram {
    /// No successes at all: the empty-histogram flag.
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count,fraction\n");
        for (i, (&c, &f)) in self.counts.iter().zip(&self.normalized).enumerate() {
            out.push_str(&format!("{i},{c},{f:.6}\n"));
        }
        out
    }
}

/// Bin the successfully retrieved facts by key position fraction.
pub fn positional_histogram(records: &[RetrievalRecord], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for r in records.iter().filter(|r| r.correct) {
        let b = ((r.pos_frac * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
        total += 1;
    }
    let normalized = counts
        .iter()
        .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
        .collect();
    Histogram {
        counts,
        normalized,
        total,
    }
}

/// Evaluate the same fact content under different padded lengths.
///
/// Facts depend only on (m, seed), so each curve sees identical facts and
/// only the padding varies.
pub fn length_sensitivity_sweep<G: Generator>(
    generator: &G,
    vocab: &Vocab,
    proto: &EvalProtocol,
    lengths: &[usize],
) -> Result<Vec<(usize, ARCurve)>> {
    let largest_m = *proto.grid.iter().max().unwrap_or(&0);
    for &n in lengths {
        if largest_m * vocab.fact_len() > n {
            return Err(Error::usage(format!(
                "length {n} cannot hold {largest_m} facts"
            )));
        }
    }
    let mut out = Vec::with_capacity(lengths.len());
    for &n in lengths {
        let mut p = proto.clone();
        p.context_len = n;
        out.push((n, eval_ar_curve(generator, vocab, &p)?));
    }
    Ok(out)
}
