use super::backend::Backend;
use super::chunks::{build_prompts, make_chunks, PromptParts};
use super::decode::{decode_with_sampler, Decoding, Sampler, SALT_DECODE, SALT_FIRST};
use super::score::{query_log_likelihood, speculative_prefill, ChunkScore};
use super::select::{idk_filter, select_chunk, Criterion};
use crate::error::{Error, Result};
use crate::types::TokenId;
use crate::util;

const SALT_SELECT: u64 = 0x5e1ec7;

/// Everything one generation call needs besides the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    /// Chunk length L.
    pub chunk_len: usize,
    pub criterion: Criterion,
    /// Drop chunks whose top first token is an error token.
    pub idk_filter: bool,
    pub decoding: Decoding,
    pub max_new_tokens: usize,
    pub stop_tokens: Vec<TokenId>,
    /// Token used to right-pad the context.
    pub pad_token: TokenId,
    /// Error ("I don't know") token ids; some vocabularies need several.
    pub error_tokens: Vec<TokenId>,
    /// Appended to the suffix when the IDK filter is active (the "answer
    /// Error if absent" instruction; a single reserved token in the toy
    /// vocabulary, empty to disable).
    pub idk_suffix: Vec<TokenId>,
    /// Also use the augmented suffix when scoring query likelihood.
    pub score_query_with_idk_suffix: bool,
    /// Separator between per-chunk answers in [`summ_generate`].
    pub summ_separator: Vec<TokenId>,
    /// Worker budget for the speculative prefill phase.
    pub workers: usize,
}

impl GenerationConfig {
    pub fn new(chunk_len: usize, pad_token: TokenId) -> Self {
        GenerationConfig {
            chunk_len,
            criterion: Criterion::MinEntropy,
            idk_filter: false,
            decoding: Decoding::Greedy,
            max_new_tokens: 16,
            stop_tokens: Vec::new(),
            pad_token,
            error_tokens: Vec::new(),
            idk_suffix: Vec::new(),
            score_query_with_idk_suffix: false,
            summ_separator: Vec::new(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_len < 1 {
            return Err(Error::usage("chunk length must be >= 1"));
        }
        if self.max_new_tokens < 1 {
            return Err(Error::usage("max_new_tokens must be >= 1"));
        }
        self.decoding.validate()
    }

    /// Suffix as the chunk prompts see it.
    fn effective_suffix(&self, parts: &PromptParts) -> Vec<TokenId> {
        let mut s = parts.suffix.clone();
        if self.idk_filter {
            s.extend_from_slice(&self.idk_suffix);
        }
        s
    }
}

/// One row of the selection trace, mirroring one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub index: usize,
    pub entropy_bits: f64,
    pub query_loglik: Option<f64>,
    pub is_idk: bool,
    pub selected: bool,
}

/// Record of one chunked-generation call: per-chunk scores, the surviving
/// set, and the decoded chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub rows: Vec<TraceRow>,
    pub kept: Vec<usize>,
    pub selected: usize,
    pub chunk_len: usize,
    pub pad_count: usize,
}

impl SelectionTrace {
    fn from_scores<S>(
        scores: &[ChunkScore<S>],
        kept: &[usize],
        selected: &[usize],
        chunk_len: usize,
        pad_count: usize,
    ) -> Self {
        SelectionTrace {
            rows: scores
                .iter()
                .map(|s| TraceRow {
                    index: s.index,
                    entropy_bits: s.entropy_bits,
                    query_loglik: s.query_loglik,
                    is_idk: s.is_idk,
                    selected: selected.contains(&s.index),
                })
                .collect(),
            kept: kept.to_vec(),
            selected: selected.first().copied().unwrap_or(0),
            chunk_len,
            pad_count,
        }
    }

    /// One record per chunk as comma-separated rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,entropy_bits,query_loglik,idk,selected\n");
        for r in &self.rows {
            let ll = match r.query_loglik {
                None => String::new(),
                Some(x) if x == f64::NEG_INFINITY => "-inf".to_string(),
                Some(x) => format!("{x:.6}"),
            };
            out.push_str(&format!(
                "{},{:.6},{},{},{}\n",
                r.index,
                r.entropy_bits,
                ll,
                r.is_idk as u8,
                r.selected as u8
            ));
        }
        out
    }
}

fn fill_query_logliks<B: Backend>(
    backend: &B,
    scores: &mut [ChunkScore<B::State>],
    parts: &PromptParts,
    cfg: &GenerationConfig,
    chunks: &[Vec<TokenId>],
) -> Result<()> {
    if parts.query_span.is_empty() {
        return Err(Error::usage(
            "criterion needs a query span but the prompt has none",
        ));
    }
    let suffix = if cfg.score_query_with_idk_suffix {
        cfg.effective_suffix(parts)
    } else {
        parts.suffix.clone()
    };
    let lls = util::par_try_map_indexed(cfg.workers, scores.len(), |i| {
        query_log_likelihood(
            backend,
            &parts.prefix,
            &chunks[i],
            &suffix,
            parts.query_span.clone(),
        )
    })
    .map_err(|(chunk, e)| e.in_chunk(chunk, "query scoring"))?;
    for (s, ll) in scores.iter_mut().zip(lls) {
        s.query_loglik = Some(ll);
    }
    Ok(())
}

/// Plain generation: prefill the whole prompt, then decode from its state.
///
/// Token-for-token, this is the chunked path with a single chunk, so the two
/// agree exactly when the context fits one chunk.
pub fn vanilla_generate<B: Backend>(
    backend: &B,
    prompt: &[TokenId],
    decoding: Decoding,
    max_new_tokens: usize,
    stop_tokens: &[TokenId],
) -> Result<Vec<TokenId>> {
    decoding.validate()?;
    if max_new_tokens < 1 {
        return Err(Error::usage("max_new_tokens must be >= 1"));
    }
    let seed = match decoding {
        Decoding::Greedy => 0,
        Decoding::Temperature { seed, .. } => seed,
    };
    let (state, dist) = backend.prefill(prompt)?;
    let mut first = Sampler::new(decoding, &[SALT_FIRST, 0, seed]);
    let first_token = first.pick(&dist);
    decode_with_sampler(
        backend,
        state,
        first_token,
        Sampler::new(decoding, &[SALT_DECODE]),
        max_new_tokens,
        stop_tokens,
    )
}

struct Prefilled<S> {
    scores: Vec<ChunkScore<S>>,
    kept: Vec<usize>,
    pad_count: usize,
}

/// Shared front half: chunk, prefill, optionally score the query, filter.
fn prefill_and_filter<B: Backend>(
    backend: &B,
    parts: &PromptParts,
    cfg: &GenerationConfig,
) -> Result<Prefilled<B::State>> {
    let chunk_set = make_chunks(&parts.context, cfg.chunk_len, cfg.pad_token)?;
    let suffix = cfg.effective_suffix(parts);
    let prompts = build_prompts(&parts.prefix, &chunk_set, &suffix);
    let mut scores = speculative_prefill(
        backend,
        &prompts,
        cfg.decoding,
        &cfg.error_tokens,
        cfg.workers,
    )?;
    if matches!(cfg.criterion, Criterion::MaxQueryLikelihood) {
        fill_query_logliks(backend, &mut scores, parts, cfg, chunk_set.chunks())?;
    }
    let kept = if cfg.idk_filter {
        idk_filter(&scores)
    } else {
        (0..scores.len()).collect()
    };
    Ok(Prefilled {
        scores,
        kept,
        pad_count: chunk_set.pad_count(),
    })
}

/// Full chunked generation: speculative prefill, IDK filter, selection, then
/// autoregressive decoding conditioned exclusively on the selected chunk.
///
/// An empty context falls back to plain generation over `[prefix, suffix]`.
pub fn oprm_generate<B: Backend>(
    backend: &B,
    parts: &PromptParts,
    cfg: &GenerationConfig,
) -> Result<(Vec<TokenId>, SelectionTrace)> {
    cfg.validate()?;
    if parts.context.is_empty() {
        let mut prompt = parts.prefix.clone();
        prompt.extend_from_slice(&parts.suffix);
        let answer = vanilla_generate(
            backend,
            &prompt,
            cfg.decoding,
            cfg.max_new_tokens,
            &cfg.stop_tokens,
        )?;
        return Ok((
            answer,
            SelectionTrace {
                rows: Vec::new(),
                kept: Vec::new(),
                selected: 0,
                chunk_len: cfg.chunk_len,
                pad_count: 0,
            },
        ));
    }

    let pre = prefill_and_filter(backend, parts, cfg)?;
    let mut rng = util::rng_for(
        match cfg.criterion {
            Criterion::Random { seed } => seed,
            _ => 0,
        },
        &[SALT_SELECT],
    );
    let j = select_chunk(&pre.scores, &pre.kept, cfg.criterion, &mut rng)?;
    let trace = SelectionTrace::from_scores(
        &pre.scores,
        &pre.kept,
        &[j],
        cfg.chunk_len,
        pre.pad_count,
    );
    let score = &pre.scores[j];
    let answer = decode_with_sampler(
        backend,
        score.state.clone(),
        score.first_token,
        Sampler::new(cfg.decoding, &[SALT_DECODE]),
        cfg.max_new_tokens,
        &cfg.stop_tokens,
    )
    .map_err(|e| e.in_chunk(j, "decode"))?;
    Ok((answer, trace))
}

/// Decode every kept chunk independently and concatenate the answers in
/// chunk order, separated by `cfg.summ_separator`.
pub fn summ_generate<B: Backend>(
    backend: &B,
    parts: &PromptParts,
    cfg: &GenerationConfig,
) -> Result<(Vec<TokenId>, SelectionTrace)> {
    cfg.validate()?;
    if parts.context.is_empty() {
        return oprm_generate(backend, parts, cfg);
    }
    let pre = prefill_and_filter(backend, parts, cfg)?;
    let answers = util::par_try_map_indexed(cfg.workers, pre.kept.len(), |ki| {
        let score = &pre.scores[pre.kept[ki]];
        decode_with_sampler(
            backend,
            score.state.clone(),
            score.first_token,
            Sampler::new(cfg.decoding, &[SALT_DECODE, pre.kept[ki] as u64]),
            cfg.max_new_tokens,
            &cfg.stop_tokens,
        )
    })
    .map_err(|(ki, e)| e.in_chunk(pre.kept[ki], "decode"))?;

    let mut combined = Vec::new();
    for (i, a) in answers.iter().enumerate() {
        if i > 0 {
            combined.extend_from_slice(&cfg.summ_separator);
        }
        combined.extend_from_slice(a);
    }
    let trace =
        SelectionTrace::from_scores(&pre.scores, &pre.kept, &pre.kept, cfg.chunk_len, pre.pad_count);
    Ok((combined, trace))
}

/// Rank the kept chunks by the criterion, keep the best `k`, re-prefill them
/// together (in original order) as one combined context, and decode that.
pub fn cc_generate<B: Backend>(
    backend: &B,
    parts: &PromptParts,
    k: usize,
    cfg: &GenerationConfig,
) -> Result<(Vec<TokenId>, SelectionTrace)> {
    cfg.validate()?;
    if k < 1 {
        return Err(Error::usage("combined-chunks k must be >= 1"));
    }
    if parts.context.is_empty() {
        return oprm_generate(backend, parts, cfg);
    }
    let chunk_set = make_chunks(&parts.context, cfg.chunk_len, cfg.pad_token)?;
    let pre = prefill_and_filter(backend, parts, cfg)?;

    let ranked = rank_chunks(&pre.scores, &pre.kept, cfg.criterion)?;
    let mut top: Vec<usize> = ranked.into_iter().take(k.min(pre.kept.len())).collect();
    top.sort_unstable();

    let mut combined_ctx = Vec::with_capacity(top.len() * cfg.chunk_len);
    for &i in &top {
        combined_ctx.extend_from_slice(&chunk_set.chunks()[i]);
    }
    let mut prompt = parts.prefix.clone();
    prompt.extend_from_slice(&combined_ctx);
    prompt.extend_from_slice(&cfg.effective_suffix(parts));

    let answer = vanilla_generate(
        backend,
        &prompt,
        cfg.decoding,
        cfg.max_new_tokens,
        &cfg.stop_tokens,
    )?;
    let trace =
        SelectionTrace::from_scores(&pre.scores, &pre.kept, &top, cfg.chunk_len, pre.pad_count);
    Ok((answer, trace))
}

/// Kept chunks ordered best-first under the criterion; ties go to the lower
/// chunk index.
fn rank_chunks<S>(
    scores: &[ChunkScore<S>],
    kept: &[usize],
    criterion: Criterion,
) -> Result<Vec<usize>> {
    let mut order = kept.to_vec();
    match criterion {
        Criterion::MinEntropy => {
            order.sort_by(|&a, &b| {
                scores[a]
                    .entropy_bits
                    .partial_cmp(&scores[b].entropy_bits)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
        }
        Criterion::MaxQueryLikelihood => {
            for &i in kept {
                if scores[i].query_loglik.is_none() {
                    return Err(Error::usage("query likelihood was not computed"));
                }
            }
            order.sort_by(|&a, &b| {
                scores[b]
                    .query_loglik
                    .unwrap()
                    .partial_cmp(&scores[a].query_loglik.unwrap())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
        }
        Criterion::Random { seed } => {
            let mut rng = util::rng_for(seed, &[SALT_SELECT]);
            let picks = rand::seq::index::sample(&mut rng, order.len(), order.len());
            order = picks.iter().map(|i| kept[i]).collect();
        }
        Criterion::FixedIndex { index } => {
            order.sort_by_key(|&i| (i.abs_diff(index), i));
        }
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::OutputDistribution;

    const VOCAB: usize = 12;
    const KEY: TokenId = 5;
    const ERR: TokenId = 1;
    const PAD: TokenId = 0;

    /// Retrieval oracle: once it has seen KEY it spells out `value_seq`
    /// token by token; otherwise it is either maximally uncertain or
    /// confidently predicts the error token.
    struct Oracle {
        value_seq: Vec<TokenId>,
        idk_when_missing: bool,
    }

    impl Oracle {
        fn dist_for(&self, tokens: &[TokenId]) -> OutputDistribution {
            // The query itself repeats the key, so the fact is only "known"
            // when the key also occurred in the context part.
            if tokens.iter().filter(|&&t| t == KEY).count() >= 2 {
                let produced = tokens
                    .iter()
                    .rev()
                    .take_while(|t| self.value_seq.contains(t))
                    .count();
                let next = self
                    .value_seq
                    .get(produced)
                    .copied()
                    .unwrap_or(*self.value_seq.last().unwrap());
                let mut p = vec![0.0; VOCAB];
                p[next as usize] = 1.0;
                OutputDistribution::from_probs(p).unwrap()
            } else if self.idk_when_missing {
                let mut p = vec![0.0; VOCAB];
                p[ERR as usize] = 1.0;
                OutputDistribution::from_probs(p).unwrap()
            } else {
                OutputDistribution::from_probs(vec![1.0 / VOCAB as f64; VOCAB]).unwrap()
            }
        }
    }

    impl Backend for Oracle {
        type State = Vec<TokenId>;

        fn prefill(&self, tokens: &[TokenId]) -> Result<(Vec<TokenId>, OutputDistribution)> {
            let state = tokens.to_vec();
            let dist = self.dist_for(&state);
            Ok((state, dist))
        }

        fn step(&self, state: &mut Vec<TokenId>, token: TokenId) -> Result<OutputDistribution> {
            state.push(token);
            Ok(self.dist_for(state))
        }

        fn vocab_size(&self) -> usize {
            VOCAB
        }
    }

    fn parts_with_key_in_third_chunk() -> PromptParts {
        // Chunks of 4: [6,6,6,6] [7,7,7,7] [6,5,9,6] -> key in chunk 2.
        PromptParts::new(
            vec![],
            vec![6, 6, 6, 6, 7, 7, 7, 7, 6, KEY, 9, 6],
            vec![KEY, 2],
            0..1,
        )
        .unwrap()
    }

    #[test]
    fn entropy_criterion_finds_the_key_chunk() {
        let oracle = Oracle {
            value_seq: vec![10, 11],
            idk_when_missing: false,
        };
        let mut cfg = GenerationConfig::new(4, PAD);
        cfg.max_new_tokens = 2;
        let (answer, trace) =
            oprm_generate(&oracle, &parts_with_key_in_third_chunk(), &cfg).unwrap();
        assert_eq!(trace.selected, 2);
        assert_eq!(answer, vec![10, 11]);
        assert_eq!(trace.rows.len(), 3);
        assert!(trace.rows[2].entropy_bits < trace.rows[0].entropy_bits);
    }

    #[test]
    fn idk_filter_drops_error_chunks() {
        let oracle = Oracle {
            value_seq: vec![10, 11],
            idk_when_missing: true,
        };
        let mut cfg = GenerationConfig::new(4, PAD);
        cfg.max_new_tokens = 2;
        cfg.idk_filter = true;
        cfg.error_tokens = vec![ERR];
        let (answer, trace) =
            oprm_generate(&oracle, &parts_with_key_in_third_chunk(), &cfg).unwrap();
        assert_eq!(trace.kept, vec![2]);
        assert_eq!(answer, vec![10, 11]);
        // Without the key anywhere, every chunk predicts ERR and the first
        // chunk is retained.
        let no_key = PromptParts::new(vec![], vec![6; 8], vec![KEY, 2], 0..1).unwrap();
        let (_, trace) = oprm_generate(&oracle, &no_key, &cfg).unwrap();
        assert_eq!(trace.kept, vec![0]);
        assert_eq!(trace.selected, 0);
    }

    #[test]
    fn single_chunk_equals_vanilla_on_padded_prompt() {
        let oracle = Oracle {
            value_seq: vec![10, 11, 10],
            idk_when_missing: false,
        };
        // Context shorter than the chunk, so it gets padded to length 6.
        let parts = PromptParts::new(vec![8], vec![6, KEY, 9], vec![KEY, 2], 0..1).unwrap();
        for decoding in [
            Decoding::Greedy,
            Decoding::Temperature {
                temperature: 0.8,
                seed: 42,
            },
        ] {
            let mut cfg = GenerationConfig::new(6, PAD);
            cfg.max_new_tokens = 3;
            cfg.decoding = decoding;
            let (chunked, trace) = oprm_generate(&oracle, &parts, &cfg).unwrap();
            assert_eq!(trace.rows.len(), 1);
            assert_eq!(trace.pad_count, 3);
            let padded: Vec<TokenId> = vec![8, 6, KEY, 9, PAD, PAD, PAD, KEY, 2];
            let vanilla = vanilla_generate(&oracle, &padded, decoding, 3, &[]).unwrap();
            assert_eq!(chunked, vanilla);
        }
    }

    #[test]
    fn empty_context_passes_through() {
        let oracle = Oracle {
            value_seq: vec![10],
            idk_when_missing: false,
        };
        let parts = PromptParts::new(vec![6, KEY], vec![], vec![KEY, 2], 0..1).unwrap();
        let mut cfg = GenerationConfig::new(4, PAD);
        cfg.max_new_tokens = 1;
        let (answer, trace) = oprm_generate(&oracle, &parts, &cfg).unwrap();
        assert_eq!(answer, vec![10]);
        assert!(trace.rows.is_empty());
    }

    #[test]
    fn summ_concatenates_kept_answers_in_chunk_order() {
        // Every chunk contains the key, so each decodes the value sequence.
        let oracle = Oracle {
            value_seq: vec![10, 11],
            idk_when_missing: false,
        };
        let parts =
            PromptParts::new(vec![], vec![KEY, 6, KEY, 7, KEY, 8], vec![KEY, 2], 0..1).unwrap();
        let mut cfg = GenerationConfig::new(2, PAD);
        cfg.max_new_tokens = 2;
        cfg.summ_separator = vec![3];
        let (answer, trace) = summ_generate(&oracle, &parts, &cfg).unwrap();
        assert_eq!(answer, vec![10, 11, 3, 10, 11, 3, 10, 11]);
        assert_eq!(trace.kept, vec![0, 1, 2]);
        assert!(answer.len() <= 3 * (cfg.max_new_tokens + cfg.summ_separator.len()));
    }

    #[test]
    fn summ_single_chunk_equals_oprm() {
        let oracle = Oracle {
            value_seq: vec![10, 11],
            idk_when_missing: false,
        };
        let parts = PromptParts::new(vec![], vec![KEY, 9], vec![KEY, 2], 0..1).unwrap();
        let mut cfg = GenerationConfig::new(4, PAD);
        cfg.max_new_tokens = 2;
        let (a, _) = summ_generate(&oracle, &parts, &cfg).unwrap();
        let (b, _) = oprm_generate(&oracle, &parts, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cc_top1_equals_oprm_and_topb_equals_vanilla() {
        let oracle = Oracle {
            value_seq: vec![10, 11],
            idk_when_missing: false,
        };
        let parts = parts_with_key_in_third_chunk();
        let mut cfg = GenerationConfig::new(4, PAD);
        cfg.max_new_tokens = 2;

        let (cc1, t1) = cc_generate(&oracle, &parts, 1, &cfg).unwrap();
        let (op, t2) = oprm_generate(&oracle, &parts, &cfg).unwrap();
        assert_eq!(cc1, op);
        assert_eq!(t1.selected, t2.selected);

        let (ccb, _) = cc_generate(&oracle, &parts, 3, &cfg).unwrap();
        let mut padded = parts.context.clone();
        padded.extend_from_slice(&parts.suffix);
        let vanilla = vanilla_generate(&oracle, &padded, Decoding::Greedy, 2, &[]).unwrap();
        assert_eq!(ccb, vanilla);

        // k beyond the kept size degrades to all kept chunks.
        let (ccbig, _) = cc_generate(&oracle, &parts, 99, &cfg).unwrap();
        assert_eq!(ccbig, ccb);
    }

    #[test]
    fn cc_ranking_matches_brute_force_sort() {
        let oracle = Oracle {
            value_seq: vec![10],
            idk_when_missing: false,
        };
        let parts = parts_with_key_in_third_chunk();
        let cfg = GenerationConfig::new(4, PAD);
        let pre = prefill_and_filter(&oracle, &parts, &cfg).unwrap();
        let ranked = rank_chunks(&pre.scores, &pre.kept, Criterion::MinEntropy).unwrap();
        let mut expect = pre.kept.clone();
        expect.sort_by(|&a, &b| {
            pre.scores[a]
                .entropy_bits
                .partial_cmp(&pre.scores[b].entropy_bits)
                .unwrap()
                .then(a.cmp(&b))
        });
        assert_eq!(ranked, expect);
    }

    #[test]
    fn trace_csv_shape() {
        let oracle = Oracle {
            value_seq: vec![10],
            idk_when_missing: false,
        };
        let mut cfg = GenerationConfig::new(4, PAD);
        cfg.max_new_tokens = 1;
        let (_, trace) = oprm_generate(&oracle, &parts_with_key_in_third_chunk(), &cfg).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "index,entropy_bits,query_loglik,idk,selected");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(",1"), "selected flag on chunk 2: {}", lines[3]);
    }

    #[test]
    fn results_independent_of_worker_count() {
        let oracle = Oracle {
            value_seq: vec![10, 11],
            idk_when_missing: false,
        };
        let parts = parts_with_key_in_third_chunk();
        let mut base = None;
        for workers in [1, 2, 5] {
            let mut cfg = GenerationConfig::new(2, PAD);
            cfg.max_new_tokens = 2;
            cfg.workers = workers;
            let out = oprm_generate(&oracle, &parts, &cfg).unwrap();
            match &base {
                None => base = Some(out),
                Some(b) => assert_eq!(*b, out),
            }
        }
    }
}
