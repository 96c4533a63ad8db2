//! Property tests for the chunking, selection, and generation invariants.

mod common;

use common::{one_hot, uniform, FnBackend};
use oprm::engine::{
    build_prompts, idk_filter, make_chunks, oprm_generate, select_chunk, vanilla_generate,
    ChunkScore, Criterion, Decoding, GenerationConfig, PromptParts,
};
use oprm::{OutputDistribution, TokenId};
use proptest::prelude::*;

proptest! {
    /// Stripping the pad tokens from the chunk concatenation reproduces the
    /// context for any (|C|, L).
    #[test]
    fn chunk_roundtrip(len in 1usize..300, chunk_len in 1usize..64) {
        let context: Vec<TokenId> = (0..len as u32).map(|i| i % 97 + 1).collect();
        let set = make_chunks(&context, chunk_len, 0).unwrap();
        prop_assert!(set.pad_count() < chunk_len);
        prop_assert_eq!(set.count() * chunk_len, context.len() + set.pad_count());
        prop_assert_eq!(set.reconstruct_context(), context);
    }

    /// Every prompt has length |P| + L + |S|.
    #[test]
    fn prompt_length_bookkeeping(
        len in 1usize..200,
        chunk_len in 1usize..32,
        p_len in 0usize..8,
        s_len in 0usize..8,
    ) {
        let context: Vec<TokenId> = vec![5; len];
        let prefix: Vec<TokenId> = vec![1; p_len];
        let suffix: Vec<TokenId> = vec![2; s_len];
        let set = make_chunks(&context, chunk_len, 0).unwrap();
        let prompts = build_prompts(&prefix, &set, &suffix);
        prop_assert_eq!(prompts.len(), set.count());
        for p in prompts {
            prop_assert_eq!(p.len(), p_len + chunk_len + s_len);
        }
    }

    /// Engine selection equals a brute-force oracle with lowest-index
    /// tie-breaking, on randomized score vectors.
    #[test]
    fn selection_matches_brute_force(
        entropies in prop::collection::vec(0.0f64..8.0, 1..12),
        raw_kept in prop::collection::vec(any::<bool>(), 1..12),
    ) {
        let n = entropies.len().min(raw_kept.len());
        let scores: Vec<ChunkScore<()>> = (0..n)
            .map(|i| ChunkScore {
                index: i,
                state: (),
                first_dist: OutputDistribution::from_probs(vec![1.0]).unwrap(),
                entropy_bits: entropies[i],
                query_loglik: Some(-entropies[i]),
                first_token: 0,
                is_idk: false,
            })
            .collect();
        let kept: Vec<usize> = (0..n).filter(|&i| raw_kept[i]).collect();
        prop_assume!(!kept.is_empty());
        let mut rng = oprm::util::rng_for(0, &[]);

        let got = select_chunk(&scores, &kept, Criterion::MinEntropy, &mut rng).unwrap();
        let mut best = kept[0];
        for &i in &kept {
            if scores[i].entropy_bits < scores[best].entropy_bits {
                best = i;
            }
        }
        prop_assert_eq!(got, best);

        let got = select_chunk(&scores, &kept, Criterion::MaxQueryLikelihood, &mut rng).unwrap();
        let mut best = kept[0];
        for &i in &kept {
            if scores[i].query_loglik.unwrap() > scores[best].query_loglik.unwrap() {
                best = i;
            }
        }
        prop_assert_eq!(got, best);
    }

    /// The IDK filter equals the set comprehension plus the all-error
    /// fallback for every flag pattern up to b = 10.
    #[test]
    fn idk_filter_matches_comprehension(flags in prop::collection::vec(any::<bool>(), 1..=10)) {
        let scores: Vec<ChunkScore<()>> = flags
            .iter()
            .enumerate()
            .map(|(i, &idk)| ChunkScore {
                index: i,
                state: (),
                first_dist: OutputDistribution::from_probs(vec![1.0]).unwrap(),
                entropy_bits: 0.0,
                query_loglik: None,
                first_token: 0,
                is_idk: idk,
            })
            .collect();
        let expect: Vec<usize> = if flags.iter().all(|&f| f) {
            vec![0]
        } else {
            flags.iter().enumerate().filter(|(_, &f)| !f).map(|(i, _)| i).collect()
        };
        prop_assert_eq!(idk_filter(&scores), expect);
    }
}

/// b = 1 with the filter off makes chunked generation token-identical to
/// vanilla generation on the padded prompt, under greedy and sampling.
#[test]
fn single_chunk_degenerates_to_vanilla() {
    let vocab = 16usize;
    let backend = FnBackend {
        vocab,
        f: move |tokens: &[TokenId]| {
            // Pseudo-random but deterministic distribution from history.
            let h = tokens.iter().fold(7u64, |acc, &t| {
                acc.wrapping_mul(6364136223846793005).wrapping_add(t as u64)
            });
            let mut p: Vec<f64> = (0..vocab)
                .map(|i| ((h >> (i % 48)) & 0xff) as f64 + 1.0)
                .collect();
            let s: f64 = p.iter().sum();
            for v in &mut p {
                *v /= s;
            }
            p
        },
    };
    for decoding in [
        Decoding::Greedy,
        Decoding::Temperature {
            temperature: 0.7,
            seed: 11,
        },
    ] {
        let parts = PromptParts::new(vec![3], vec![4, 5, 6], vec![7, 8], 0..1).unwrap();
        let mut cfg = GenerationConfig::new(5, 0);
        cfg.decoding = decoding;
        cfg.max_new_tokens = 6;
        let (chunked, trace) = oprm_generate(&backend, &parts, &cfg).unwrap();
        assert_eq!(trace.rows.len(), 1);
        // Padded prompt: prefix, context padded to 5 with pad 0, suffix.
        let padded: Vec<TokenId> = vec![3, 4, 5, 6, 0, 0, 7, 8];
        let vanilla = vanilla_generate(&backend, &padded, decoding, 6, &[]).unwrap();
        assert_eq!(chunked, vanilla);
    }
}

/// Scripted-oracle end-to-end: entropy selection decodes the gold value
/// from the one chunk that holds the queried fact.
#[test]
fn oracle_entropy_selects_gold_chunk() {
    let vocab = 32usize;
    let key: TokenId = 9;
    let gold: TokenId = 21;
    let backend = FnBackend {
        vocab,
        f: move |tokens: &[TokenId]| {
            let key_hits = tokens.iter().filter(|&&t| t == key).count();
            if key_hits >= 2 {
                one_hot(vocab, gold)
            } else {
                uniform(vocab)
            }
        },
    };
    // Key sits in the third of four chunks.
    let mut context = vec![1u32; 16];
    context[9] = key;
    let parts = PromptParts::new(vec![], context, vec![key, 2], 0..1).unwrap();
    let mut cfg = GenerationConfig::new(4, 0);
    cfg.max_new_tokens = 1;
    let (answer, trace) = oprm_generate(&backend, &parts, &cfg).unwrap();
    assert_eq!(trace.selected, 2);
    assert_eq!(answer, vec![gold]);
}
