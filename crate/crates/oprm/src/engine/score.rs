use super::backend::Backend;
use super::decode::{Sampler, SALT_FIRST};
use super::Decoding;
use crate::error::{Error, Result};
use crate::types::{OutputDistribution, TokenId};
use crate::util;

/// Per-chunk products of the speculative prefill phase.
#[derive(Debug, Clone)]
pub struct ChunkScore<S> {
    pub index: usize,
    /// State after processing `[prefix, chunk, suffix]`.
    pub state: S,
    /// Distribution of the first answer token.
    pub first_dist: OutputDistribution,
    /// Shannon entropy of `first_dist`, in bits.
    pub entropy_bits: f64,
    /// Teacher-forced query log-likelihood (log2); None until computed.
    pub query_loglik: Option<f64>,
    /// First answer token under the decoding rule.
    pub first_token: TokenId,
    /// Whether the argmax of `first_dist` is an error ("I don't know") token.
    pub is_idk: bool,
}

/// Shannon entropy in bits, with 0 * log 0 = 0.
///
/// Low entropy means a confident first token, which is the selection signal:
/// the chunk holding the queried information yields a peaked distribution
/// while irrelevant chunks spread mass and score high.
pub fn entropy_score(dist: &OutputDistribution) -> f64 {
    debug_assert!(dist.validate().is_ok());
    let mut h = 0.0;
    for &p in dist.probs() {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    h
}

/// Prefill every per-chunk prompt independently, with up to `workers`
/// threads, and score each one.
///
/// Results are ordered by chunk index and are bit-identical for every worker
/// count and execution interleaving. A backend failure on chunk `i` fails
/// the whole call with that chunk index attached (the lowest index, if
/// several fail).
pub fn speculative_prefill<B: Backend>(
    backend: &B,
    prompts: &[Vec<TokenId>],
    decoding: Decoding,
    error_tokens: &[TokenId],
    workers: usize,
) -> Result<Vec<ChunkScore<B::State>>> {
    if prompts.is_empty() {
        return Err(Error::usage("speculative prefill needs at least one prompt"));
    }
    let seed = match decoding {
        Decoding::Temperature { seed, .. } => seed,
        Decoding::Greedy => 0,
    };
    util::par_try_map_indexed(workers, prompts.len(), |i| -> Result<ChunkScore<B::State>> {
        let (state, first_dist) = backend.prefill(&prompts[i])?;
        // Per-chunk sampling stream: results cannot depend on which worker
        // ran the chunk.
        let mut sampler = Sampler::new(decoding, &[SALT_FIRST, i as u64, seed]);
        let first_token = sampler.pick(&first_dist);
        let is_idk = error_tokens.contains(&first_dist.argmax());
        Ok(ChunkScore {
            index: i,
            entropy_bits: entropy_score(&first_dist),
            query_loglik: None,
            first_token,
            is_idk,
            state,
            first_dist,
        })
    })
    .map_err(|(chunk, e)| e.in_chunk(chunk, "speculative prefill"))
}

/// Teacher-forced log2-likelihood of the query tokens, conditioned on
/// `[prefix, chunk, suffix-before-query]`.
///
/// Computed entirely in log space; a zero-probability query token makes the
/// result -inf rather than collapsing the whole product to zero.
pub fn query_log_likelihood<B: Backend>(
    backend: &B,
    prefix: &[TokenId],
    chunk: &[TokenId],
    suffix: &[TokenId],
    query_span: std::ops::Range<usize>,
) -> Result<f64> {
    if query_span.is_empty() {
        return Err(Error::usage("query span is empty"));
    }
    if query_span.end > suffix.len() {
        return Err(Error::usage("query span outside suffix"));
    }
    let mut conditioning: Vec<TokenId> = Vec::new();
    conditioning.extend_from_slice(prefix);
    conditioning.extend_from_slice(chunk);
    conditioning.extend_from_slice(&suffix[..query_span.start]);
    if conditioning.is_empty() {
        return Err(Error::usage(
            "query likelihood needs nonempty conditioning before the query",
        ));
    }
    let (mut state, mut dist) = backend.prefill(&conditioning)?;
    let mut loglik = 0.0;
    for &q in &suffix[query_span.clone()] {
        let p = dist.prob(q);
        loglik += if p > 0.0 { p.log2() } else { f64::NEG_INFINITY };
        dist = backend.step(&mut state, q)?;
    }
    Ok(loglik)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_entropy_is_log2_v() {
        let d = OutputDistribution::from_probs(vec![0.25; 4]).unwrap();
        assert!((entropy_score(&d) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_entropy_is_zero() {
        let d = OutputDistribution::from_probs(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(entropy_score(&d), 0.0);
    }

    #[test]
    fn two_equiprobable_outcomes_give_one_bit() {
        let d = OutputDistribution::from_probs(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!((entropy_score(&d) - 1.0).abs() < 1e-12);
    }

    /// Backend that returns a fixed distribution keyed on the first prompt
    /// token and steps through scripted per-token probabilities.
    struct Scripted {
        dists: Vec<Vec<f64>>,
    }

    impl Backend for Scripted {
        type State = usize;

        fn prefill(&self, tokens: &[TokenId]) -> Result<(usize, OutputDistribution)> {
            let i = tokens[0] as usize % self.dists.len();
            Ok((i, OutputDistribution::from_probs(self.dists[i].clone())?))
        }

        fn step(&self, state: &mut usize, _token: TokenId) -> Result<OutputDistribution> {
            *state = (*state + 1) % self.dists.len();
            OutputDistribution::from_probs(self.dists[*state].clone())
        }

        fn vocab_size(&self) -> usize {
            self.dists[0].len()
        }
    }

    #[test]
    fn prefill_scores_match_scripted_distributions() {
        let b = Scripted {
            dists: vec![vec![0.25; 4], vec![0.0, 1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0, 0.0]],
        };
        let prompts: Vec<Vec<TokenId>> = vec![vec![0], vec![1], vec![2]];
        for workers in [1, 2, 4] {
            let scores =
                speculative_prefill(&b, &prompts, Decoding::Greedy, &[1], workers).unwrap();
            assert_eq!(scores.len(), 3);
            assert!((scores[0].entropy_bits - 2.0).abs() < 1e-12);
            assert_eq!(scores[1].entropy_bits, 0.0);
            assert!((scores[2].entropy_bits - 1.0).abs() < 1e-12);
            // Chunk 1 predicts token 1, which is in the error set.
            assert!(!scores[0].is_idk);
            assert!(scores[1].is_idk);
            assert!(!scores[2].is_idk);
            assert_eq!(
                scores.iter().map(|s| s.index).collect::<Vec<_>>(),
                vec![0, 1, 2]
            );
        }
    }

    #[test]
    fn query_likelihood_hand_product() {
        // p(q1) = 0.5 then p(q2) = 0.25: log2(0.125) = -3.
        let b = Scripted {
            dists: vec![vec![0.5, 0.25, 0.25, 0.0], vec![0.25, 0.25, 0.25, 0.25]],
        };
        // Conditioning [0] -> state 0 -> dist0; q
        let ll = query_log_likelihood(&b, &[], &[0], &[0, 1], 0..2).unwrap();
        assert!((ll - (-3.0)).abs() < 1e-12, "{ll}");
    }

    #[test]
    fn zero_probability_token_gives_neg_infinity() {
        let b = Scripted {
            dists: vec![vec![0.5, 0.5, 0.0, 0.0]],
        };
        let ll = query_log_likelihood(&b, &[], &[0], &[2], 0..1).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn always_one_hot_on_query_gives_zero() {
        let b = Scripted {
            dists: vec![vec![0.0, 1.0, 0.0, 0.0]],
        };
        let ll = query_log_likelihood(&b, &[], &[0], &[1, 1], 0..2).unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn empty_query_rejected() {
        let b = Scripted {
            dists: vec![vec![1.0]],
        };
        assert!(query_log_likelihood(&b, &[], &[0], &[0], 0..0).is_err());
    }
}
