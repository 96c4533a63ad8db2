use super::score::ChunkScore;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Chunk selection criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Criterion {
    /// Lowest first-token entropy.
    MinEntropy,
    /// Highest teacher-forced query log-likelihood.
    MaxQueryLikelihood,
    /// Uniform over the kept chunks; baseline.
    Random { seed: u64 },
    /// A caller-chosen chunk, clamped to the kept set.
    FixedIndex { index: usize },
}

/// Indices of chunks whose top first token is not an error token.
/// If every chunk predicts an error token, the first chunk is retained.
pub fn idk_filter<S>(scores: &[ChunkScore<S>]) -> Vec<usize> {
    let kept: Vec<usize> = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.is_idk)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        vec![0]
    } else {
        kept
    }
}

/// Pick one chunk index out of `kept`. Ties break to the lowest chunk index.
pub fn select_chunk<S, R: Rng>(
    scores: &[ChunkScore<S>],
    kept: &[usize],
    criterion: Criterion,
    rng: &mut R,
) -> Result<usize> {
    if kept.is_empty() {
        return Err(Error::usage("kept chunk set is empty"));
    }
    debug_assert!(kept.windows(2).all(|w| w[0] < w[1]));
    match criterion {
        Criterion::MinEntropy => {
            let mut best = kept[0];
            for &i in &kept[1..] {
                if scores[i].entropy_bits < scores[best].entropy_bits {
                    best = i;
                }
            }
            Ok(best)
        }
        Criterion::MaxQueryLikelihood => {
            let mut best = kept[0];
            for &i in kept {
                let cur = scores[i]
                    .query_loglik
                    .ok_or_else(|| Error::usage("query likelihood was not computed"))?;
                let b = scores[best].query_loglik.unwrap();
                if cur > b {
                    best = i;
                }
            }
            Ok(best)
        }
        Criterion::Random { .. } => Ok(kept[rng.random_range(0..kept.len())]),
        Criterion::FixedIndex { index } => {
            // Nearest kept index by absolute distance; ties go low.
            let mut best = kept[0];
            let mut best_d = kept[0].abs_diff(index);
            for &i in &kept[1..] {
                let d = i.abs_diff(index);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::OutputDistribution;

    fn score(i: usize, entropy: f64, loglik: Option<f64>, idk: bool) -> ChunkScore<()> {
        ChunkScore {
            index: i,
            state: (),
            first_dist: OutputDistribution::from_probs(vec![1.0]).unwrap(),
            entropy_bits: entropy,
            query_loglik: loglik,
            first_token: 0,
            is_idk: idk,
        }
    }

    fn rng() -> rand_chacha::ChaCha8Rng {
        crate::util::rng_for(0, &[])
    }

    #[test]
    fn idk_filter_keeps_non_error_chunks() {
        let s = vec![score(0, 0.0, None, true), score(1, 0.0, None, false), score(2, 0.0, None, true)];
        assert_eq!(idk_filter(&s), vec![1]);
    }

    #[test]
    fn idk_filter_all_error_falls_back_to_first() {
        let s = vec![score(0, 0.0, None, true), score(1, 0.0, None, true)];
        assert_eq!(idk_filter(&s), vec![0]);
    }

    #[test]
    fn idk_filter_none_error_keeps_all() {
        let s = vec![score(0, 0.0, None, false), score(1, 0.0, None, false)];
        assert_eq!(idk_filter(&s), vec![0, 1]);
    }

    #[test]
    fn min_entropy_with_tie_breaks_low() {
        let s = vec![score(0, 1.2, None, false), score(1, 0.3, None, false), score(2, 0.3, None, false)];
        let j = select_chunk(&s, &[0, 1, 2], Criterion::MinEntropy, &mut rng()).unwrap();
        assert_eq!(j, 1);
    }

    #[test]
    fn singleton_kept_wins_for_any_criterion() {
        let s = vec![score(0, 0.0, Some(0.0), false), score(1, 9.0, Some(-9.0), false), score(2, 5.0, Some(-5.0), false)];
        for c in [
            Criterion::MinEntropy,
            Criterion::MaxQueryLikelihood,
            Criterion::Random { seed: 3 },
            Criterion::FixedIndex { index: 0 },
        ] {
            assert_eq!(select_chunk(&s, &[2], c, &mut rng()).unwrap(), 2);
        }
    }

    #[test]
    fn max_likelihood_orders_including_neg_inf() {
        let s = vec![
            score(0, 0.0, Some(f64::NEG_INFINITY), false),
            score(1, 0.0, Some(-3.0), false),
            score(2, 0.0, Some(-1.0), false),
        ];
        let j = select_chunk(&s, &[0, 1, 2], Criterion::MaxQueryLikelihood, &mut rng()).unwrap();
        assert_eq!(j, 2);
    }

    #[test]
    fn max_likelihood_without_loglik_is_usage_error() {
        let s = vec![score(0, 0.0, None, false)];
        assert!(select_chunk(&s, &[0], Criterion::MaxQueryLikelihood, &mut rng()).is_err());
    }

    #[test]
    fn fixed_index_clamps_to_kept() {
        let s = vec![
            score(0, 0.0, None, false),
            score(1, 0.0, None, false),
            score(2, 0.0, None, false),
            score(3, 0.0, None, false),
        ];
        // Out-of-range index clamps to the nearest kept chunk.
        assert_eq!(
            select_chunk(&s, &[1, 2], Criterion::FixedIndex { index: 9 }, &mut rng()).unwrap(),
            2
        );
        assert_eq!(
            select_chunk(&s, &[1, 2], Criterion::FixedIndex { index: 0 }, &mut rng()).unwrap(),
            1
        );
        assert_eq!(
            select_chunk(&s, &[0, 3], Criterion::FixedIndex { index: 3 }, &mut rng()).unwrap(),
            3
        );
    }

    #[test]
    fn random_stays_inside_kept() {
        let s: Vec<ChunkScore<()>> = (0..6).map(|i| score(i, 0.0, None, false)).collect();
        let kept = vec![1, 3, 5];
        let mut r = rng();
        for _ in 0..50 {
            let j = select_chunk(&s, &kept, Criterion::Random { seed: 0 }, &mut r).unwrap();
            assert!(kept.contains(&j));
        }
    }
}
