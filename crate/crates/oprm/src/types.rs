use crate::error::{Error, Result};

/// Token identifier; all ids are indices into a [`crate::Vocab`].
pub type TokenId = u32;

/// A normalized next-token distribution over the vocabulary.
///
/// Invariants: every entry is nonnegative and finite, entries sum to 1
/// within 1e-6. Constructors enforce this.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistribution {
    probs: Vec<f64>,
}

impl OutputDistribution {
    /// Softmax over raw logits, computed stably in 64-bit.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::usage("logits must be nonempty"));
        }
        let mut max = f64::NEG_INFINITY;
        for &z in logits {
            if !z.is_finite() {
                return Err(Error::numeric(0, format!("non-finite logit {z}")));
            }
            if z > max {
                max = z;
            }
        }
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        Ok(OutputDistribution { probs })
    }

    /// Wrap an already-normalized probability vector, validating it.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let d = OutputDistribution { probs };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::usage("distribution must be nonempty"));
        }
        let mut sum = 0.0;
        for &p in &self.probs {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::numeric(0, format!("bad probability {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::numeric(0, format!("probabilities sum to {sum}")));
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    /// Highest-probability token; ties resolve to the lowest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}
