use crate::error::{Error, Result};
use crate::types::TokenId;

/// One training sequence with its supervised positions.
///
/// A target `(pos, gold)` scores the model's output distribution after it has
/// consumed `tokens[..=pos]` against `gold`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSample {
    pub tokens: Vec<TokenId>,
    pub targets: Vec<(usize, TokenId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainBatch {
    pub samples: Vec<TrainSample>,
}

impl TrainBatch {
    pub fn target_count(&self) -> usize {
        self.samples.iter().map(|s| s.targets.len()).sum()
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::usage("batch must contain at least one sample"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.tokens.is_empty() {
                return Err(Error::usage(format!("sample {i} has no tokens")));
            }
            if s.tokens.iter().any(|&t| t as usize >= vocab_size) {
                return Err(Error::usage(format!("sample {i} has out-of-vocab token")));
            }
            for &(pos, gold) in &s.targets {
                if pos >= s.tokens.len() {
                    return Err(Error::usage(format!(
                        "sample {i} target position {pos} outside sequence of length {}",
                        s.tokens.len()
                    )));
                }
                if gold as usize >= vocab_size {
                    return Err(Error::usage(format!("sample {i} has out-of-vocab gold")));
                }
            }
        }
        Ok(())
    }
}
