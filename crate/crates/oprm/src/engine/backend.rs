use crate::error::Result;
use crate::model::{HiddenState, ModelParams};
use crate::types::{OutputDistribution, TokenId};

/// Contract the inference engine needs from a recurrent model.
///
/// Forward calls are pure with respect to the backend: any number of
/// prefills and steps may run concurrently on disjoint states, and identical
/// inputs must produce bit-identical outputs within a process.
pub trait Backend: Sync {
    /// Fixed-size recurrent state. Cloning must be cheap relative to a
    /// prefill (states are cloned once per decode).
    type State: Clone + Send + Sync;

    /// Run a whole token sequence from an empty state; return the state and
    /// the next-token distribution at the last position.
    fn prefill(&self, tokens: &[TokenId]) -> Result<(Self::State, OutputDistribution)>;

    /// Advance one token. Constant time and space in tokens consumed so far.
    fn step(&self, state: &mut Self::State, token: TokenId) -> Result<OutputDistribution>;

    fn vocab_size(&self) -> usize;
}

impl Backend for ModelParams {
    type State = HiddenState;

    fn prefill(&self, tokens: &[TokenId]) -> Result<(HiddenState, OutputDistribution)> {
        ModelParams::prefill(self, tokens)
    }

    fn step(&self, state: &mut HiddenState, token: TokenId) -> Result<OutputDistribution> {
        ModelParams::step(self, state, token)
    }

    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }
}
