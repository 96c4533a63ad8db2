//! Chunked speculative prefill with selective decoding.
//!
//! A prompt `[prefix, context, suffix]` is handled in three phases:
//! the context is right-padded and split into fixed-size chunks; every
//! per-chunk prompt `[prefix, chunk_i, suffix]` is prefilled independently
//! (and in parallel); then exactly one chunk's state is decoded, picked by a
//! confidence criterion after an optional IDK filter. Decoding cost and
//! memory are therefore independent of the original context length.

mod backend;
mod chunks;
mod decode;
mod generate;
mod score;
mod select;

pub use backend::Backend;
pub use chunks::{build_prompts, make_chunks, ChunkSet, PromptParts};
pub use decode::{decode_autoregressive, Decoding};
pub use generate::{
    cc_generate, oprm_generate, summ_generate, vanilla_generate, GenerationConfig,
    SelectionTrace, TraceRow,
};
pub use score::{entropy_score, query_log_likelihood, speculative_prefill, ChunkScore};
pub use select::{idk_filter, select_chunk, Criterion};
