//! Overflow-prevention inference for fixed-state recurrent language models.
//!
//! Recurrent (state-space) language models compress the whole context into a
//! fixed-size hidden state. When the context carries more information than the
//! state can hold, retrieval degrades — the state *overflows*. This crate
//! provides, at desk scale:
//!
//! - [`model`] — a trainable 2-layer gated-S6 reference backend: forward pass,
//!   constant-cost streaming steps, manual backprop-through-time, an AdamW
//!   update, and a finite-difference gradient oracle.
//! - [`engine`] — the overflow-prevention inference engine: the context is
//!   split into fixed-size chunks, every chunk is prefilled speculatively, a
//!   confidence criterion (min entropy, query likelihood, random, fixed index)
//!   plus an IDK filter selects one chunk, and the answer is decoded from that
//!   chunk's state alone. Decode-all (`summ`) and combined-chunks variants are
//!   included.
//! - [`ar`] — an associative-recall laboratory: synthetic key-value datasets,
//!   the controlled training protocol, accuracy-vs-facts curves, capacity
//!   reports, positional histograms, and length-sensitivity sweeps.
//! - [`harness`] — config files, run manifests, CSV/SVG export, and the
//!   orchestration behind the `oprm` CLI (`train`, `eval`, `bench`,
//!   `oprm-run`, `gen-data`).
//!
//! Every run is deterministic given its config and seed; see the runnable
//! programs under `examples/` for end-to-end tours of each capability.

pub mod ar;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod types;
pub mod util;
pub mod vocab;

pub use error::{Error, Result};
pub use types::{OutputDistribution, TokenId};
pub use vocab::Vocab;
