//! Associative-recall laboratory.
//!
//! Synthetic key-value datasets in two protocols (single-token facts for
//! controlled training; 3-letter keys with 5-digit values for zero-shot
//! probing), the controlled training loop, accuracy-vs-facts curves,
//! capacity reports, positional histograms, and length-sensitivity sweeps.

mod batch;
mod eval;
mod sample;
mod train;

pub use batch::{make_training_batch, BatchProtocol};
pub use eval::{
    capacity_report, eval_ar_curve, eval_ar_detailed, length_sensitivity_sweep,
    positional_histogram, ARCurve, CapacityReport, CapacityRule, CurvePoint, EvalProtocol,
    Generator, Histogram, OprmGenerator, RetrievalRecord, VanillaGenerator,
};
pub use sample::{gen_controlled_sample, gen_sample, gen_zero_shot_sample, ARSample, Fact};
pub use train::{loss_log_csv, train_controlled, TrainConfig, TrainEvent};
