//! Configuration, persistence, export, and experiment orchestration for the
//! `oprm` CLI.

mod bench;
mod commands;
mod config;
mod lock;
mod manifest;
mod svg;
mod tables;

pub use bench::{linear_fit, run_bench, step_time_fit, BenchReport, BenchRow, LinFit};
pub use commands::{
    cmd_bench, cmd_eval, cmd_gen_data, cmd_oprm_run, cmd_train, run_command, FINAL_CHECKPOINT,
};
pub use config::{
    parse_criterion, parse_decoding, BenchSection, EvalSection, ExperimentConfig, GenDataSection,
    OprmRunSection, Overrides, TrainSection,
};
pub use lock::DirLock;
pub use manifest::{sha256_hex, verify_manifest, ArtifactEntry, RunManifest, StageTiming, MANIFEST_FILE};
pub use svg::{LinePlot, Series};
pub use tables::{csv, fmt_real, write_text};
