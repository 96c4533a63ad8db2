//! Experiment configuration: one human-editable TOML file per experiment,
//! sections per command, unknown keys rejected, flag overrides on top.

use crate::engine::{Criterion, Decoding};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

fn default_conv_k() -> usize {
    4
}
fn default_query_cap() -> usize {
    16
}
fn default_lr() -> f64 {
    1e-3
}
fn default_wd() -> f64 {
    0.1
}
fn default_log_every() -> u64 {
    25
}
fn default_bins() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_repeats() -> usize {
    3
}
fn default_decode_tokens() -> usize {
    10
}
fn default_max_new() -> usize {
    8
}
fn default_samples_per_m() -> usize {
    10
}
fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker budget; OPRM_WORKERS or available parallelism when absent.
    pub workers: Option<usize>,
    pub train: Option<TrainSection>,
    pub eval: Option<EvalSection>,
    pub bench: Option<BenchSection>,
    pub oprm_run: Option<OprmRunSection>,
    pub gen_data: Option<GenDataSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub d: usize,
    pub d_state: usize,
    #[serde(default = "default_conv_k")]
    pub conv_k: usize,
    pub n_keys: usize,
    pub n_values: usize,
    pub context_len: usize,
    pub m_blend: Vec<usize>,
    #[serde(default = "default_query_cap")]
    pub query_cap: usize,
    #[serde(default)]
    pub idk_fraction: f64,
    pub steps: u64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: PathBuf,
    /// Any of "baseline", "oprm".
    pub modes: Vec<String>,
    pub grid: Vec<usize>,
    pub contexts_per_m: usize,
    /// Padded context length N used for evaluation.
    pub context_len: usize,
    /// Evaluation context seeds; results are averaged across them.
    pub eval_seeds: Vec<u64>,
    #[serde(default)]
    pub query_cap: Option<usize>,
    pub chunk_len: usize,
    #[serde(default = "default_criterion_name")]
    pub criterion: String,
    #[serde(default)]
    pub criterion_seed: u64,
    #[serde(default)]
    pub criterion_index: usize,
    #[serde(default = "default_true")]
    pub idk_filter: bool,
    /// Fact count the checkpoint was trained up to, for capacity reports.
    #[serde(default)]
    pub m_trained: Option<usize>,
    /// Also report threshold-rule capacity at this accuracy.
    #[serde(default)]
    pub capacity_threshold: Option<f64>,
    /// Extra checkpoints (grid cells); each adds one capacity row per mode.
    #[serde(default)]
    pub capacity_checkpoints: Vec<PathBuf>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Extra padded lengths to sweep (same facts, different padding).
    #[serde(default)]
    pub length_sweep: Vec<usize>,
    #[serde(default = "default_true")]
    pub plots: bool,
}

fn default_criterion_name() -> String {
    "entropy".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Synthetic model size (ignored when a checkpoint is given).
    pub d: usize,
    pub d_state: usize,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    pub chunk_len: usize,
    pub chunk_counts: Vec<usize>,
    #[serde(default = "default_decode_tokens")]
    pub decode_tokens: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OprmRunSection {
    pub checkpoint: PathBuf,
    pub chunk_len: usize,
    #[serde(default = "default_criterion_name")]
    pub criterion: String,
    #[serde(default)]
    pub criterion_seed: u64,
    #[serde(default)]
    pub criterion_index: usize,
    #[serde(default)]
    pub idk_filter: bool,
    #[serde(default = "default_max_new")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub stop_tokens: Vec<u32>,
    /// Sample an associative-recall prompt with this many facts...
    #[serde(default)]
    pub ar_m: Option<usize>,
    #[serde(default)]
    pub ar_n: Option<usize>,
    #[serde(default)]
    pub ar_seed: Option<u64>,
    /// ...or give the prompt explicitly.
    #[serde(default)]
    pub prefix: Vec<u32>,
    #[serde(default)]
    pub context: Vec<u32>,
    #[serde(default)]
    pub suffix: Vec<u32>,
    #[serde(default)]
    pub query_start: usize,
    #[serde(default)]
    pub query_end: usize,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_temperature")]
    pub temperature_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataSection {
    /// "controlled" or "zero-shot".
    pub protocol: String,
    #[serde(default)]
    pub n_keys: Option<usize>,
    #[serde(default)]
    pub n_values: Option<usize>,
    pub m_list: Vec<usize>,
    pub context_len: usize,
    #[serde(default = "default_samples_per_m")]
    pub samples_per_m: usize,
    pub file: PathBuf,
}

/// Flag overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub chunk_len: Option<usize>,
    pub criterion: Option<String>,
    pub idk_filter: Option<bool>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(s) = ov.seed {
            self.seed = s;
        }
        if let Some(w) = ov.workers {
            self.workers = Some(w);
        }
        if let Some(o) = &ov.out_dir {
            self.out_dir = o.clone();
        }
        if let Some(l) = ov.chunk_len {
            if let Some(e) = &mut self.eval {
                e.chunk_len = l;
            }
            if let Some(r) = &mut self.oprm_run {
                r.chunk_len = l;
            }
            if let Some(b) = &mut self.bench {
                b.chunk_len = l;
            }
        }
        if let Some(c) = &ov.criterion {
            if let Some(e) = &mut self.eval {
                e.criterion = c.clone();
            }
            if let Some(r) = &mut self.oprm_run {
                r.criterion = c.clone();
            }
        }
        if let Some(f) = ov.idk_filter {
            if let Some(e) = &mut self.eval {
                e.idk_filter = f;
            }
            if let Some(r) = &mut self.oprm_run {
                r.idk_filter = f;
            }
        }
    }

    pub fn resolved_workers(&self) -> usize {
        self.workers.unwrap_or_else(crate::util::default_workers)
    }

    /// Resolved snapshot embedded in the run manifest.
    pub fn snapshot_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

/// Parse a criterion name plus its parameters.
pub fn parse_criterion(name: &str, seed: u64, index: usize) -> Result<Criterion> {
    match name {
        "entropy" => Ok(Criterion::MinEntropy),
        "likelihood" => Ok(Criterion::MaxQueryLikelihood),
        "random" => Ok(Criterion::Random { seed }),
        "index" => Ok(Criterion::FixedIndex { index }),
        other => Err(Error::Config(format!(
            "unknown criterion {other:?}; expected entropy, likelihood, random, or index"
        ))),
    }
}

/// Decoding rule from the optional temperature field.
pub fn parse_decoding(temperature: Option<f64>, value: f64, seed: u64) -> Decoding {
    match temperature {
        Some(_) => Decoding::Temperature {
            temperature: value,
            seed,
        },
        None => Decoding::Greedy,
    }
}
