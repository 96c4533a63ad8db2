//! The five commands behind the CLI, as library functions.
//!
//! Every command resolves its config, locks the output directory, runs,
//! writes its artifacts plus a manifest, and is deterministic given
//! (config, seed) — except for wall-clock numbers in `bench`.

use super::bench::{run_bench, step_time_fit};
use super::config::{parse_criterion, parse_decoding, ExperimentConfig};
use super::lock::DirLock;
use super::manifest::RunManifest;
use super::svg::LinePlot;
use super::tables::write_text;
use crate::ar::{
    capacity_report, eval_ar_detailed, gen_sample, length_sensitivity_sweep,
    positional_histogram, train_controlled, ARCurve, BatchProtocol, CapacityRule,
    OprmGenerator, RetrievalRecord, TrainConfig, TrainEvent, VanillaGenerator,
};
use crate::engine::{oprm_generate, Decoding, GenerationConfig, PromptParts};
use crate::error::{Error, Result};
use crate::model::{checkpoint, ModelParams};
use crate::vocab::Vocab;
use crate::{ar, util};
use std::time::Instant;

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Config(format!("config has no [{name}] section")))
}

fn checkpoint_name(step: u64) -> String {
    format!("checkpoint_{step:06}.oprmckpt")
}

pub const FINAL_CHECKPOINT: &str = "checkpoint_final.oprmckpt";

/// Train a controlled-setup model; writes checkpoints, a loss log, and the
/// run manifest into the output directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let t = section(&cfg.train, "train")?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let vocab = Vocab::controlled(t.n_keys, t.n_values)?;

    let mut protocol = BatchProtocol::new(t.m_blend.clone(), t.context_len);
    protocol.query_cap = t.query_cap;
    protocol.idk_fraction = t.idk_fraction;
    let mut tc = TrainConfig::new(t.d, t.d_state, protocol, t.steps, cfg.seed);
    tc.conv_k = t.conv_k;
    tc.lr = t.lr;
    tc.weight_decay = t.weight_decay;
    tc.workers = cfg.resolved_workers();
    tc.log_every = t.log_every;
    tc.checkpoint_every = t.checkpoint_every;

    let mut manifest = RunManifest::new("train", cfg.snapshot_toml());
    let start = Instant::now();
    let mut written: Vec<String> = Vec::new();
    let out_dir = cfg.out_dir.clone();
    let (_, log) = train_controlled(&tc, &vocab, |ev| match ev {
        TrainEvent::Loss { step, loss } => {
            eprintln!("step {step:6}  loss {loss:.6}");
            Ok(())
        }
        TrainEvent::Checkpoint { step, params } => {
            let name = if step == tc.steps {
                FINAL_CHECKPOINT.to_string()
            } else {
                checkpoint_name(step)
            };
            checkpoint::save(&out_dir.join(&name), params, &vocab, step)?;
            written.push(name);
            Ok(())
        }
    })?;
    manifest.add_timing("train", start.elapsed().as_secs_f64());

    write_text(&cfg.out_dir.join("loss_log.csv"), &ar::loss_log_csv(&log))?;
    written.push("loss_log.csv".into());
    for name in &written {
        manifest.add_artifact(&cfg.out_dir, name)?;
    }
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

struct EvalOutput {
    mode: String,
    curve: ARCurve,
    records: Vec<RetrievalRecord>,
    sweep: Vec<(usize, ARCurve)>,
}

/// Evaluate a checkpoint: AR curves for the requested modes, capacity
/// reports, positional histograms, optional length sweep, tables and plots.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    let e = section(&cfg.eval, "eval")?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let (params, vocab, meta) = checkpoint::load(&e.checkpoint)?;
    let workers = cfg.resolved_workers();

    let mut proto = ar::EvalProtocol::new(e.grid.clone(), e.contexts_per_m, e.context_len);
    proto.seeds = e.eval_seeds.clone();
    proto.query_cap = e.query_cap;
    proto.workers = workers;

    let mut outputs: Vec<EvalOutput> = Vec::new();
    let mut manifest = RunManifest::new("eval", cfg.snapshot_toml());
    let start = Instant::now();
    for mode in &e.modes {
        let (curve, records, sweep) = match mode.as_str() {
            "baseline" => {
                let g = VanillaGenerator {
                    backend: &params,
                    decoding: Decoding::Greedy,
                };
                let (curve, records) = eval_ar_detailed(&g, &vocab, &proto)?;
                let sweep = if e.length_sweep.is_empty() {
                    Vec::new()
                } else {
                    length_sensitivity_sweep(&g, &vocab, &proto, &e.length_sweep)?
                };
                (curve, records, sweep)
            }
            "oprm" => {
                let gcfg = eval_generation_config(e, &vocab, workers)?;
                let g = OprmGenerator {
                    backend: &params,
                    cfg: gcfg,
                };
                let (curve, records) = eval_ar_detailed(&g, &vocab, &proto)?;
                let sweep = if e.length_sweep.is_empty() {
                    Vec::new()
                } else {
                    length_sensitivity_sweep(&g, &vocab, &proto, &e.length_sweep)?
                };
                (curve, records, sweep)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown eval mode {other:?}; expected baseline or oprm"
                )))
            }
        };
        outputs.push(EvalOutput {
            mode: mode.clone(),
            curve,
            records,
            sweep,
        });
    }
    manifest.add_timing("eval", start.elapsed().as_secs_f64());

    let mut artifacts: Vec<String> = Vec::new();
    for out in &outputs {
        let name = format!("curve_{}.csv", out.mode);
        write_text(&cfg.out_dir.join(&name), &out.curve.to_csv())?;
        artifacts.push(name);

        if let Some(m_trained) = e.m_trained {
            let mut rows = String::from(ar::CapacityReport::csv_header());
            let r = capacity_report(
                &out.curve,
                meta.d,
                meta.d_state,
                m_trained,
                CapacityRule::ExpectedFacts,
            );
            rows.push_str(&r.to_csv_row());
            if let Some(th) = e.capacity_threshold {
                rows.push_str(
                    &capacity_report(
                        &out.curve,
                        meta.d,
                        meta.d_state,
                        m_trained,
                        CapacityRule::Threshold { accuracy: th },
                    )
                    .to_csv_row(),
                );
            }
            // Grid sweep: one row per extra checkpoint cell.
            for extra in &e.capacity_checkpoints {
                let (ep, ev, em) = checkpoint::load(extra)?;
                let curve = match out.mode.as_str() {
                    "baseline" => {
                        let g = VanillaGenerator { backend: &ep, decoding: Decoding::Greedy };
                        ar::eval_ar_curve(&g, &ev, &proto)?
                    }
                    _ => {
                        let gcfg = eval_generation_config(e, &ev, workers)?;
                        let g = OprmGenerator { backend: &ep, cfg: gcfg };
                        ar::eval_ar_curve(&g, &ev, &proto)?
                    }
                };
                rows.push_str(
                    &capacity_report(&curve, em.d, em.d_state, m_trained, CapacityRule::ExpectedFacts)
                        .to_csv_row(),
                );
            }
            let name = format!("capacity_{}.csv", out.mode);
            write_text(&cfg.out_dir.join(&name), &rows)?;
            artifacts.push(name);
        }

        let hist = positional_histogram(&out.records, e.histogram_bins);
        let name = format!("histogram_{}.csv", out.mode);
        write_text(&cfg.out_dir.join(&name), &hist.to_csv())?;
        artifacts.push(name);

        for (n, curve) in &out.sweep {
            let name = format!("curve_{}_n{}.csv", out.mode, n);
            write_text(&cfg.out_dir.join(&name), &curve.to_csv())?;
            artifacts.push(name);
        }
    }

    if e.plots {
        let mut plot = LinePlot::new("Associative recall", "facts in context", "accuracy");
        for out in &outputs {
            plot.add_series(
                &out.mode,
                out.curve
                    .points
                    .iter()
                    .map(|p| (p.m as f64, p.accuracy))
                    .collect(),
            );
            for (n, curve) in &out.sweep {
                plot.add_series(
                    &format!("{} N={n}", out.mode),
                    curve.points.iter().map(|p| (p.m as f64, p.accuracy)).collect(),
                );
            }
        }
        write_text(&cfg.out_dir.join("curves.svg"), &plot.to_svg(720, 480))?;
        artifacts.push("curves.svg".into());
    }

    for name in &artifacts {
        manifest.add_artifact(&cfg.out_dir, name)?;
    }
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

fn eval_generation_config(
    e: &super::config::EvalSection,
    vocab: &Vocab,
    workers: usize,
) -> Result<GenerationConfig> {
    let mut g = GenerationConfig::new(e.chunk_len, vocab.pad_token());
    g.criterion = parse_criterion(&e.criterion, e.criterion_seed, e.criterion_index)?;
    g.idk_filter = e.idk_filter;
    g.error_tokens = vec![vocab.error_token()];
    g.workers = workers;
    Ok(g)
}

/// Wall-clock scaling benchmark; the one command whose numbers vary run to
/// run (the table layout and state-size columns stay fixed).
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<()> {
    let b = section(&cfg.bench, "bench")?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let params = match &b.checkpoint {
        Some(path) => checkpoint::load(path)?.0,
        None => {
            let vocab = Vocab::controlled(64, 64)?;
            ModelParams::init(crate::model::ModelConfig::new(
                vocab.size(),
                b.d,
                b.d_state,
                cfg.seed,
            ))?
        }
    };
    let workers = cfg.resolved_workers();
    let mut manifest = RunManifest::new("bench", cfg.snapshot_toml());
    let start = Instant::now();
    let report = run_bench(
        &params,
        b.chunk_len,
        &b.chunk_counts,
        b.decode_tokens,
        b.repeats,
        workers,
    )?;
    let step_fit = step_time_fit(&params, 4096, 256)?;
    manifest.add_timing("bench", start.elapsed().as_secs_f64());

    write_text(&cfg.out_dir.join("bench.csv"), &report.to_csv())?;
    let mut fits = report.fits_csv();
    fits.push_str(&format!(
        "step_time_vs_position,{:.9},{:.9},{:.6}\n",
        step_fit.slope, step_fit.intercept, step_fit.r2
    ));
    write_text(&cfg.out_dir.join("bench_fits.csv"), &fits)?;
    for name in ["bench.csv", "bench_fits.csv"] {
        manifest.add_artifact(&cfg.out_dir, name)?;
    }
    manifest.write(&cfg.out_dir)?;
    eprintln!(
        "chunked prefill vs b: slope {:.6}s r2 {:.4}; decode vs b: slope {:.3e}",
        report.chunked_fit.slope, report.chunked_fit.r2, report.decode_fit.slope
    );
    Ok(())
}

/// One chunked generation with a full selection-trace dump.
pub fn cmd_oprm_run(cfg: &ExperimentConfig) -> Result<()> {
    let r = section(&cfg.oprm_run, "oprm_run")?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let (params, vocab, _) = checkpoint::load(&r.checkpoint)?;

    let parts = if let Some(m) = r.ar_m {
        let n = r.ar_n.unwrap_or(96);
        let sample = gen_sample(m, n, &vocab, r.ar_seed.unwrap_or(cfg.seed))?;
        sample.prompt_parts(&vocab)
    } else {
        PromptParts::new(
            r.prefix.clone(),
            r.context.clone(),
            r.suffix.clone(),
            r.query_start..r.query_end,
        )?
    };

    let mut g = GenerationConfig::new(r.chunk_len, vocab.pad_token());
    g.criterion = parse_criterion(&r.criterion, r.criterion_seed, r.criterion_index)?;
    g.idk_filter = r.idk_filter;
    g.error_tokens = vec![vocab.error_token()];
    g.max_new_tokens = r.max_new_tokens;
    g.stop_tokens = r.stop_tokens.clone();
    g.decoding = parse_decoding(r.temperature, r.temperature_value, cfg.seed);
    g.workers = cfg.resolved_workers();

    let mut manifest = RunManifest::new("oprm-run", cfg.snapshot_toml());
    let start = Instant::now();
    let (answer, trace) = oprm_generate(&params, &parts, &g)?;
    manifest.add_timing("generate", start.elapsed().as_secs_f64());

    let answer_text = answer
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    println!("{answer_text}");
    write_text(&cfg.out_dir.join("answer.txt"), &format!("{answer_text}\n"))?;
    write_text(&cfg.out_dir.join("trace.csv"), &trace.to_csv())?;
    for name in ["answer.txt", "trace.csv"] {
        manifest.add_artifact(&cfg.out_dir, name)?;
    }
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

/// Generate associative-recall datasets as line-delimited records.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let d = section(&cfg.gen_data, "gen_data")?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let vocab = match d.protocol.as_str() {
        "controlled" => Vocab::controlled(
            d.n_keys.ok_or_else(|| Error::Config("controlled protocol needs n_keys".into()))?,
            d.n_values
                .ok_or_else(|| Error::Config("controlled protocol needs n_values".into()))?,
        )?,
        "zero-shot" => Vocab::zero_shot(),
        other => {
            return Err(Error::Config(format!(
                "unknown protocol {other:?}; expected controlled or zero-shot"
            )))
        }
    };
    let mut manifest = RunManifest::new("gen-data", cfg.snapshot_toml());
    let start = Instant::now();
    let mut lines = String::new();
    for &m in &d.m_list {
        for i in 0..d.samples_per_m {
            let seed = util::derive_seed(cfg.seed, &[m as u64, i as u64]);
            let sample = gen_sample(m, d.context_len, &vocab, seed)?;
            lines.push_str(&sample.to_json_line());
            lines.push('\n');
        }
    }
    manifest.add_timing("gen-data", start.elapsed().as_secs_f64());

    let rel = d
        .file
        .file_name()
        .map(|f| f.to_string_lossy().to_string())
        .ok_or_else(|| Error::Config("gen_data file has no name".into()))?;
    write_text(&cfg.out_dir.join(&rel), &lines)?;
    manifest.add_artifact(&cfg.out_dir, &rel)?;
    manifest.write(&cfg.out_dir)?;
    Ok(())
}

/// Dispatch by command name; used by the binary.
pub fn run_command(name: &str, cfg: &ExperimentConfig) -> Result<()> {
    match name {
        "train" => cmd_train(cfg),
        "eval" => cmd_eval(cfg),
        "bench" => cmd_bench(cfg),
        "oprm-run" => cmd_oprm_run(cfg),
        "gen-data" => cmd_gen_data(cfg),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}
