//! End-to-end tests of the `oprm` binary: exit codes, artifact determinism,
//! and manifest verification.

use std::path::Path;
use std::process::{Command, Output};

fn oprm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oprm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn train_config(out: &Path) -> String {
    format!(
        r#"
seed = 11
out_dir = "{}"
workers = 2

[train]
d = 8
d_state = 2
n_keys = 12
n_values = 12
context_len = 16
m_blend = [1, 2, 4]
steps = 30
log_every = 10

[gen_data]
protocol = "controlled"
n_keys = 12
n_values = 12
m_list = [1, 2, 4]
context_len = 16
samples_per_m = 5
file = "data.jsonl"
"#,
        out.display()
    )
}

#[test]
fn train_then_eval_then_oprm_run_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), &train_config(&out));
    let r = oprm(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(
        r.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(out.join("checkpoint_final.oprmckpt").exists());
    assert!(out.join("loss_log.csv").exists());
    assert!(out.join("manifest.toml").exists());
    oprm_eval_and_run(tmp.path(), &out);
}

fn oprm_eval_and_run(tmp: &Path, train_out: &Path) {
    let eval_out = tmp.join("eval");
    let ckpt = train_out.join("checkpoint_final.oprmckpt");
    std::fs::create_dir_all(tmp.join("eval_cfg_dir")).unwrap();
    let cfg = write_config(
        &tmp.join("eval_cfg_dir"),
        &format!(
            r#"
seed = 3
out_dir = "{}"
workers = 2

[eval]
checkpoint = "{}"
modes = ["baseline", "oprm"]
grid = [1, 2, 4]
contexts_per_m = 2
eval_seeds = [5]
context_len = 16
chunk_len = 8
m_trained = 4
length_sweep = [16, 32]

[oprm_run]
checkpoint = "{}"
chunk_len = 8
max_new_tokens = 2
ar_m = 2
ar_n = 16
ar_seed = 9
"#,
            eval_out.display(),
            ckpt.display(),
            ckpt.display()
        ),
    );
    let r = oprm(&["eval", "--config", cfg.to_str().unwrap()]);
    assert!(
        r.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    // Both curves share one grid.
    let base = std::fs::read_to_string(eval_out.join("curve_baseline.csv")).unwrap();
    let op = std::fs::read_to_string(eval_out.join("curve_oprm.csv")).unwrap();
    let grid = |csv: &str| {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(grid(&base), grid(&op));
    assert!(eval_out.join("capacity_baseline.csv").exists());
    assert!(eval_out.join("histogram_oprm.csv").exists());
    assert!(eval_out.join("curve_baseline_n32.csv").exists());

    // The plot references exactly the table's data points.
    let svg = std::fs::read_to_string(eval_out.join("curves.svg")).unwrap();
    let mut expect_points = 0;
    for name in [
        "curve_baseline.csv",
        "curve_oprm.csv",
        "curve_baseline_n16.csv",
        "curve_baseline_n32.csv",
        "curve_oprm_n16.csv",
        "curve_oprm_n32.csv",
    ] {
        expect_points += std::fs::read_to_string(eval_out.join(name))
            .unwrap()
            .lines()
            .count()
            - 1;
    }
    assert_eq!(svg.matches("<circle").count(), expect_points);

    oprm::harness::verify_manifest(&eval_out).unwrap();

    let run_out = tmp.join("runout");
    let r = oprm(&[
        "oprm-run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_out.to_str().unwrap(),
    ]);
    assert!(
        r.status.success(),
        "oprm-run failed: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    let trace = std::fs::read_to_string(run_out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("index,entropy_bits,query_loglik,idk,selected"));
    assert_eq!(trace.lines().count(), 1 + 2); // 16 tokens / chunk 8 = 2 chunks
}

#[test]
fn identical_config_and_seed_give_byte_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    let cfg = write_config(tmp.path(), &train_config(&out_a));
    assert!(oprm(&["train", "--config", cfg.to_str().unwrap()]).status.success());
    assert!(oprm(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--workers",
        "1",
    ])
    .status
    .success());
    for name in ["checkpoint_final.oprmckpt", "loss_log.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    // gen-data determinism too.
    let da = tmp.path().join("da");
    let db = tmp.path().join("db");
    for d in [&da, &db] {
        assert!(oprm(&[
            "gen-data",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.to_str().unwrap()
        ])
        .status
        .success());
    }
    assert_eq!(
        std::fs::read(da.join("data.jsonl")).unwrap(),
        std::fs::read(db.join("data.jsonl")).unwrap()
    );
    let text = std::fs::read_to_string(da.join("data.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 15);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    // Missing required field: steps.
    let bad = train_config(&tmp.path().join("x")).replace("steps = 30\n", "");
    let cfg = write_config(tmp.path(), &bad);
    let r = oprm(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&r.stderr).contains("steps"),
        "stderr should name the missing field: {}",
        String::from_utf8_lossy(&r.stderr)
    );

    // Unknown key.
    let bad = format!("{}\nbogus_key = 1\n", train_config(&tmp.path().join("y")));
    let cfg = write_config(tmp.path(), &bad);
    let r = oprm(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));

    // Missing checkpoint for eval.
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"
seed = 1
out_dir = "{}"

[eval]
checkpoint = "{}"
modes = ["baseline"]
grid = [1]
contexts_per_m = 1
eval_seeds = [1]
context_len = 16
chunk_len = 8
"#,
            tmp.path().join("eo").display(),
            tmp.path().join("nope.oprmckpt").display()
        ),
    );
    let r = oprm(&["eval", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn locked_directory_rejects_second_mutating_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("locked");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".oprm-lock"), b"").unwrap();
    let cfg = write_config(tmp.path(), &train_config(&out));
    let r = oprm(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("locked"));
}
