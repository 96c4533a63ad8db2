// Scratch calibration runner (temporary).
use oprm::ar::*;
use oprm::engine::*;
use oprm::model::*;
use oprm::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let d: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(64);
    let d_state: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(4);
    let idk_fraction: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.25);
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);
    let lr: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1e-3);

    let vocab = Vocab::controlled(64, 64).unwrap();
    let mut proto = BatchProtocol::new(vec![1, 2, 4, 8, 16, 32], 96);
    proto.idk_fraction = idk_fraction;
    let mut cfg = TrainConfig::new(d, d_state, proto, steps, seed);
    cfg.workers = 2;
    cfg.log_every = 50;
    cfg.lr = lr;

    let t0 = Instant::now();
    let (params, log) = train_controlled(&cfg, &vocab, |ev| {
        if let TrainEvent::Loss { step, loss } = ev {
            eprintln!("step {step:5}  loss {loss:.4}  ({:.1}s)", t0.elapsed().as_secs_f64());
        }
        Ok(())
    })
    .unwrap();
    eprintln!("train time: {:.1}s  ({:.3} s/step)", t0.elapsed().as_secs_f64(),
        t0.elapsed().as_secs_f64() / steps.max(1) as f64);
    let _ = log;

    let mut eval = EvalProtocol::new(vec![1, 2, 4, 8, 16, 32], 12, 96);
    eval.seeds = vec![100, 200];
    eval.workers = 2;
    eval.query_cap = Some(16);

    let t1 = Instant::now();
    let baseline = VanillaGenerator { backend: &params, decoding: Decoding::Greedy };
    let base_curve = eval_ar_curve(&baseline, &vocab, &eval).unwrap();
    eprintln!("baseline eval: {:.1}s", t1.elapsed().as_secs_f64());
    println!("baseline curve:\n{}", base_curve.to_csv());

    for chunk_len in [12, 24, 48] {
        let mut gcfg = GenerationConfig::new(chunk_len, vocab.pad_token());
        gcfg.criterion = Criterion::MinEntropy;
        gcfg.idk_filter = true;
        gcfg.error_tokens = vec![vocab.error_token()];
        gcfg.workers = 2;
        let oprm = OprmGenerator { backend: &params, cfg: gcfg.clone() };
        let t2 = Instant::now();
        let curve = eval_ar_curve(&oprm, &vocab, &eval).unwrap();
        eprintln!("oprm L={chunk_len} eval: {:.1}s", t2.elapsed().as_secs_f64());
        println!("oprm L={chunk_len} (filter on):\n{}", curve.to_csv());

        gcfg.idk_filter = false;
        let oprm2 = OprmGenerator { backend: &params, cfg: gcfg };
        let curve2 = eval_ar_curve(&oprm2, &vocab, &eval).unwrap();
        println!("oprm L={chunk_len} (filter off):\n{}", curve2.to_csv());
    }

    // Length sensitivity: N vs 4N.
    let oprm_cfg = {
        let mut g = GenerationConfig::new(24, vocab.pad_token());
        g.criterion = Criterion::MinEntropy;
        g.idk_filter = true;
        g.error_tokens = vec![vocab.error_token()];
        g.workers = 2;
        g
    };
    let _ = oprm_cfg;
    let sweep = length_sensitivity_sweep(&baseline, &vocab, &eval, &[96, 384]).unwrap();
    for (n, curve) in sweep {
        println!("baseline N={n}:\n{}", curve.to_csv());
    }
}
