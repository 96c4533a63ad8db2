//! Side-by-side accuracy of vanilla full-context inference and chunked
//! speculative-prefill inference on the same trained model: chunking keeps
//! per-state information below capacity, so the chunked curve stays flat
//! where the vanilla curve collapses.
//!
//! ```bash
//! cargo run --release -p oprm --example oprm_vs_vanilla
//! ```

use oprm::ar::{
    eval_ar_curve, train_controlled, BatchProtocol, EvalProtocol, OprmGenerator, TrainConfig,
    VanillaGenerator,
};
use oprm::engine::{Criterion, Decoding, GenerationConfig};
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(48, 48)?;
    let mut protocol = BatchProtocol::new(vec![1, 2, 4, 8, 16], 64);
    protocol.idk_fraction = 0.25;
    let mut cfg = TrainConfig::new(48, 2, protocol, 900, 3);
    cfg.lr = 3e-3;
    eprintln!("training d=48 d_state=2 for {} steps...", cfg.steps);
    let (params, _) = train_controlled(&cfg, &vocab, |_| Ok(()))?;

    let mut proto = EvalProtocol::new(vec![1, 2, 4, 8, 16], 12, 64);
    proto.seeds = vec![100, 200];
    proto.workers = 2;

    let baseline = VanillaGenerator {
        backend: &params,
        decoding: Decoding::Greedy,
    };
    let base = eval_ar_curve(&baseline, &vocab, &proto)?;

    // Chunks of 16 tokens hold at most ~5 facts each at the densest blend.
    let mut gcfg = GenerationConfig::new(16, vocab.pad_token());
    gcfg.criterion = Criterion::MinEntropy;
    gcfg.idk_filter = true;
    gcfg.error_tokens = vec![vocab.error_token()];
    gcfg.workers = 2;
    let chunked = OprmGenerator {
        backend: &params,
        cfg: gcfg,
    };
    let oprm = eval_ar_curve(&chunked, &vocab, &proto)?;

    println!("facts  vanilla  chunked");
    for (b, o) in base.points.iter().zip(&oprm.points) {
        println!("{:5}  {:>7.3}  {:>7.3}", b.m, b.accuracy, o.accuracy);
    }
    Ok(())
}
