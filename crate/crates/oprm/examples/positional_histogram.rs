//! Where in the context do retrievals survive an overflow? Bins the
//! successfully retrieved facts by their position fraction; overflowing
//! models tend to lose the middle of the context first.
//!
//! ```bash
//! cargo run --release -p oprm --example positional_histogram
//! ```

use oprm::ar::{
    eval_ar_detailed, positional_histogram, train_controlled, BatchProtocol, EvalProtocol,
    TrainConfig, VanillaGenerator,
};
use oprm::engine::Decoding;
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(48, 48)?;
    let protocol = BatchProtocol::new(vec![1, 2, 4, 8, 16], 64);
    let mut cfg = TrainConfig::new(32, 2, protocol, 700, 9);
    cfg.lr = 3e-3;
    eprintln!("training d=32 d_state=2 for {} steps...", cfg.steps);
    let (params, _) = train_controlled(&cfg, &vocab, |_| Ok(()))?;

    // Evaluate only in the overflowing regime.
    let mut proto = EvalProtocol::new(vec![16], 40, 64);
    proto.seeds = vec![100, 200];
    proto.workers = 2;
    let baseline = VanillaGenerator {
        backend: &params,
        decoding: Decoding::Greedy,
    };
    let (curve, records) = eval_ar_detailed(&baseline, &vocab, &proto)?;
    println!(
        "accuracy at m=16: {:.3} ({} successes)\n",
        curve.points[0].accuracy,
        records.iter().filter(|r| r.correct).count()
    );

    let hist = positional_histogram(&records, 10);
    if hist.is_empty() {
        println!("no successful retrievals to bin");
        return Ok(());
    }
    println!("bin  fraction of successes");
    for (i, f) in hist.normalized.iter().enumerate() {
        let bar = "#".repeat((f * 100.0) as usize);
        println!("{i:3}  {f:.3}  {bar}");
    }
    Ok(())
}
