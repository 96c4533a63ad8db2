//! Length sensitivity: evaluate identical facts under different amounts of
//! padding. Retrieval tracks the information in the context, not its raw
//! length, so the curves should nearly coincide.
//!
//! ```bash
//! cargo run --release -p oprm --example length_sweep
//! ```

use oprm::ar::{
    length_sensitivity_sweep, train_controlled, BatchProtocol, EvalProtocol, TrainConfig,
    VanillaGenerator,
};
use oprm::engine::Decoding;
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(32, 32)?;
    let protocol = BatchProtocol::new(vec![1, 2, 4, 8], 48);
    let mut cfg = TrainConfig::new(32, 2, protocol, 800, 13);
    cfg.lr = 3e-3;
    eprintln!("training d=32 d_state=2 for {} steps...", cfg.steps);
    let (params, _) = train_controlled(&cfg, &vocab, |_| Ok(()))?;

    let mut proto = EvalProtocol::new(vec![1, 2, 4, 8], 10, 48);
    proto.seeds = vec![100, 200];
    proto.workers = 2;
    let baseline = VanillaGenerator {
        backend: &params,
        decoding: Decoding::Greedy,
    };
    let sweep = length_sensitivity_sweep(&baseline, &vocab, &proto, &[48, 96, 192])?;

    print!("facts");
    for (n, _) in &sweep {
        print!("  N={n:<4}");
    }
    println!();
    for i in 0..sweep[0].1.points.len() {
        print!("{:5}", sweep[0].1.points[i].m);
        for (_, curve) in &sweep {
            print!("  {:>6.3}", curve.points[i].accuracy);
        }
        println!();
    }
    println!("\nsame facts and queries in every column; only the padding differs");
    Ok(())
}
