//! Reproduce the memory-overflow curve at desk scale: a model trained on a
//! blend of fact counts retrieves reliably when the context holds little
//! information and degrades as facts are added, even though the context
//! length never changes.
//!
//! ```bash
//! cargo run --release -p oprm --example overflow_curve
//! ```

use oprm::ar::{eval_ar_curve, train_controlled, BatchProtocol, EvalProtocol, TrainConfig, VanillaGenerator};
use oprm::engine::Decoding;
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(48, 48)?;
    let protocol = BatchProtocol::new(vec![1, 2, 4, 8, 16], 64);
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
    let curve = eval_ar_curve(&baseline, &vocab, &proto)?;
    println!("facts  accuracy");
    for p in &curve.points {
        let bar = "#".repeat((p.accuracy * 40.0) as usize);
        println!("{:5}  {:.3}  {bar}", p.m, p.accuracy);
    }
    println!(
        "\noverflow: accuracy at m={} is {:.3} vs {:.3} at m={}",
        curve.points.last().unwrap().m,
        curve.points.last().unwrap().accuracy,
        curve.points[0].accuracy,
        curve.points[0].m,
    );
    Ok(())
}
