//! Memory capacity as a function of hidden-state size: train a small grid
//! of (channels, state size) models and report how many facts each can
//! actually retrieve, relative to what it was trained for.
//!
//! ```bash
//! cargo run --release -p oprm --example capacity_sweep
//! ```

use oprm::ar::{
    capacity_report, eval_ar_curve, train_controlled, BatchProtocol, CapacityRule, EvalProtocol,
    TrainConfig, VanillaGenerator,
};
use oprm::engine::Decoding;
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(32, 32)?;
    let m_trained = 16;
    println!("{}", "d,d_state,m_trained,capacity,ratio");
    for &(d, d_state) in &[(16usize, 2usize), (32, 2), (32, 4)] {
        let protocol = BatchProtocol::new(vec![1, 2, 4, 8, 16], 48);
        let mut cfg = TrainConfig::new(d, d_state, protocol, 700, 5);
        cfg.lr = 3e-3;
        eprintln!("training d={d} d_state={d_state}...");
        let (params, _) = train_controlled(&cfg, &vocab, |_| Ok(()))?;

        let mut proto = EvalProtocol::new(vec![1, 2, 4, 8, 16], 10, 48);
        proto.seeds = vec![100];
        proto.workers = 2;
        let baseline = VanillaGenerator {
            backend: &params,
            decoding: Decoding::Greedy,
        };
        let curve = eval_ar_curve(&baseline, &vocab, &proto)?;
        let report = capacity_report(&curve, d, d_state, m_trained, CapacityRule::ExpectedFacts);
        print!("{}", report.to_csv_row());
    }
    println!("\ncapacity = max over the grid of m * accuracy(m)");
    Ok(())
}
