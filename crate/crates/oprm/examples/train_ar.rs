//! Train a small 2-layer recurrent model on synthetic associative recall,
//! watch the loss fall, and round-trip the result through a checkpoint.
//!
//! ```bash
//! cargo run --release -p oprm --example train_ar
//! ```

use oprm::ar::{train_controlled, BatchProtocol, TrainConfig, TrainEvent};
use oprm::model::checkpoint;
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(32, 32)?;
    // Contexts of 48 tokens holding 1..8 facts; everything else default.
    let protocol = BatchProtocol::new(vec![1, 2, 4, 8], 48);
    let mut cfg = TrainConfig::new(32, 2, protocol, 400, 7);
    cfg.lr = 3e-3;
    cfg.log_every = 40;

    let (params, log) = train_controlled(&cfg, &vocab, |ev| {
        if let TrainEvent::Loss { step, loss } = ev {
            println!("step {step:4}  loss {loss:.4}");
        }
        Ok(())
    })?;

    let first = log.first().unwrap().1;
    let last = log.last().unwrap().1;
    println!("loss: {first:.4} -> {last:.4} over {} steps", cfg.steps);

    let dir = std::env::temp_dir().join("oprm_train_ar_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.oprmckpt");
    checkpoint::save(&path, &params, &vocab, cfg.steps)?;
    let (loaded, loaded_vocab, meta) = checkpoint::load(&path)?;
    assert_eq!(loaded_vocab, vocab);
    assert_eq!(meta.train_step, cfg.steps);
    assert_eq!(loaded.cfg.d, params.cfg.d);
    println!("checkpoint round-trip ok: {}", path.display());
    Ok(())
}
