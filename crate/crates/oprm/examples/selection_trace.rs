//! Watch the engine pick a chunk: one chunked generation with the full
//! per-chunk selection trace (entropy, IDK flags, the surviving set and the
//! decoded chunk).
//!
//! ```bash
//! cargo run --release -p oprm --example selection_trace
//! ```

use oprm::ar::{gen_sample, train_controlled, BatchProtocol, TrainConfig};
use oprm::engine::{oprm_generate, Criterion, GenerationConfig};
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(32, 32)?;
    let mut protocol = BatchProtocol::new(vec![1, 2, 4, 8], 48);
    protocol.idk_fraction = 0.25;
    let mut cfg = TrainConfig::new(32, 2, protocol, 600, 11);
    cfg.lr = 3e-3;
    eprintln!("training a small model for {} steps...", cfg.steps);
    let (params, _) = train_controlled(&cfg, &vocab, |_| Ok(()))?;

    // A 48-token context with 8 facts, queried on one of them.
    let sample = gen_sample(8, 48, &vocab, 2024)?;
    let parts = sample.prompt_parts(&vocab);
    println!(
        "querying key {:?}; gold value {:?}; context {} tokens in chunks of 12\n",
        sample.query(),
        sample.gold(),
        parts.context.len()
    );

    let mut gcfg = GenerationConfig::new(12, vocab.pad_token());
    gcfg.criterion = Criterion::MinEntropy;
    gcfg.idk_filter = true;
    gcfg.error_tokens = vec![vocab.error_token()];
    gcfg.max_new_tokens = 1;
    let (answer, trace) = oprm_generate(&params, &parts, &gcfg)?;

    print!("{}", trace.to_csv());
    println!("\nkept chunks: {:?}", trace.kept);
    println!("decoded chunk {}, answer {:?}", trace.selected, answer);
    println!("correct: {}", answer == sample.gold());
    Ok(())
}
