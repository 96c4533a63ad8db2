//! The three decoding strategies over chunked prefill on one prompt:
//! single-chunk selective decoding, decode-all-and-concatenate, and
//! combined-chunks (top-k re-prefilled together).
//!
//! ```bash
//! cargo run --release -p oprm --example decode_variants
//! ```

use oprm::ar::{gen_sample, train_controlled, BatchProtocol, TrainConfig};
use oprm::engine::{cc_generate, oprm_generate, summ_generate, Criterion, GenerationConfig};
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(32, 32)?;
    let mut protocol = BatchProtocol::new(vec![1, 2, 4, 8], 48);
    protocol.idk_fraction = 0.25;
    let mut cfg = TrainConfig::new(32, 2, protocol, 600, 17);
    cfg.lr = 3e-3;
    eprintln!("training a small model for {} steps...", cfg.steps);
    let (params, _) = train_controlled(&cfg, &vocab, |_| Ok(()))?;

    let sample = gen_sample(8, 48, &vocab, 4242)?;
    let parts = sample.prompt_parts(&vocab);
    println!("gold value: {:?}\n", sample.gold());

    let mut gcfg = GenerationConfig::new(12, vocab.pad_token());
    gcfg.criterion = Criterion::MinEntropy;
    gcfg.idk_filter = true;
    gcfg.error_tokens = vec![vocab.error_token()];
    gcfg.max_new_tokens = 1;
    gcfg.summ_separator = vec![vocab.query_marker()];

    let (answer, trace) = oprm_generate(&params, &parts, &gcfg)?;
    println!(
        "selective decode : answer {:?} from chunk {} (kept {:?})",
        answer, trace.selected, trace.kept
    );

    let (answer, trace) = summ_generate(&params, &parts, &gcfg)?;
    println!(
        "decode-all       : {:?} ({} chunks decoded)",
        answer,
        trace.kept.len()
    );

    let (answer, trace) = cc_generate(&params, &parts, 2, &gcfg)?;
    println!(
        "combined top-2   : answer {:?} re-prefilled from chunks {:?}",
        answer,
        trace.rows.iter().filter(|r| r.selected).map(|r| r.index).collect::<Vec<_>>()
    );
    Ok(())
}
