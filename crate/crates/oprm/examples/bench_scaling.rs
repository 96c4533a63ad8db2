//! Prefill cost scaling: chunked speculative prefill does b independent
//! passes (parallelizable, linear in b) while decoding holds exactly one
//! chunk's state no matter how long the context was.
//!
//! ```bash
//! cargo run --release -p oprm --example bench_scaling
//! ```

use oprm::harness::{run_bench, step_time_fit};
use oprm::model::{ModelConfig, ModelParams};
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let vocab = Vocab::controlled(64, 64)?;
    let params = ModelParams::init(ModelConfig::new(vocab.size(), 32, 4, 1))?;
    let report = run_bench(&params, 64, &[1, 2, 4, 8, 16, 24, 32], 10, 3, 2)?;
    print!("{}", report.to_csv());
    println!();
    print!("{}", report.fits_csv());

    let step_fit = step_time_fit(&params, 4096, 256)?;
    println!(
        "\nper-step time vs position: slope {:.3e} s/token (flat: state size is fixed)",
        step_fit.slope
    );
    let last = report.rows.last().unwrap();
    println!(
        "at b={}: chunked {:.3}s vs monolithic {:.3}s with {} workers; decode holds {} bytes",
        last.b, last.chunked_prefill_s, last.vanilla_prefill_s, report.workers, last.decode_state_bytes
    );
    Ok(())
}
