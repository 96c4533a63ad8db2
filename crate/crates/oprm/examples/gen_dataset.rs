//! Generate associative-recall samples in both protocols and print them as
//! line-delimited JSON records.
//!
//! ```bash
//! cargo run -p oprm --example gen_dataset
//! ```

use oprm::ar::{gen_controlled_sample, gen_zero_shot_sample};
use oprm::Vocab;

fn main() -> oprm::Result<()> {
    let controlled = Vocab::controlled(64, 64)?;
    println!("# controlled protocol: single-token keys and values, N=32");
    for seed in 0..3 {
        let s = gen_controlled_sample(4, 32, &controlled, seed)?;
        println!("{}", s.to_json_line());
    }

    let zs = Vocab::zero_shot();
    println!("\n# zero-shot protocol: 3-letter keys, 5-digit values, N=64");
    for seed in 0..3 {
        let s = gen_zero_shot_sample(3, 64, &zs, seed)?;
        println!("{}", s.to_json_line());
    }
    Ok(())
}
