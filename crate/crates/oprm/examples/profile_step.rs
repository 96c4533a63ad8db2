// Scratch profiler (temporary).
use oprm::ar::*;
use oprm::model::*;
use oprm::*;
use std::time::Instant;

fn main() {
    let vocab = Vocab::controlled(64, 64).unwrap();
    let mut proto = BatchProtocol::new(vec![1, 2, 4, 8, 16, 32], 96);
    proto.idk_fraction = 0.25;
    let cfg = TrainConfig::new(64, 4, proto.clone(), 1, 1);
    let params = ModelParams::init(cfg.model_config(&vocab)).unwrap();

    let t = Instant::now();
    let batch = make_training_batch(&proto, &vocab, 7).unwrap();
    println!("batch gen: {:?} ({} samples)", t.elapsed(), batch.samples.len());

    let t = Instant::now();
    let l = params.loss(&batch).unwrap();
    println!("forward-only loss: {:?} (loss {l:.3})", t.elapsed());

    let t = Instant::now();
    let (_, _g) = params.loss_and_grads(&batch).unwrap();
    println!("fwd+bwd 1 worker: {:?}", t.elapsed());

    let t = Instant::now();
    let (_, _g) = params.loss_and_grads_with_workers(&batch, 2).unwrap();
    println!("fwd+bwd 2 workers: {:?}", t.elapsed());

    let t = Instant::now();
    let (_, _g) = params.loss_and_grads_stacked(&batch).unwrap();
    println!("fwd+bwd stacked: {:?}", t.elapsed());

    // Pure prefill throughput.
    let tokens: Vec<u32> = (0..9800).map(|i| (i % 64) as u32 + 4).collect();
    let t = Instant::now();
    let _ = params.prefill(&tokens).unwrap();
    let dt = t.elapsed();
    println!(
        "prefill 9800 tokens: {:?} ({:.1} us/token)",
        dt,
        dt.as_secs_f64() * 1e6 / 9800.0
    );
}
