//! Train the reference model on synthetic data and report dev EM/F1.
//!
//! `cargo run --release --example synthetic_run -- [lr] [batch] [epochs] [n_train] [seed]`

use std::time::Instant;

use qadebias::corpus::{generate_synthetic, SynthConfig};
use qadebias::metrics::evaluate;
use qadebias::spanmodel::{train_teacher, SpanModelConfig};

fn main() -> qadebias::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let mut cfg = SpanModelConfig::default();
    cfg.optimizer.learning_rate = arg(0, cfg.optimizer.learning_rate);
    cfg.optimizer.batch_size = arg(1, cfg.optimizer.batch_size as f64) as usize;
    cfg.optimizer.epochs = arg(2, cfg.optimizer.epochs as f64) as usize;
    let n_train = arg(3, 2000.0) as usize;
    cfg.seed = arg(4, 0.0) as u64;

    let train = generate_synthetic(&SynthConfig { n_examples: n_train, ..Default::default() }, 1 + 10 * cfg.seed)?;
    let dev = generate_synthetic(&SynthConfig { n_examples: 500, ..Default::default() }, 2 + 10 * cfg.seed)?;
    let started = Instant::now();
    let (model, log) = train_teacher(cfg, &train, None)?;
    for e in &log.epochs {
        println!("epoch {} loss {:.4} ({:.1}s)", e.epoch, e.mean_loss, e.wall_seconds);
    }
    let result = evaluate(&model.predict_all(&dev)?, &dev)?;
    println!(
        "dev EM {:.2} F1 {:.2} in {:.1}s",
        result.exact_match,
        result.f1,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
