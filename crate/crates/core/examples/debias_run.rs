//! Teacher on planted-bias synthetic data, then plain and debiased students,
//! scored on an anti-biased dev split.
//!
//! `cargo run --release --example debias_run -- [bias_rate] [tau] [seeds] [first_seed]`

use qadebias::bias::{bias_ratio, bias_weights_for, BiasConfig};
use qadebias::corpus::{generate_synthetic, tokenize_example, SynthConfig, Vocab};
use qadebias::distill::{train_student, DomainData, LossMode, TargetOptions};
use qadebias::metrics::evaluate;
use qadebias::spanmodel::{cache_teacher_outputs, train_teacher, OptimizerConfig, SpanModelConfig};

fn main() -> qadebias::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rate: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let tau: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let first: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let synth = |n, rate, seed| {
        generate_synthetic(&SynthConfig { n_examples: n, planted_bias_rate: rate, ..Default::default() }, seed)
    };
    let train = synth(2000, rate, 11)?;
    let anti_dev = synth(500, 0.0, 12)?;
    let clean_dev = synth(500, rate, 13)?;
    let vocab = Vocab::build(&train, 1);
    let base = SpanModelConfig {
        optimizer: OptimizerConfig { learning_rate: 1e-3, batch_size: 8, ..Default::default() },
        ..Default::default()
    };

    let tokenized: Vec<_> = train.iter().map(tokenize_example).collect::<Result<_, _>>()?;
    let bias_cfg = BiasConfig { window: 4, temperature: tau, max_answer_len: 1, ..Default::default() };
    let weights = bias_weights_for(&tokenized, &bias_cfg)?;
    let mean_w = weights.iter().map(|w| w.w_start).sum::<f64>() / weights.len() as f64;
    println!("bias ratio {:.3}, mean w_start {:.3}", bias_ratio(&weights)?, mean_w);

    let (mut kd_sum, mut deb_sum) = (0.0, 0.0);
    for seed in first..first + seeds {
        let (teacher, _) = train_teacher(SpanModelConfig { seed: 100 + seed, ..base.clone() }, &train, Some(vocab.clone()))?;
        let t_anti = evaluate(&teacher.predict_all(&anti_dev)?, &anti_dev)?.exact_match;
        let t_clean = evaluate(&teacher.predict_all(&clean_dev)?, &clean_dev)?.exact_match;
        let domain = DomainData {
            name: "synthetic".into(),
            examples: train.clone(),
            teacher: cache_teacher_outputs(&teacher, &train)?
                .into_iter()
                .map(|t| (t.example_id.clone(), t))
                .collect(),
            weights: weights.iter().map(|w| (w.id.clone(), w.clone())).collect(),
        };
        let mut em = Vec::new();
        for mode in [LossMode::Kd, LossMode::KdDebiased] {
            let cfg = SpanModelConfig { seed: 200 + seed, ..base.clone() };
            let (student, _) = train_student(cfg, vocab.clone(), std::slice::from_ref(&domain), TargetOptions { loss_mode: mode, mix: 0.0 })?;
            em.push(evaluate(&student.predict_all(&anti_dev)?, &anti_dev)?.exact_match);
        }
        println!("seed {seed}: teacher anti {t_anti:.1} clean {t_clean:.1} | kd {:.1} debiased {:.1}", em[0], em[1]);
        kd_sum += em[0];
        deb_sum += em[1];
    }
    let n = seeds as f64;
    println!("mean anti-biased EM: kd {:.2} kd_debiased {:.2} margin {:+.2}", kd_sum / n, deb_sum / n, (deb_sum - kd_sum) / n);
    Ok(())
}
