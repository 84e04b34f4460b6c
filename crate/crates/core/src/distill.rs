//! Confidence-regularized distillation.
//!
//! A student learns from its domain teacher's start/end distributions. In
//! debiased mode each distribution is first flattened by the example's bias
//! weight: `q ∝ p^(1-β)`, so examples the bias model already answers carry
//! a weaker signal.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{load_bias_weights, BiasWeight};
use crate::corpus::{read_dataset, tokenize_example, Example, Vocab};
use crate::prob::{cross_entropy, is_distribution, log_softmax};
use crate::spanmodel::{
    load_vocab, one_hot_item, read_teacher_cache, SpanModel, SpanModelConfig, TeacherTargets, TrainItem,
    Trainer, TrainingLog,
};
use crate::{jsonl, Error, Result};

/// Tolerance on the teacher distributions' total mass.
const MASS_TOLERANCE: f64 = 1e-6;

/// Flattens `p` towards uniform over its support; `beta = 0` returns `p`
/// unchanged and `beta = 1` the uniform distribution over nonzero entries.
pub fn smooth_distribution(p: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidData(format!("smoothing strength {beta} outside [0, 1]")));
    }
    if !is_distribution(p, MASS_TOLERANCE) {
        return Err(Error::InvalidData("smoothing input is not a probability distribution".into()));
    }
    if beta == 0.0 {
        return Ok(p.to_vec());
    }
    let exponent = 1.0 - beta;
    let logs: Vec<f64> = p
        .iter()
        .map(|&x| if x > 0.0 { exponent * x.ln() } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Student targets for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedTargets {
    pub example_id: String,
    pub t_start: Vec<f64>,
    pub t_end: Vec<f64>,
}

impl SmoothedTargets {
    /// Teacher distributions smoothed per head by `(β_start, β_end)`.
    pub fn from_teacher(teacher: &TeacherTargets, beta_start: f64, beta_end: f64) -> Result<Self> {
        Ok(SmoothedTargets {
            example_id: teacher.example_id.clone(),
            t_start: smooth_distribution(&teacher.start_probs(), beta_start)?,
            t_end: smooth_distribution(&teacher.end_probs(), beta_end)?,
        })
    }
}

fn check_head(target: &[f64], logits: &[f64], head: &'static str) -> Result<()> {
    if target.len() != logits.len() {
        return Err(Error::LengthMismatch { what: head, left: target.len(), right: logits.len() });
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidData(format!("non-finite {head}")));
    }
    Ok(())
}

/// `½ [CE(t_start, softmax(start)) + CE(t_end, softmax(end))]`.
pub fn kd_loss(targets: &SmoothedTargets, start_logits: &[f64], end_logits: &[f64]) -> Result<f64> {
    check_head(&targets.t_start, start_logits, "start logits")?;
    check_head(&targets.t_end, end_logits, "end logits")?;
    let start = cross_entropy(&targets.t_start, &log_softmax(start_logits));
    let end = cross_entropy(&targets.t_end, &log_softmax(end_logits));
    Ok(0.5 * (start + end))
}

/// `∂L/∂z = ½ (softmax(z) − t)` for each head.
pub fn kd_loss_gradient(
    targets: &SmoothedTargets,
    start_logits: &[f64],
    end_logits: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_head(&targets.t_start, start_logits, "start logits")?;
    check_head(&targets.t_end, end_logits, "end logits")?;
    let grad = |z: &[f64], t: &[f64]| -> Vec<f64> {
        log_softmax(z).iter().zip(t).map(|(l, t)| 0.5 * (l.exp() - t)).collect()
    };
    Ok((grad(start_logits, &targets.t_start), grad(end_logits, &targets.t_end)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Gold one-hot targets, as for a teacher.
    Onehot,
    /// Unsmoothed teacher distributions.
    Kd,
    /// Teacher distributions smoothed by bias weights.
    #[default]
    KdDebiased,
}

/// One domain of a plan; paths are relative to the plan file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub dataset: PathBuf,
    pub teacher_cache: PathBuf,
    #[serde(default)]
    pub bias_weights: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillPlan {
    pub domains: Vec<DomainSpec>,
    /// Vocabulary file or checkpoint shared by the teachers and the student.
    pub vocab: PathBuf,
    #[serde(default)]
    pub loss_mode: LossMode,
    #[serde(default)]
    pub student: SpanModelConfig,
    #[serde(default)]
    pub seed: u64,
    /// Weight of the gold one-hot target mixed into soft targets.
    #[serde(default)]
    pub mix: f64,
}

impl DistillPlan {
    pub fn load(path: &Path) -> Result<Self> {
        let mut plan: DistillPlan = jsonl::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut plan.vocab);
        for d in &mut plan.domains {
            resolve(&mut d.dataset);
            resolve(&mut d.teacher_cache);
            if let Some(w) = &mut d.bias_weights {
                resolve(w);
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Config("distillation plan lists no domains".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.domains {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::Config(format!("domain {} listed twice", d.name)));
            }
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(Error::Config(format!("mix {} outside [0, 1]", self.mix)));
        }
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }
}

/// The teacher registered for the example's domain.
pub fn route_teacher<'p>(example: &Example, plan: &'p DistillPlan) -> Result<&'p DomainSpec> {
    plan.domain(&example.domain)
        .ok_or_else(|| Error::UnknownDomain(example.domain.clone()))
}

/// In-memory data for one domain.
#[derive(Debug, Clone, Default)]
pub struct DomainData {
    pub name: String,
    pub examples: Vec<Example>,
    pub teacher: BTreeMap<String, TeacherTargets>,
    pub weights: BTreeMap<String, BiasWeight>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOptions {
    pub loss_mode: LossMode,
    pub mix: f64,
}

/// Training items plus bookkeeping from building them.
#[derive(Debug, Clone, Default)]
pub struct StudentTargets {
    pub items: Vec<TrainItem>,
    /// Domain that supplied each item's targets.
    pub sources: Vec<String>,
    pub missing_weights: Vec<String>,
    pub skipped: Vec<String>,
    pub truncated: Vec<String>,
}

fn mix_one_hot(mut soft: Vec<f64>, gold: usize, mix: f64) -> Vec<f64> {
    if mix > 0.0 {
        for (i, t) in soft.iter_mut().enumerate() {
            *t = (1.0 - mix) * *t + if i == gold { mix } else { 0.0 };
        }
    }
    soft
}

/// Builds per-example targets, routing each example to its own domain's
/// teacher. Examples are taken domain by domain in the given order.
pub fn build_targets(model: &SpanModel, domains: &[DomainData], opts: TargetOptions) -> Result<StudentTargets> {
    let mut out = StudentTargets::default();
    for domain in domains {
        for ex in &domain.examples {
            if ex.domain != domain.name {
                return Err(Error::UnknownDomain(format!(
                    "{} (example {} listed under domain {})",
                    ex.domain, ex.id, domain.name
                )));
            }
            let tok = tokenize_example(ex)?;
            if opts.loss_mode == LossMode::Onehot {
                match one_hot_item(model, &tok)? {
                    Some(item) => {
                        if item.input.truncated > 0 {
                            out.truncated.push(ex.id.clone());
                        }
                        out.items.push(item);
                        out.sources.push(domain.name.clone());
                    }
                    None => out.skipped.push(ex.id.clone()),
                }
                continue;
            }

            let teacher = domain
                .teacher
                .get(&ex.id)
                .ok_or_else(|| Error::InvalidData(format!("teacher cache for {} has no entry for {}", domain.name, ex.id)))?;
            let input = model.encode(&tok)?;
            if teacher.start_logprobs.len() != input.context_len {
                return Err(Error::LengthMismatch {
                    what: "teacher cache entry vs. encoded context",
                    left: teacher.start_logprobs.len(),
                    right: input.context_len,
                });
            }
            let (beta_start, beta_end) = match opts.loss_mode {
                LossMode::KdDebiased => match domain.weights.get(&ex.id) {
                    Some(w) => (w.w_start, w.w_end),
                    None => {
                        out.missing_weights.push(ex.id.clone());
                        (0.0, 0.0)
                    }
                },
                _ => (0.0, 0.0),
            };
            let smoothed = SmoothedTargets::from_teacher(teacher, beta_start, beta_end)?;
            let gold = tok.gold_spans[0];
            let (t_start, t_end) = if gold.end < input.context_len {
                (mix_one_hot(smoothed.t_start, gold.start, opts.mix), mix_one_hot(smoothed.t_end, gold.end, opts.mix))
            } else {
                (smoothed.t_start, smoothed.t_end)
            };
            if input.truncated > 0 {
                out.truncated.push(ex.id.clone());
            }
            out.items.push(TrainItem { example_id: ex.id.clone(), input, start_target: t_start, end_target: t_end });
            out.sources.push(domain.name.clone());
        }
    }
    if !out.missing_weights.is_empty() {
        log::warn!("{} examples have no bias weight; using β = 0", out.missing_weights.len());
    }
    Ok(out)
}

/// Outcome of a student run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudentLog {
    pub training: TrainingLog,
    /// Examples that fell back to β = 0 for lack of a bias weight.
    pub missing_weights: Vec<String>,
}

/// Trains a student over the union of `domains` with a freshly initialized
/// model; `config.seed` drives both initialization and batch order.
pub fn train_student(
    config: SpanModelConfig,
    vocab: Vocab,
    domains: &[DomainData],
    opts: TargetOptions,
) -> Result<(SpanModel, StudentLog)> {
    let mut model = SpanModel::new(config, vocab)?;
    for d in domains {
        if let Some(bad) = d.teacher.values().find(|t| t.fingerprint != model.fingerprint()) {
            return Err(Error::Fingerprint { expected: model.fingerprint().to_owned(), found: bad.fingerprint.clone() });
        }
    }
    let targets = build_targets(&model, domains, opts)?;
    if targets.items.is_empty() {
        return Err(Error::Empty("no trainable student examples"));
    }
    let mut log = StudentLog {
        training: TrainingLog { epochs: Vec::new(), skipped: targets.skipped, truncated: targets.truncated },
        missing_weights: targets.missing_weights,
    };
    if model.config.optimizer.epochs > 0 {
        log.training.epochs = Trainer::new(&model).fit(&mut model, &targets.items)?;
    }
    Ok((model, log))
}

/// Loads every file a plan names. Teacher caches must match the plan's vocabulary.
pub fn load_plan_data(plan: &DistillPlan) -> Result<(Vocab, Vec<DomainData>)> {
    plan.validate()?;
    let vocab = load_vocab(&plan.vocab)?;
    let fingerprint = vocab.fingerprint();
    let mut domains = Vec::with_capacity(plan.domains.len());
    for spec in &plan.domains {
        let examples = read_dataset(&spec.dataset)?;
        for ex in &examples {
            route_teacher(ex, plan)?;
            if ex.domain != spec.name {
                return Err(Error::InvalidData(format!(
                    "dataset {} holds example {} of domain {}",
                    spec.dataset.display(),
                    ex.id,
                    ex.domain
                )));
            }
        }
        let teacher = if plan.loss_mode == LossMode::Onehot {
            BTreeMap::new()
        } else {
            read_teacher_cache(&spec.teacher_cache, &fingerprint)?
        };
        let weights = match (&spec.bias_weights, plan.loss_mode) {
            (Some(path), LossMode::KdDebiased) => {
                let loaded = load_bias_weights(path, false)?;
                crate::bias::join_weights(&loaded.weights, &examples)?;
                loaded.weights
            }
            _ => BTreeMap::new(),
        };
        domains.push(DomainData { name: spec.name.clone(), examples, teacher, weights });
    }
    Ok((vocab, domains))
}

/// Runs a plan end to end.
pub fn train_student_from_plan(plan: &DistillPlan) -> Result<(SpanModel, StudentLog)> {
    let (vocab, domains) = load_plan_data(plan)?;
    let config = SpanModelConfig { seed: plan.seed, ..plan.student.clone() };
    let opts = TargetOptions { loss_mode: plan.loss_mode, mix: plan.mix };
    train_student(config, vocab, &domains, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};
    use crate::prob::entropy;
    use crate::spanmodel::{cache_teacher_outputs, item_loss, Trainer};
    use proptest::prelude::*;

    #[test]
    fn smoothing_fixed_points() {
        let p = [0.7, 0.2, 0.1, 0.0];
        assert_eq!(smooth_distribution(&p, 0.0).unwrap(), p.to_vec());
        let q = smooth_distribution(&p, 1.0).unwrap();
        for (a, b) in q.iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn smoothing_matches_high_precision_oracle() {
        // 50-digit evaluation of p^(1/2) / Σ p^(1/2)
        let q = smooth_distribution(&[0.7, 0.2, 0.1], 0.5).unwrap();
        let oracle = [0.5228793830078697, 0.27949078654617095, 0.19762983044595936];
        for (a, b) in q.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn smoothing_rejects_bad_inputs() {
        assert!(smooth_distribution(&[0.5, 0.5], 1.5).is_err());
        assert!(smooth_distribution(&[0.5, 0.5], -0.1).is_err());
        assert!(smooth_distribution(&[0.5, 0.6], 0.5).is_err());
    }

    fn targets(t_start: &[f64], t_end: &[f64]) -> SmoothedTargets {
        SmoothedTargets { example_id: "x".into(), t_start: t_start.to_vec(), t_end: t_end.to_vec() }
    }

    #[test]
    fn uniform_loss_is_log_n() {
        let t = targets(&[0.25; 4], &[0.25; 4]);
        let loss = kd_loss(&t, &[0.0; 4], &[3.0; 4]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_at_targets_is_entropy_with_zero_gradient() {
        let p = [0.1, 0.6, 0.3];
        let logits: Vec<f64> = p.iter().map(|x: &f64| x.ln()).collect();
        let t = targets(&p, &p);
        let loss = kd_loss(&t, &logits, &logits).unwrap();
        assert!((loss - entropy(&p)).abs() < 1e-12);
        let (gs, ge) = kd_loss_gradient(&t, &logits, &logits).unwrap();
        assert!(gs.iter().chain(&ge).all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn loss_and_gradient_match_high_precision_oracle() {
        let t = targets(
            &[0.05, 0.1, 0.0, 0.3, 0.2, 0.15, 0.12, 0.08],
            &[0.0, 0.02, 0.08, 0.1, 0.1, 0.2, 0.25, 0.25],
        );
        let zs = [0.3, -1.2, 2.5, 0.0, 1.1, -0.4, 0.9, -2.0];
        let ze = [-0.5, 0.7, 1.9, -1.1, 0.2, 0.6, -0.3, 1.4];
        let loss = kd_loss(&t, &zs, &ze).unwrap();
        assert!((loss - 2.7181952414144235).abs() < 1e-12, "{loss}");
        let oracle = [
            0.006982671519074312,
            -0.042863701381974325,
            0.28864404220761286,
            -0.12630665419259151,
            -0.028821255531769752,
            -0.05911787534763962,
            -0.0017237729383806106,
            -0.036793454334331363,
        ];
        let (gs, ge) = kd_loss_gradient(&t, &zs, &ze).unwrap();
        for (a, b) in gs.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(gs.iter().sum::<f64>().abs() < 1e-15 && ge.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn loss_errors() {
        let t = targets(&[0.5, 0.5], &[0.5, 0.5]);
        assert!(matches!(kd_loss(&t, &[0.0], &[0.0, 0.0]), Err(Error::LengthMismatch { .. })));
        assert!(kd_loss(&t, &[0.0, f64::NAN], &[0.0, 0.0]).is_err());
        assert!(kd_loss_gradient(&t, &[0.0, 0.0], &[f64::INFINITY, 0.0]).is_err());
    }

    fn plan(names: &[&str]) -> DistillPlan {
        DistillPlan {
            domains: names
                .iter()
                .map(|n| DomainSpec {
                    name: n.to_string(),
                    dataset: format!("{n}.jsonl").into(),
                    teacher_cache: format!("{n}.cache.jsonl").into(),
                    bias_weights: None,
                })
                .collect(),
            vocab: "vocab.json".into(),
            loss_mode: LossMode::KdDebiased,
            student: SpanModelConfig::default(),
            seed: 0,
            mix: 0.0,
        }
    }

    fn tagged(domain: &str) -> Example {
        let mut ex = crate::spanmodel::tests::tiny_example();
        ex.domain = domain.into();
        ex
    }

    #[test]
    fn routing() {
        let two = plan(&["squad", "hotpotqa"]);
        assert_eq!(route_teacher(&tagged("hotpotqa"), &two).unwrap().name, "hotpotqa");
        assert_eq!(route_teacher(&tagged("squad"), &two).unwrap().name, "squad");
        let one = plan(&["squad"]);
        assert_eq!(route_teacher(&tagged("squad"), &one).unwrap().name, "squad");
        assert!(matches!(route_teacher(&tagged("newsqa"), &two), Err(Error::UnknownDomain(d)) if d == "newsqa"));
    }

    #[test]
    fn plan_validation() {
        assert!(plan(&[]).validate().is_err());
        assert!(plan(&["a", "a"]).validate().is_err());
        let mut p = plan(&["a"]);
        p.mix = 2.0;
        assert!(p.validate().is_err());
    }

    fn synthetic_setup() -> (SpanModelConfig, Vocab, DomainData) {
        let data = generate_synthetic(&SynthConfig { n_examples: 24, ..Default::default() }, 3).unwrap();
        let vocab = Vocab::build(&data, 1);
        let cfg = SpanModelConfig {
            hidden_dim: 8,
            ffn_dim: 16,
            max_seq_len: 64,
            seed: 2,
            optimizer: crate::spanmodel::OptimizerConfig { epochs: 1, batch_size: 8, ..Default::default() },
            ..Default::default()
        };
        let teacher_model = SpanModel::new(SpanModelConfig { seed: 99, ..cfg.clone() }, vocab.clone()).unwrap();
        let teacher = cache_teacher_outputs(&teacher_model, &data)
            .unwrap()
            .into_iter()
            .map(|t| (t.example_id.clone(), t))
            .collect();
        let domain = DomainData { name: "synthetic".into(), examples: data, teacher, weights: BTreeMap::new() };
        (cfg, vocab, domain)
    }

    #[test]
    fn zero_weights_reproduce_plain_kd() {
        let (cfg, vocab, mut domain) = synthetic_setup();
        let kd = TargetOptions { loss_mode: LossMode::Kd, mix: 0.0 };
        let (a, _) = train_student(cfg.clone(), vocab.clone(), std::slice::from_ref(&domain), kd).unwrap();
        domain.weights = domain.examples.iter().map(|e| (e.id.clone(), BiasWeight::zero(e.id.clone()))).collect();
        let debiased = TargetOptions { loss_mode: LossMode::KdDebiased, mix: 0.0 };
        let (b, log) = train_student(cfg, vocab, &[domain], debiased).unwrap();
        assert_eq!(a, b);
        assert!(log.missing_weights.is_empty());
    }

    #[test]
    fn missing_weights_are_counted() {
        let (cfg, vocab, domain) = synthetic_setup();
        let opts = TargetOptions { loss_mode: LossMode::KdDebiased, mix: 0.0 };
        let (_, log) = train_student(cfg, vocab, std::slice::from_ref(&domain), opts).unwrap();
        assert_eq!(log.missing_weights.len(), domain.examples.len());
    }

    #[test]
    fn onehot_mode_matches_teacher_step() {
        let (cfg, vocab, domain) = synthetic_setup();
        let model = SpanModel::new(cfg, vocab).unwrap();
        let opts = TargetOptions { loss_mode: LossMode::Onehot, mix: 0.0 };
        let student_items = build_targets(&model, std::slice::from_ref(&domain), opts).unwrap().items;
        let teacher_items: Vec<TrainItem> = domain
            .examples
            .iter()
            .filter_map(|e| one_hot_item(&model, &tokenize_example(e).unwrap()).unwrap())
            .collect();
        assert_eq!(student_items, teacher_items);

        let batch: Vec<&TrainItem> = student_items.iter().take(8).collect();
        let (mut a, mut b) = (model.clone(), model.clone());
        Trainer::new(&a).step(&mut a, &batch).unwrap();
        let teacher_batch: Vec<&TrainItem> = teacher_items.iter().take(8).collect();
        Trainer::new(&b).step(&mut b, &teacher_batch).unwrap();
        assert_eq!(a, b);
        assert!(item_loss(&a, &student_items[0]).is_finite());
    }

    #[test]
    fn missing_cache_entry_fails() {
        let (cfg, vocab, mut domain) = synthetic_setup();
        let first = domain.examples[0].id.clone();
        domain.teacher.remove(&first);
        let opts = TargetOptions { loss_mode: LossMode::Kd, mix: 0.0 };
        assert!(train_student(cfg, vocab, &[domain], opts).is_err());
    }

    #[test]
    fn mixing_keeps_targets_normalized() {
        let (cfg, vocab, domain) = synthetic_setup();
        let model = SpanModel::new(cfg, vocab).unwrap();
        let opts = TargetOptions { loss_mode: LossMode::Kd, mix: 0.3 };
        for item in build_targets(&model, &[domain], opts).unwrap().items {
            assert!(is_distribution(&item.start_target, 1e-6));
            assert!(is_distribution(&item.end_target, 1e-6));
        }
    }

    fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 1e-6f64..1.0], len)
            .prop_filter("needs mass", |w| w.iter().any(|&x| x > 0.0))
            .prop_map(|w| {
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
    }

    proptest! {
        #[test]
        fn smoothing_properties(p in (2usize..40).prop_flat_map(distribution)) {
            let mut previous = entropy(&p);
            for k in 0..=10 {
                let beta = k as f64 / 10.0;
                let q = smooth_distribution(&p, beta).unwrap();
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (a, b) in p.iter().zip(&q) {
                    prop_assert_eq!(*a == 0.0, *b == 0.0);
                }
                let h = entropy(&q);
                prop_assert!(h >= previous - 1e-12);
                previous = h;
            }
        }

        #[test]
        fn loss_bounded_below_by_entropy(
            (t, z) in (2usize..16).prop_flat_map(|n| (distribution(n), prop::collection::vec(-5.0f64..5.0, n)))
        ) {
            let tg = targets(&t, &t);
            let loss = kd_loss(&tg, &z, &z).unwrap();
            prop_assert!(loss >= entropy(&t) - 1e-9);
        }
    }
}
