//! Command-line pipeline. Every command reads and writes files only, and
//! records a `<out>.manifest.json` with its resolved settings and the
//! SHA-256 of every input and output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    collect_errors, error_distribution, error_reduction_report, AnalysisConfig, ErrorRecord, ReductionReport,
};
use crate::bias::{bias_weights_for, write_bias_weights, BiasConfig, BiasRatioReport, Gating};
use crate::corpus::{
    generate_synthetic, load_mrqa_jsonl, load_squad_json, read_dataset, tokenize_example, write_dataset, LoadOptions,
    SynthConfig, Vocab,
};
use crate::distill::{train_student_from_plan, DistillPlan};
use crate::metrics::{evaluate, EvalResult, Predictions};
use crate::spanmodel::{
    cache_teacher_outputs, load_checkpoint, load_vocab, save_checkpoint, train_teacher, write_teacher_cache,
    EpochLog, SpanModelConfig,
};
use crate::jsonl;

#[derive(Parser, Debug)]
#[command(name = "qadebias", version, about = "Debiased extractive QA pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a SQuAD JSON or MRQA JSONL file to the canonical dataset format.
    Convert(ConvertArgs),
    /// Generate a synthetic dataset with planted lexical bias.
    Synth(SynthArgs),
    /// Train a span model on gold answers.
    TrainTeacher(TrainTeacherArgs),
    /// Cache a model's start/end log-probabilities for every example.
    CacheLogits(CacheArgs),
    /// Compute lexical-overlap bias weights.
    BiasWeights(BiasArgs),
    /// Train a student from a distillation plan.
    TrainStudent(TrainStudentArgs),
    /// Score predictions (or a model) with exact match and F1.
    Evaluate(EvaluateArgs),
    /// Categorize wrong predictions and optionally compare two prediction sets.
    AnalyzeErrors(AnalyzeArgs),
    /// Render text tables from earlier outputs.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Squad,
    Mrqa,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Format,
    #[arg(long)]
    domain: String,
    #[arg(long)]
    adversarial: bool,
    /// Abort on the first invalid example instead of skipping it.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    sentences: usize,
    #[arg(long, default_value_t = 0.8)]
    bias_rate: f64,
    #[arg(long)]
    adversarial: bool,
    #[arg(long, default_value = "synthetic")]
    domain: String,
    #[arg(long, default_value_t = 40)]
    entities: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Model settings: an optional JSON config file plus flag overrides.
#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_seq_len: Option<usize>,
}

impl ModelArgs {
    fn inputs(&self) -> Vec<PathBuf> {
        self.config.iter().cloned().collect()
    }

    fn resolve(&self, base: SpanModelConfig) -> anyhow::Result<SpanModelConfig> {
        let mut cfg = match &self.config {
            Some(path) => jsonl::read_json(path)?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.optimizer.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.optimizer.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            cfg.optimizer.batch_size = b;
        }
        if let Some(m) = self.max_seq_len {
            cfg.max_seq_len = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrainTeacherArgs {
    #[arg(long)]
    data: PathBuf,
    /// Vocabulary file or checkpoint to reuse; built from `--data` otherwise.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Extra datasets folded into a freshly built vocabulary.
    #[arg(long = "vocab-data")]
    vocab_data: Vec<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Per-epoch training log (JSONL).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write the vocabulary as JSON as well.
    #[arg(long)]
    vocab_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CacheArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GatingArg {
    Span,
    Endpoint,
}

#[derive(Args, Debug)]
struct BiasArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    #[arg(long, value_enum, default_value_t = GatingArg::Span)]
    gating: GatingArg,
    /// Also write the per-domain biased-example percentages (JSON).
    #[arg(long)]
    ratio_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainStudentArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Predictions file: JSON object of id → answer text.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pred: Option<PathBuf>,
    /// Predict with this checkpoint instead of reading predictions.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Where to write the model's predictions.
    #[arg(long, requires = "model")]
    pred_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Baseline predictions.
    #[arg(long)]
    pred: PathBuf,
    /// Debiased predictions; enables the error-reduction report.
    #[arg(long)]
    debiased_pred: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    theta: f64,
    /// Keep a seeded uniform sample of this many errors.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Error-reduction report (JSON); requires `--debiased-pred`.
    #[arg(long, requires = "debiased_pred")]
    reduction_out: Option<PathBuf>,
    /// Error records (JSONL).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// `NAME=metrics.json` for the baseline model (repeatable).
    #[arg(long)]
    baseline: Vec<String>,
    /// `NAME=metrics.json` for the debiased model (repeatable).
    #[arg(long)]
    debiased: Vec<String>,
    #[arg(long)]
    bias_ratio: Option<PathBuf>,
    /// Error records from `analyze-errors`.
    #[arg(long)]
    errors: Option<PathBuf>,
    #[arg(long)]
    reduction: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Convert(a) => convert(a),
        Command::Synth(a) => synth(a),
        Command::TrainTeacher(a) => train_teacher_cmd(a),
        Command::CacheLogits(a) => cache_logits(a),
        Command::BiasWeights(a) => bias_weights(a),
        Command::TrainStudent(a) => train_student_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::AnalyzeErrors(a) => analyze(a),
        Command::Report(a) => report(a),
    }
}

fn require_files(paths: &[&Path]) -> anyhow::Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("missing input file {}", p.display());
        }
    }
    Ok(())
}

fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct Manifest {
    tool: String,
    command: &'static str,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// Writes `<primary>.manifest.json`. Logs carrying wall-clock times are
/// listed in the config but not hashed.
fn write_manifest(command: &'static str, config: Value, inputs: &[PathBuf], outputs: &[&Path]) -> anyhow::Result<()> {
    let hash_all = |paths: &mut dyn Iterator<Item = &Path>| -> anyhow::Result<BTreeMap<String, String>> {
        paths.map(|p| Ok((p.display().to_string(), sha256_file(p)?))).collect()
    };
    let manifest = Manifest {
        tool: format!("qadebias {}", env!("CARGO_PKG_VERSION")),
        command,
        config,
        inputs: hash_all(&mut inputs.iter().map(PathBuf::as_path))?,
        outputs: hash_all(&mut outputs.iter().copied())?,
    };
    let primary = outputs.first().context("command produced no output")?;
    let mut path = primary.as_os_str().to_owned();
    path.push(".manifest.json");
    jsonl::write_json(Path::new(&path), &manifest)?;
    Ok(())
}

fn write_epoch_log(path: &Path, epochs: &[EpochLog]) -> anyhow::Result<()> {
    jsonl::write(path, epochs)?;
    Ok(())
}

fn convert(a: ConvertArgs) -> anyhow::Result<()> {
    require_files(&[&a.input])?;
    let opts = LoadOptions::new(a.domain.clone()).adversarial(a.adversarial).strict(a.strict);
    let loaded = match a.format {
        Format::Squad => load_squad_json(&a.input, &opts)?,
        Format::Mrqa => load_mrqa_jsonl(&a.input, &opts)?,
    };
    for r in &loaded.rejected {
        eprintln!("warning: rejected {}: {}", r.id, r.reason);
    }
    write_dataset(&a.out, &loaded.examples)?;
    let config = json!({
        "format": a.format,
        "domain": a.domain,
        "adversarial": a.adversarial,
        "strict": a.strict,
        "examples": loaded.examples.len(),
        "rejected": loaded.rejected,
    });
    write_manifest("convert", config, &[a.input], &[&a.out])
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        n_examples: a.n,
        n_sentences: a.sentences,
        planted_bias_rate: a.bias_rate,
        adversarial: a.adversarial,
        domain: a.domain,
        n_entities: a.entities,
    };
    let data = generate_synthetic(&cfg, a.seed)?;
    write_dataset(&a.out, &data)?;
    write_manifest("synth", json!({ "synth": cfg, "seed": a.seed }), &[], &[&a.out])
}

fn train_teacher_cmd(a: TrainTeacherArgs) -> anyhow::Result<()> {
    let mut inputs = vec![a.data.clone()];
    inputs.extend(a.vocab.iter().cloned());
    inputs.extend(a.vocab_data.iter().cloned());
    inputs.extend(a.model.inputs());
    require_files(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;

    let config = a.model.resolve(SpanModelConfig::default())?;
    let train = read_dataset(&a.data)?;
    let vocab = match &a.vocab {
        Some(path) => load_vocab(path)?,
        None => {
            let mut pool = train.clone();
            for extra in &a.vocab_data {
                pool.extend(read_dataset(extra)?);
            }
            Vocab::build(&pool, config.min_vocab_freq)
        }
    };
    let (model, log) = train_teacher(config, &train, Some(vocab))?;
    if !log.skipped.is_empty() {
        eprintln!("warning: {} examples skipped (gold span truncated)", log.skipped.len());
    }
    save_checkpoint(&model, &a.out)?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(v) = &a.vocab_out {
        jsonl::write_json(v, &model.vocab)?;
        outputs.push(v);
    }
    if let Some(l) = &a.log {
        write_epoch_log(l, &log.epochs)?;
    }
    let manifest_cfg = json!({
        "model": model.config,
        "log": a.log,
        "skipped": log.skipped,
        "truncated": log.truncated,
        "final_loss": log.epochs.last().map(|e| e.mean_loss),
    });
    write_manifest("train-teacher", manifest_cfg, &inputs, &outputs)
}

fn cache_logits(a: CacheArgs) -> anyhow::Result<()> {
    require_files(&[&a.model, &a.data])?;
    let model = load_checkpoint(&a.model)?;
    let data = read_dataset(&a.data)?;
    let records = cache_teacher_outputs(&model, &data)?;
    write_teacher_cache(&a.out, &records)?;
    let cfg = json!({ "fingerprint": model.fingerprint(), "records": records.len() });
    write_manifest("cache-logits", cfg, &[a.model, a.data], &[&a.out])
}

fn bias_weights(a: BiasArgs) -> anyhow::Result<()> {
    require_files(&[&a.data])?;
    let cfg = BiasConfig {
        window: a.window,
        temperature: a.temperature,
        max_answer_len: a.max_len,
        gating: match a.gating {
            GatingArg::Span => Gating::Span,
            GatingArg::Endpoint => Gating::Endpoint,
        },
    };
    let data = read_dataset(&a.data)?;
    let tokenized = data.iter().map(tokenize_example).collect::<crate::Result<Vec<_>>>()?;
    let weights = bias_weights_for(&tokenized, &cfg)?;
    write_bias_weights(&a.out, &weights)?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(r) = &a.ratio_out {
        jsonl::write_json(r, &BiasRatioReport::from_weights(&weights, &data)?)?;
        outputs.push(r);
    }
    write_manifest("bias-weights", json!({ "bias": cfg }), &[a.data], &outputs)
}

fn train_student_cmd(a: TrainStudentArgs) -> anyhow::Result<()> {
    require_files(&[&a.plan])?;
    let plan = DistillPlan::load(&a.plan)?;
    let mut inputs = vec![a.plan.clone(), plan.vocab.clone()];
    for d in &plan.domains {
        inputs.push(d.dataset.clone());
        if plan.loss_mode != crate::distill::LossMode::Onehot {
            inputs.push(d.teacher_cache.clone());
        }
        if plan.loss_mode == crate::distill::LossMode::KdDebiased {
            inputs.extend(d.bias_weights.iter().cloned());
        }
    }
    require_files(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;

    let (model, log) = train_student_from_plan(&plan)?;
    if !log.missing_weights.is_empty() {
        eprintln!("warning: {} examples had no bias weight (β = 0)", log.missing_weights.len());
    }
    save_checkpoint(&model, &a.out)?;
    if let Some(l) = &a.log {
        write_epoch_log(l, &log.training.epochs)?;
    }
    let cfg = json!({
        "plan": plan,
        "model": model.config,
        "log": a.log,
        "missing_weights": log.missing_weights.len(),
        "skipped": log.training.skipped,
        "final_loss": log.training.epochs.last().map(|e| e.mean_loss),
    });
    write_manifest("train-student", cfg, &inputs, &[&a.out])
}

fn evaluate_cmd(a: EvaluateArgs) -> anyhow::Result<()> {
    let data_path = a.data.clone();
    let mut inputs = vec![a.data];
    inputs.extend(a.pred.iter().cloned());
    inputs.extend(a.model.iter().cloned());
    require_files(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let data = read_dataset(&data_path)?;
    let predictions: Predictions = match (&a.pred, &a.model) {
        (Some(p), _) => jsonl::read_json(p)?,
        (None, Some(m)) => load_checkpoint(m)?.predict_all(&data)?,
        (None, None) => bail!("either --pred or --model is required"),
    };
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(p) = &a.pred_out {
        jsonl::write_json(p, &predictions)?;
        outputs.push(p);
    }
    let result = evaluate(&predictions, &data)?;
    jsonl::write_json(&a.out, &result)?;
    write_manifest("evaluate", json!({}), &inputs, &outputs)
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    let mut inputs = vec![a.data.clone(), a.pred.clone()];
    inputs.extend(a.debiased_pred.iter().cloned());
    require_files(&inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let cfg = AnalysisConfig { lexical_threshold: a.theta };
    let data = read_dataset(&a.data)?;
    let baseline: Predictions = jsonl::read_json(&a.pred)?;
    let mut records = collect_errors(&data, &baseline, &cfg)?;
    if let Some(n) = a.sample {
        if n < records.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut keep = sample(&mut rng, records.len(), n).into_vec();
            keep.sort_unstable();
            records = keep.into_iter().map(|i| records[i].clone()).collect();
        }
    }
    jsonl::write(&a.out, &records)?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let (Some(deb), Some(out)) = (&a.debiased_pred, &a.reduction_out) {
        let debiased: Predictions = jsonl::read_json(deb)?;
        let sampled: std::collections::BTreeSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
        let subset: Vec<_> = data
            .iter()
            .filter(|e| a.sample.is_none() || sampled.contains(e.id.as_str()))
            .cloned()
            .collect();
        jsonl::write_json(out, &error_reduction_report(&subset, &baseline, &debiased, &cfg)?)?;
        outputs.push(out);
    }
    let config = json!({ "analysis": cfg, "sample": a.sample, "seed": a.seed, "errors": records.len() });
    write_manifest("analyze-errors", config, &inputs, &outputs)
}

fn parse_named(spec: &str) -> anyhow::Result<(String, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .with_context(|| format!("expected NAME=PATH, got {spec:?}"))?;
    Ok((name.to_owned(), PathBuf::from(path)))
}

/// EM/F1 comparison: one row per dataset, baseline vs debiased.
fn comparison_table(baseline: &BTreeMap<String, EvalResult>, debiased: &BTreeMap<String, EvalResult>) -> String {
    let mut names: Vec<&String> = baseline.keys().chain(debiased.keys()).collect();
    names.sort();
    names.dedup();
    let cell = |m: Option<&EvalResult>, f: fn(&EvalResult) -> f64| m.map_or("-".to_string(), |r| format!("{:.1}", f(r)));
    let mut rows = vec![[
        "Dataset".to_string(),
        "EM baseline".into(),
        "EM debiased".into(),
        "F1 baseline".into(),
        "F1 debiased".into(),
    ]];
    for n in names {
        let (b, d) = (baseline.get(n), debiased.get(n));
        rows.push([
            n.clone(),
            cell(b, |r| r.exact_match),
            cell(d, |r| r.exact_match),
            cell(b, |r| r.f1),
            cell(d, |r| r.f1),
        ]);
    }
    let widths: Vec<usize> = (0..5).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(&cells.join(" | "));
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 3 * 4));
            out.push('\n');
        }
    }
    out
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let mut inputs = Vec::new();
    let mut load_metrics = |specs: &[String]| -> anyhow::Result<BTreeMap<String, EvalResult>> {
        let mut out = BTreeMap::new();
        for s in specs {
            let (name, path) = parse_named(s)?;
            require_files(&[&path])?;
            out.insert(name, jsonl::read_json(&path)?);
            inputs.push(path);
        }
        Ok(out)
    };
    let baseline = load_metrics(&a.baseline)?;
    let debiased = load_metrics(&a.debiased)?;
    for p in a.bias_ratio.iter().chain(&a.errors).chain(&a.reduction) {
        require_files(&[p])?;
        inputs.push(p.clone());
    }

    let mut text = String::new();
    if !baseline.is_empty() || !debiased.is_empty() {
        text.push_str("EM / F1\n");
        text.push_str(&comparison_table(&baseline, &debiased));
        text.push('\n');
    }
    if let Some(p) = &a.bias_ratio {
        let ratio: BiasRatioReport = jsonl::read_json(p)?;
        text.push_str("Biased examples per domain\n");
        text.push_str(&ratio.render());
        text.push('\n');
    }
    if let Some(p) = &a.errors {
        let records: Vec<ErrorRecord> = jsonl::read(p)?;
        text.push_str("Error distribution\n");
        text.push_str(&error_distribution(&records).render());
        text.push('\n');
    }
    if let Some(p) = &a.reduction {
        let r: ReductionReport = jsonl::read_json(p)?;
        text.push_str("Error reduction\n");
        text.push_str(&r.render());
        text.push('\n');
    }
    if text.is_empty() {
        bail!("nothing to report: pass at least one of --baseline, --debiased, --bias-ratio, --errors, --reduction");
    }
    std::fs::write(&a.out, &text).with_context(|| format!("writing {}", a.out.display()))?;
    write_manifest("report", json!({}), &inputs, &[&a.out])
}
