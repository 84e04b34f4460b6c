//! Mini-batch training with soft start/end targets and an Adam optimizer.

use std::time::Instant;

use ndarray::{ArrayViewD, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{self, EncoderParams, Grads};
use super::{EncodedInput, OptimizerConfig, SpanModel, SpanModelConfig};
use crate::corpus::{tokenize_example, Example, TokenizedExample, Vocab};
use crate::prob::{cross_entropy, log_softmax};
use crate::{Error, Result};

/// Offset mixed into the model seed for the batch-order stream.
const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// One training instance: encoded input plus target distributions over its
/// (kept) context positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub example_id: String,
    pub input: EncodedInput,
    pub start_target: Vec<f64>,
    pub end_target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Examples left out because their gold span was truncated away.
    pub skipped: Vec<String>,
    /// Examples whose context tail was dropped.
    pub truncated: Vec<String>,
}

fn one_hot(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}

/// One-hot item on the first gold span, or `None` when truncation removed it.
pub fn one_hot_item(model: &SpanModel, tokenized: &TokenizedExample) -> Result<Option<TrainItem>> {
    let input = model.encode(tokenized)?;
    let Some(gold) = tokenized.gold_spans.first() else {
        return Err(Error::InvalidData(format!("example {} has no gold span", tokenized.example_id)));
    };
    if gold.end >= input.context_len {
        return Ok(None);
    }
    let n = input.context_len;
    Ok(Some(TrainItem {
        example_id: tokenized.example_id.clone(),
        start_target: one_hot(n, gold.start),
        end_target: one_hot(n, gold.end),
        input,
    }))
}

fn head_loss(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let lq = log_softmax(logits);
    let loss = cross_entropy(target, &lq);
    let grad = lq.iter().zip(target).map(|(l, t)| 0.5 * (l.exp() - t)).collect();
    (loss, grad)
}

/// `½ [CE(t_start, softmax(start)) + CE(t_end, softmax(end))]`.
pub fn item_loss(model: &SpanModel, item: &TrainItem) -> f64 {
    let logits = model.forward_encoded(&item.input);
    let (ls, _) = head_loss(&logits.start, &item.start_target);
    let (le, _) = head_loss(&logits.end, &item.end_target);
    0.5 * (ls + le)
}

pub fn item_loss_and_grads(model: &SpanModel, item: &TrainItem) -> (f64, Grads) {
    let heads = model.config.n_heads;
    let (logits, cache) = encoder::forward(&model.params, heads, &item.input);
    let (ls, gs) = head_loss(&logits.start, &item.start_target);
    let (le, ge) = head_loss(&logits.end, &item.end_target);
    let grads = encoder::backward(&model.params, heads, &cache, &gs, &ge);
    (0.5 * (ls + le), grads)
}

/// Mean loss over `items` without updating anything.
pub fn mean_loss(model: &SpanModel, items: &[TrainItem]) -> f64 {
    let losses = crate::par_map(items, |it| item_loss(model, it));
    losses.iter().sum::<f64>() / items.len().max(1) as f64
}

/// Adam state shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    config: OptimizerConfig,
    m: EncoderParams,
    v: EncoderParams,
    step: i32,
}

impl Adam {
    pub fn new(config: OptimizerConfig, params: &EncoderParams) -> Self {
        let mut m = params.clone();
        for mut t in m.tensors_mut() {
            t.fill(0.0);
        }
        Adam {
            config,
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &Grads) {
        self.step += 1;
        let cfg = &self.config;
        let clip = match cfg.clip_norm {
            Some(max) => {
                let norm = grads.squared_norm().sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        let (vocab, hidden) = params.token_emb.dim();
        let token_grad = grads.token_dense(vocab, hidden);
        let mut grad_views: Vec<ArrayViewD<'_, f64>> = vec![token_grad.view().into_dyn()];
        grad_views.extend(grads.dense.named_tensors().into_iter().skip(1).map(|(_, g)| g));

        let (b1, b2, eps, lr) = (cfg.beta1, cfg.beta2, cfg.epsilon, cfg.learning_rate);
        let bc1 = 1.0 - b1.powi(self.step);
        let bc2 = 1.0 - b2.powi(self.step);
        for (((mut p, mut m), mut v), g) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grad_views)
        {
            Zip::from(&mut p).and(&mut m).and(&mut v).and(&g).for_each(|p, m, v, &g| {
                let g = g * clip;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
    }
}

/// Seeded trainer: owns the optimizer and the batch-order stream.
pub struct Trainer {
    adam: Adam,
    order_rng: ChaCha8Rng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(model: &SpanModel) -> Self {
        Trainer {
            adam: Adam::new(model.config.optimizer.clone(), &model.params),
            order_rng: ChaCha8Rng::seed_from_u64(model.config.seed ^ SHUFFLE_STREAM),
            epochs_done: 0,
        }
    }

    /// One optimizer step on `batch`; returns the batch's mean loss.
    pub fn step(&mut self, model: &mut SpanModel, batch: &[&TrainItem]) -> Result<f64> {
        let results = crate::par_map(batch, |it| item_loss_and_grads(model, it));
        let mut iter = results.into_iter();
        let (mut total_loss, mut grads) = iter.next().ok_or(Error::Empty("empty batch"))?;
        for (loss, g) in iter {
            total_loss += loss;
            grads.add_assign(&g);
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        let mean = total_loss / n;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epochs_done,
                step: self.adam.step as usize,
            });
        }
        self.adam.step(&mut model.params, &grads);
        Ok(mean)
    }

    /// One pass over `items` in a freshly shuffled order.
    pub fn epoch(&mut self, model: &mut SpanModel, items: &[TrainItem]) -> Result<EpochLog> {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut self.order_rng);
        let bs = model.config.optimizer.batch_size;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(bs) {
            let batch: Vec<&TrainItem> = chunk.iter().map(|&i| &items[i]).collect();
            loss_sum += self.step(model, &batch)? * batch.len() as f64;
        }
        self.epochs_done += 1;
        Ok(EpochLog {
            epoch: self.epochs_done,
            mean_loss: loss_sum / items.len() as f64,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    pub fn fit(&mut self, model: &mut SpanModel, items: &[TrainItem]) -> Result<Vec<EpochLog>> {
        if items.is_empty() {
            return Err(Error::Empty("training set is empty"));
        }
        let mut logs = Vec::new();
        for _ in 0..model.config.optimizer.epochs {
            let log = self.epoch(model, items)?;
            log::info!("epoch {} mean loss {:.4}", log.epoch, log.mean_loss);
            logs.push(log);
        }
        Ok(logs)
    }
}

/// Trains a span model on gold one-hot targets (first gold span).
/// Builds the vocabulary from `examples` unless one is supplied.
pub fn train_teacher(
    config: SpanModelConfig,
    examples: &[Example],
    vocab: Option<Vocab>,
) -> Result<(SpanModel, TrainingLog)> {
    if examples.is_empty() {
        return Err(Error::Empty("training set is empty"));
    }
    let vocab = vocab.unwrap_or_else(|| Vocab::build(examples, config.min_vocab_freq));
    let mut model = SpanModel::new(config, vocab)?;
    let mut log = TrainingLog::default();
    let mut items = Vec::with_capacity(examples.len());
    for ex in examples {
        let tok = tokenize_example(ex)?;
        match one_hot_item(&model, &tok)? {
            Some(item) => {
                if item.input.truncated > 0 {
                    log.truncated.push(ex.id.clone());
                }
                items.push(item);
            }
            None => log.skipped.push(ex.id.clone()),
        }
    }
    if items.is_empty() {
        return Err(Error::Empty("no trainable examples after truncation"));
    }
    if model.config.optimizer.epochs > 0 {
        log.epochs = Trainer::new(&model).fit(&mut model, &items)?;
    }
    Ok((model, log))
}
