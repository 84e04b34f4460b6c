//! Span-prediction model: a small trainable encoder mapping
//! `(question, context)` to start/end logits over context tokens.

mod cache;
mod checkpoint;
mod decode;
pub mod encoder;
mod features;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{cache_teacher_outputs, read_teacher_cache, write_teacher_cache, TeacherTargets};
pub use checkpoint::{load_checkpoint, load_vocab, save_checkpoint, CHECKPOINT_VERSION};
pub use decode::{decode_span, DecodedSpan};
pub use encoder::SpanLogits;
pub use features::{encode, EncodedInput};
pub use train::{
    item_loss, item_loss_and_grads, mean_loss, one_hot_item, train_teacher, Adam, EpochLog,
    TrainItem, Trainer, TrainingLog,
};

use crate::corpus::{tokenize_example, Example, TokenizedExample, Vocab};
use crate::metrics::Predictions;
use crate::{Error, Result};
use encoder::{Dims, EncoderParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 3e-4,
            batch_size: 32,
            epochs: 3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpanModelConfig {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    /// Drop context tail tokens on overflow instead of failing.
    pub truncate_context: bool,
    pub max_answer_len: usize,
    pub min_vocab_freq: usize,
    /// Fingerprint of the vocabulary the model was built with.
    pub vocab_fingerprint: String,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for SpanModelConfig {
    fn default() -> Self {
        SpanModelConfig {
            hidden_dim: 64,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 256,
            max_seq_len: 128,
            truncate_context: true,
            max_answer_len: 30,
            min_vocab_freq: 1,
            vocab_fingerprint: String::new(),
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl SpanModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden_dim == 0 || self.n_heads == 0 || !self.hidden_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim, self.n_heads
            ));
        }
        if self.ffn_dim == 0 || self.max_seq_len < 2 || self.max_answer_len == 0 {
            return bad("ffn_dim, max_answer_len must be positive and max_seq_len at least 2".into());
        }
        let opt = &self.optimizer;
        if opt.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(opt.learning_rate.is_finite() && opt.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be positive", opt.learning_rate));
        }
        if !(0.0..1.0).contains(&opt.beta1) || !(0.0..1.0).contains(&opt.beta2) || opt.epsilon <= 0.0 {
            return bad("beta1/beta2 must lie in [0, 1) and epsilon be positive".into());
        }
        Ok(())
    }

    fn dims(&self, vocab: usize) -> Dims {
        Dims {
            vocab,
            hidden: self.hidden_dim,
            ffn: self.ffn_dim,
            layers: self.n_layers,
            heads: self.n_heads,
            max_seq_len: self.max_seq_len,
        }
    }
}

/// Decoded answer for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub start_token: usize,
    pub end_token: usize,
    /// Sum of start and end log-probabilities.
    pub score: f64,
    pub answer_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanModel {
    pub config: SpanModelConfig,
    pub vocab: Vocab,
    pub params: EncoderParams,
}

impl SpanModel {
    /// Seeded initialization; records the vocabulary fingerprint in the config.
    pub fn new(mut config: SpanModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        config.vocab_fingerprint = vocab.fingerprint();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = EncoderParams::init(config.dims(vocab.len()), &mut rng);
        Ok(SpanModel { config, vocab, params })
    }

    pub fn fingerprint(&self) -> &str {
        &self.config.vocab_fingerprint
    }

    pub fn encode(&self, tokenized: &TokenizedExample) -> Result<EncodedInput> {
        encode(&self.vocab, tokenized, self.config.max_seq_len, self.config.truncate_context)
    }

    pub fn forward_encoded(&self, input: &EncodedInput) -> SpanLogits {
        encoder::forward(&self.params, self.config.n_heads, input).0
    }

    /// Start/end logits over the (possibly truncated) context tokens.
    pub fn forward(&self, tokenized: &TokenizedExample) -> Result<SpanLogits> {
        Ok(self.forward_encoded(&self.encode(tokenized)?))
    }

    /// Start/end distributions over the whole input sequence; question and
    /// separator positions are masked to probability zero.
    pub fn sequence_distributions(&self, tokenized: &TokenizedExample) -> Result<(Vec<f64>, Vec<f64>)> {
        let input = self.encode(tokenized)?;
        let logits = self.forward_encoded(&input);
        let expand = |ctx: &[f64]| {
            let mut full = vec![f64::NEG_INFINITY; input.ids.len()];
            full[input.context_offset..].copy_from_slice(ctx);
            crate::prob::softmax(&full)
        };
        Ok((expand(&logits.start), expand(&logits.end)))
    }

    pub fn predict_tokenized(&self, example: &Example, tokenized: &TokenizedExample) -> Result<SpanPrediction> {
        let logits = self.forward(tokenized)?;
        let best = decode_span(&logits.start, &logits.end, self.config.max_answer_len)?;
        Ok(SpanPrediction {
            start_token: best.span.start,
            end_token: best.span.end,
            score: best.score,
            answer_text: tokenized.span_text(&example.context, best.span).to_owned(),
        })
    }

    pub fn predict(&self, example: &Example) -> Result<SpanPrediction> {
        self.predict_tokenized(example, &tokenize_example(example)?)
    }

    /// Predictions file contents for a dataset.
    pub fn predict_all(&self, examples: &[Example]) -> Result<Predictions> {
        let answers: Vec<Result<(String, String)>> = crate::par_map(examples, |ex| {
            self.predict(ex).map(|p| (ex.id.clone(), p.answer_text))
        });
        answers.into_iter().collect()
    }
}
