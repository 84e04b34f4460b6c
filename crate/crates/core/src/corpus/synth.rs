//! Templated synthetic QA data with controllable lexical bias.
//!
//! Every context sentence has the shape `E V the X for C1 C2 .` and every
//! question asks `What did E V for C1 C2 ?` about one of them. The answer is
//! always the value `X` of the sentence whose entity `E` matches the question;
//! the cue words `C1 C2` only correlate with the answer sentence at rate
//! `planted_bias_rate`. In the remaining examples a non-answer sentence carries
//! the question's verb and cue words, so it overlaps the question more than
//! the answer sentence does.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Answer, Example};
use crate::{Error, Result};

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u"];

const VERBS: &[&str] = &[
    "keep", "paint", "build", "carry", "sell", "find", "hide", "wash", "fix", "bake", "draw",
    "lend", "move", "buy", "pack", "print", "send", "store", "trade", "weave", "carve", "brew",
    "sew", "plant",
];

const VALUES: &[&str] = &[
    "lamp", "boat", "coin", "drum", "flute", "kite", "mask", "ring", "rope", "shoe", "vase",
    "bell", "brush", "cart", "chair", "clock", "crown", "cup", "desk", "door", "fan", "flag",
    "fork", "glove", "hat", "horn", "jar", "key", "knife", "ladder", "lens", "map", "mirror",
    "nail", "net", "pan", "pen", "pipe", "plate", "pot", "quilt", "rug", "sail", "saw", "scarf",
    "shelf", "sled", "spoon", "stool", "tent", "tile", "torch", "tray", "wagon", "wheel", "whip",
    "wick", "yarn", "bowl", "comb",
];

const CUES: &[&str] = &[
    "river", "harbor", "winter", "market", "garden", "temple", "valley", "castle", "forest",
    "island", "meadow", "canyon", "desert", "glacier", "village", "station", "bridge", "tower",
    "orchard", "lagoon", "summit", "prairie", "quarry", "marsh", "delta", "plaza", "chapel",
    "cellar", "attic", "stable", "festival", "parade", "council", "academy", "museum", "theater",
    "library", "factory", "workshop", "barn",
];

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_examples: usize,
    pub n_sentences: usize,
    /// Probability that the answer sentence is also the max-overlap sentence.
    pub planted_bias_rate: f64,
    /// Append a distractor sentence sharing the question's verb and cues.
    pub adversarial: bool,
    pub domain: String,
    /// Size of the entity-name pool.
    pub n_entities: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_examples: 1000,
            n_sentences: 4,
            planted_bias_rate: 0.8,
            adversarial: false,
            domain: "synthetic".into(),
            n_entities: 40,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_sentences < 2 {
            return Err(Error::Config("n_sentences must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.planted_bias_rate) {
            return Err(Error::Config(format!(
                "planted_bias_rate {} outside [0, 1]",
                self.planted_bias_rate
            )));
        }
        // one entity/value per sentence plus the adversarial distractor
        let slots = self.n_sentences + 1;
        if slots > self.n_entities || self.n_entities > (ONSETS.len() * NUCLEI.len()).pow(2) {
            return Err(Error::Config(format!(
                "n_entities {} must cover {slots} slots and fit the name space",
                self.n_entities
            )));
        }
        if slots > VALUES.len() || slots > VERBS.len() || 2 * slots > CUES.len() {
            return Err(Error::Config(format!(
                "n_sentences {} exceeds the template pools",
                self.n_sentences
            )));
        }
        Ok(())
    }
}

fn entity_name(index: usize) -> String {
    let syllables = ONSETS.len() * NUCLEI.len();
    let first = index % syllables;
    let second = (index / syllables) % syllables;
    let mut name = String::new();
    for s in [first, second] {
        name.push_str(ONSETS[s / NUCLEI.len()]);
        name.push_str(NUCLEI[s % NUCLEI.len()]);
    }
    let mut chars = name.chars();
    let head = chars.next().unwrap().to_ascii_uppercase();
    std::iter::once(head).chain(chars).collect()
}

struct Fact {
    entity: String,
    verb: &'static str,
    value: &'static str,
    cues: [&'static str; 2],
}

impl Fact {
    fn sentence(&self) -> String {
        format!(
            "{} {} the {} for {} {} .",
            self.entity, self.verb, self.value, self.cues[0], self.cues[1]
        )
    }

    /// Character offset of the value within [`Fact::sentence`].
    fn value_offset(&self) -> usize {
        self.entity.chars().count() + 1 + self.verb.chars().count() + 1 + "the ".len()
    }
}

/// Pure function of `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Vec<Example>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_sentences;
    let mut examples = Vec::with_capacity(config.n_examples);

    for i in 0..config.n_examples {
        let slots = n + 1;
        let entities: Vec<String> = sample(&mut rng, config.n_entities, slots)
            .into_iter()
            .map(entity_name)
            .collect();
        let verbs: Vec<&str> = sample(&mut rng, VERBS.len(), slots).into_iter().map(|k| VERBS[k]).collect();
        let values: Vec<&str> = sample(&mut rng, VALUES.len(), slots).into_iter().map(|k| VALUES[k]).collect();
        let cues: Vec<&str> = sample(&mut rng, CUES.len(), 2 * slots).into_iter().map(|k| CUES[k]).collect();

        let mut facts: Vec<Fact> = (0..n)
            .map(|s| Fact {
                entity: entities[s].clone(),
                verb: verbs[s],
                value: values[s],
                cues: [cues[2 * s], cues[2 * s + 1]],
            })
            .collect();

        let target = rng.random_range(0..n);
        let question_verb = facts[target].verb;
        // spare cue pair from the distractor slot
        let question_cues = [cues[2 * n], cues[2 * n + 1]];

        let bias_aligned = rng.random_bool(config.planted_bias_rate);
        if bias_aligned {
            facts[target].cues = question_cues;
        } else {
            let mut other = rng.random_range(0..n - 1);
            if other >= target {
                other += 1;
            }
            facts[other].verb = question_verb;
            facts[other].cues = question_cues;
        }
        if config.adversarial {
            facts.push(Fact {
                entity: entities[n].clone(),
                verb: question_verb,
                value: values[n],
                cues: question_cues,
            });
        }

        let mut context = String::new();
        let mut answer_start = 0;
        for (s, fact) in facts.iter().enumerate() {
            if s > 0 {
                context.push(' ');
            }
            if s == target {
                answer_start = context.chars().count() + fact.value_offset();
            }
            context.push_str(&fact.sentence());
        }
        let question = format!(
            "What did {} {} for {} {} ?",
            facts[target].entity, question_verb, question_cues[0], question_cues[1]
        );

        examples.push(Example {
            id: format!("{}-{seed}-{i:06}", config.domain),
            domain: config.domain.clone(),
            adversarial: config.adversarial,
            question,
            context,
            answers: vec![Answer {
                text: facts[target].value.to_string(),
                char_start: answer_start,
            }],
        });
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize_example;
    use crate::text::content_set;

    fn overlaps(ex: &Example) -> (usize, Vec<usize>) {
        let tok = tokenize_example(ex).unwrap();
        let q = content_set(tok.question_tokens.iter().map(|t| t.text.as_str()));
        let per_sentence = tok
            .sentence_bounds
            .iter()
            .map(|s| {
                let words = content_set(tok.context_tokens[s.start..=s.end].iter().map(|t| t.text.as_str()));
                words.intersection(&q).count()
            })
            .collect();
        let answer_sentence = tok.sentence_of(tok.gold_spans[0].start).unwrap();
        (answer_sentence, per_sentence)
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SynthConfig { n_examples: 50, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg, 7).unwrap(), generate_synthetic(&cfg, 7).unwrap());
        assert_ne!(generate_synthetic(&cfg, 7).unwrap(), generate_synthetic(&cfg, 8).unwrap());
    }

    #[test]
    fn examples_are_valid() {
        let cfg = SynthConfig { n_examples: 200, adversarial: true, ..Default::default() };
        for ex in generate_synthetic(&cfg, 1).unwrap() {
            ex.validate().unwrap();
            let tok = tokenize_example(&ex).unwrap();
            assert_eq!(tok.sentence_bounds.len(), cfg.n_sentences + 1);
        }
    }

    #[test]
    fn full_bias_rate_makes_answer_sentence_max_overlap() {
        let cfg = SynthConfig { n_examples: 200, planted_bias_rate: 1.0, adversarial: true, ..Default::default() };
        for ex in generate_synthetic(&cfg, 3).unwrap() {
            let (answer, per_sentence) = overlaps(&ex);
            let best = *per_sentence.iter().max().unwrap();
            assert_eq!(per_sentence[answer], best);
            assert_eq!(per_sentence.iter().filter(|&&c| c == best).count(), 1);
        }
    }

    #[test]
    fn zero_bias_rate_puts_max_overlap_elsewhere() {
        let cfg = SynthConfig { n_examples: 200, planted_bias_rate: 0.0, ..Default::default() };
        for ex in generate_synthetic(&cfg, 4).unwrap() {
            let (answer, per_sentence) = overlaps(&ex);
            let best = *per_sentence.iter().max().unwrap();
            assert!(per_sentence[answer] < best);
        }
    }

    #[test]
    fn adversarial_tail_never_holds_gold() {
        let cfg = SynthConfig { n_examples: 200, adversarial: true, ..Default::default() };
        for ex in generate_synthetic(&cfg, 5).unwrap() {
            let tok = tokenize_example(&ex).unwrap();
            let last = *tok.sentence_bounds.last().unwrap();
            let tail = tok.span_text(&ex.context, last);
            assert!(ex.gold_texts().all(|g| !tail.split(' ').any(|w| w == g)));
            let (_, per_sentence) = overlaps(&ex);
            assert!(*per_sentence.last().unwrap() >= 2);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad_rate = SynthConfig { planted_bias_rate: 1.5, ..Default::default() };
        assert!(generate_synthetic(&bad_rate, 0).is_err());
        let too_few = SynthConfig { n_sentences: 1, ..Default::default() };
        assert!(generate_synthetic(&too_few, 0).is_err());
    }
}
