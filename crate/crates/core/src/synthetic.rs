//! Pseudoword benchmark generation.
//!
//! A pseudoword conflates several donor senses. Every sense owns
//! exclusive context tokens (flanking the target slot) and exclusive
//! sibling tokens (filling the same slot in other sentences), so a
//! language model trained on the corpus predicts sense-revealing
//! substitutes. Shared glue tokens, drawn with Zipf weights, pad the
//! sentences and leak across senses as realistic noise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Occurrence, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_pseudowords: usize,
    /// Donor senses conflated into each pseudoword.
    pub senses_per_word: usize,
    /// Dataset rows generated per sense.
    pub examples_per_sense: usize,
    /// Exclusive tokens flanking the target slot.
    pub context_tokens_per_sense: usize,
    /// Exclusive tokens sharing the target slot; these are the
    /// substitutes a model should recover.
    pub sibling_tokens_per_sense: usize,
    /// Training sentences per sibling token.
    pub sentences_per_sibling: usize,
    /// Shared vocabulary size.
    pub glue_tokens: usize,
    /// Sentences made of glue only.
    pub glue_sentences: usize,
    /// Fraction of extra sense sentences whose slot holds a glue token
    /// instead of the donor or a sibling.
    pub slot_noise: f64,
    /// Fraction of sentences whose left context is drawn from a pool the
    /// word's senses share. A forward model alone then cannot tell the
    /// senses apart, so combination methods that require both directions
    /// to agree stay clean while one-sided unions pick up cross-sense
    /// noise.
    pub shared_context_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        // Roughly a 50k-token corpus: enough sibling sentences that every
        // context pair has seen every sibling, so the two directions agree.
        SyntheticSpec {
            num_pseudowords: 4,
            senses_per_word: 2,
            examples_per_sense: 12,
            context_tokens_per_sense: 3,
            sibling_tokens_per_sense: 6,
            sentences_per_sibling: 100,
            glue_tokens: 40,
            glue_sentences: 400,
            slot_noise: 0.1,
            shared_context_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_pseudowords == 0 {
            return Err(Error::Config("need at least one pseudoword".into()));
        }
        if self.senses_per_word < 2 {
            return Err(Error::Config("a pseudoword needs at least two senses".into()));
        }
        for (name, v) in [
            ("examples_per_sense", self.examples_per_sense),
            ("context_tokens_per_sense", self.context_tokens_per_sense),
            ("sibling_tokens_per_sense", self.sibling_tokens_per_sense),
            ("sentences_per_sibling", self.sentences_per_sibling),
            ("glue_tokens", self.glue_tokens),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.slot_noise) {
            return Err(Error::Config(format!(
                "slot_noise {} outside [0, 1)",
                self.slot_noise
            )));
        }
        if !(0.0..=1.0).contains(&self.shared_context_fraction) {
            return Err(Error::Config(format!(
                "shared_context_fraction {} outside [0, 1]",
                self.shared_context_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// One sentence per line, ready for model training.
    pub corpus: String,
    pub dataset: Dataset,
}

fn zipf_glue(rng: &mut ChaCha8Rng, glue_tokens: usize) -> String {
    let total: f64 = (1..=glue_tokens).map(|g| 1.0 / g as f64).sum();
    let mut x = rng.random::<f64>() * total;
    for g in 0..glue_tokens {
        x -= 1.0 / (g + 1) as f64;
        if x < 0.0 {
            return format!("glue_{g}");
        }
    }
    format!("glue_{}", glue_tokens - 1)
}

/// A sense sentence: two glue tokens, two context tokens, the slot, two
/// more context tokens, one closing glue token. Both directions of a
/// trigram model therefore condition on context tokens alone. The right
/// context is always sense-exclusive; the left one is drawn from the
/// word's shared pool for a `shared_context_fraction` of sentences.
fn sense_sentence(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    word: usize,
    sense: usize,
    slot: &str,
) -> (Vec<String>, usize) {
    let exclusive = |rng: &mut ChaCha8Rng| {
        let t = rng.random_range(0..spec.context_tokens_per_sense);
        format!("ctx_{word}_{sense}_{t}")
    };
    let shared = |rng: &mut ChaCha8Rng| {
        let t = rng.random_range(0..spec.context_tokens_per_sense);
        format!("ctx_{word}_shared_{t}")
    };
    let left_is_shared = rng.random::<f64>() < spec.shared_context_fraction;
    let left = |rng: &mut ChaCha8Rng| {
        if left_is_shared {
            shared(rng)
        } else {
            exclusive(rng)
        }
    };
    let sentence = vec![
        zipf_glue(rng, spec.glue_tokens),
        zipf_glue(rng, spec.glue_tokens),
        left(rng),
        left(rng),
        slot.to_owned(),
        exclusive(rng),
        exclusive(rng),
        zipf_glue(rng, spec.glue_tokens),
    ];
    (sentence, 4)
}

fn span_of_token(tokens: &[String], index: usize) -> Span {
    let begin: usize = tokens[..index].iter().map(|t| t.chars().count() + 1).sum();
    Span {
        begin,
        end: begin + tokens[index].chars().count(),
    }
}

/// Generate a corpus and matching gold-labeled dataset.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sentences: Vec<Vec<String>> = Vec::new();
    let mut occurrences = Vec::new();

    for word in 0..spec.num_pseudowords {
        let pseudoword = format!("pw_{word}");
        for sense in 0..spec.senses_per_word {
            // Dataset rows first: the pseudoword fills the slot.
            for example in 0..spec.examples_per_sense {
                let (tokens, slot_idx) = sense_sentence(&mut rng, spec, word, sense, &pseudoword);
                let span = span_of_token(&tokens, slot_idx);
                occurrences.push(Occurrence {
                    context_id: format!("{pseudoword}.s{sense}.e{example}"),
                    word: pseudoword.clone(),
                    gold_sense_id: Some(format!("sense_{sense}")),
                    predict_sense_id: None,
                    target_span: span,
                    context: tokens.join(" "),
                });
                sentences.push(tokens);
            }
            // Extra pseudoword sentences so the model knows the token well.
            for _ in 0..3 {
                let (tokens, _) = sense_sentence(&mut rng, spec, word, sense, &pseudoword);
                sentences.push(tokens);
            }
            // Sibling sentences carry the substitute signal.
            let mut sibling_sentences = 0;
            for sib in 0..spec.sibling_tokens_per_sense {
                let slot = format!("sib_{word}_{sense}_{sib}");
                for _ in 0..spec.sentences_per_sibling {
                    let (tokens, _) = sense_sentence(&mut rng, spec, word, sense, &slot);
                    sentences.push(tokens);
                    sibling_sentences += 1;
                }
            }
            // Glue in the slot blurs the signal across senses.
            let noisy = (sibling_sentences as f64 * spec.slot_noise).round() as usize;
            for _ in 0..noisy {
                let slot = zipf_glue(&mut rng, spec.glue_tokens);
                let (tokens, _) = sense_sentence(&mut rng, spec, word, sense, &slot);
                sentences.push(tokens);
            }
        }
    }
    for _ in 0..spec.glue_sentences {
        let tokens: Vec<String> = (0..8).map(|_| zipf_glue(&mut rng, spec.glue_tokens)).collect();
        sentences.push(tokens);
    }

    sentences.shuffle(&mut rng);
    let corpus = sentences
        .iter()
        .map(|s| s.join(" "))
        .collect::<Vec<_>>()
        .join("\n");

    Ok(SyntheticData {
        corpus,
        dataset: Dataset { occurrences },
    })
}
