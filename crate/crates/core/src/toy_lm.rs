//! Count-based n-gram language model with additive smoothing.
//!
//! This is the built-in substitute source: small, deterministic, and
//! trainable from a plain token corpus in either direction. A backward
//! model is simply the same estimator trained on reversed sequences, so
//! it predicts a token from the context to its right.

use std::collections::HashMap;

use crate::dataset::Occurrence;
use crate::error::{Error, Result};
use crate::substitutes::{Direction, SubstituteDistribution};

/// Sentence-boundary padding used for histories near the edge. Not part of
/// the vocabulary and never predicted.
const BOS: u32 = u32::MAX;
/// Id for query tokens outside the training vocabulary. Distinct from
/// [`BOS`] so an unseen word does not collide with boundary counts.
const UNK: u32 = u32::MAX - 1;

/// Whitespace tokenization, lowercased. Used for both training corpora and
/// prediction queries so the two always agree.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Split corpus text into one token sequence per non-blank line.
pub fn corpus_from_text(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(tokenize)
        .filter(|sent| !sent.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct ToyLm {
    direction: Direction,
    order: usize,
    smoothing_k: f64,
    /// Frequency-sorted vocabulary: most frequent first, ties lexicographic.
    /// A token's rank is its index plus one.
    vocab: Vec<String>,
    token_ids: HashMap<String, u32>,
    /// Transition counts keyed by the (order-1)-token history.
    counts: HashMap<Vec<u32>, HashMap<u32, u32>>,
    history_totals: HashMap<Vec<u32>, u32>,
}

/// Train an n-gram model of the given `order` (>= 2) with add-`smoothing_k`
/// estimates. For [`Direction::Bwd`] every sequence is reversed before
/// counting, nothing else changes.
pub fn train_toy_lm(
    corpus: &[Vec<String>],
    direction: Direction,
    order: usize,
    smoothing_k: f64,
) -> Result<ToyLm> {
    if order < 2 {
        return Err(Error::Config(format!("model order must be >= 2, got {order}")));
    }
    if smoothing_k <= 0.0 || !smoothing_k.is_finite() {
        return Err(Error::Config(format!(
            "smoothing constant must be positive and finite, got {smoothing_k}"
        )));
    }

    let mut freq: HashMap<&str, u64> = HashMap::new();
    for sent in corpus {
        for tok in sent {
            *freq.entry(tok.as_str()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::Config("training corpus contains no tokens".into()));
    }

    let mut vocab: Vec<(&str, u64)> = freq.into_iter().collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let vocab: Vec<String> = vocab.into_iter().map(|(t, _)| t.to_owned()).collect();
    let token_ids: HashMap<String, u32> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut counts: HashMap<Vec<u32>, HashMap<u32, u32>> = HashMap::new();
    let mut history_totals: HashMap<Vec<u32>, u32> = HashMap::new();
    let ctx = order - 1;
    for sent in corpus {
        if sent.is_empty() {
            continue;
        }
        let mut seq: Vec<u32> = Vec::with_capacity(sent.len() + ctx);
        seq.resize(ctx, BOS);
        match direction {
            Direction::Fwd => seq.extend(sent.iter().map(|t| token_ids[t.as_str()])),
            Direction::Bwd => seq.extend(sent.iter().rev().map(|t| token_ids[t.as_str()])),
        }
        for i in ctx..seq.len() {
            let history = seq[i - ctx..i].to_vec();
            *counts
                .entry(history.clone())
                .or_default()
                .entry(seq[i])
                .or_default() += 1;
            *history_totals.entry(history).or_default() += 1;
        }
    }

    Ok(ToyLm {
        direction,
        order,
        smoothing_k,
        vocab,
        token_ids,
        counts,
        history_totals,
    })
}

impl ToyLm {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Rank of a token in the frequency-sorted vocabulary (1 = most
    /// frequent), if it was seen in training.
    pub fn rank(&self, token: &str) -> Option<u32> {
        self.token_ids.get(token).map(|id| id + 1)
    }

    fn id_or_unk(&self, token: &str) -> u32 {
        self.token_ids.get(token).copied().unwrap_or(UNK)
    }

    /// Smoothed next-token distribution for an explicit token history,
    /// most probable first. The history is the raw query-side token list;
    /// it is truncated/padded internally to `order - 1` items.
    fn predict_from_history(&self, history_tokens: &[String], top_k: usize) -> Vec<(String, f64, u32)> {
        let ctx = self.order - 1;
        let mut history: Vec<u32> = Vec::with_capacity(ctx);
        history.resize(ctx.saturating_sub(history_tokens.len()), BOS);
        let tail = history_tokens.len().saturating_sub(ctx);
        for tok in &history_tokens[tail..] {
            history.push(self.id_or_unk(tok));
        }

        let v = self.vocab.len();
        let empty = HashMap::new();
        let next_counts = self.counts.get(&history).unwrap_or(&empty);
        let total = self.history_totals.get(&history).copied().unwrap_or(0);
        let denom = total as f64 + self.smoothing_k * v as f64;

        // Counts per vocabulary id; probability is monotone in count, and
        // ids already encode the (frequency, lexicographic) tie order, so
        // sorting by (count desc, id asc) realizes the documented ordering.
        let mut by_id: Vec<(u32, u32)> = (0..v as u32)
            .map(|id| (id, next_counts.get(&id).copied().unwrap_or(0)))
            .collect();
        by_id.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        by_id
            .into_iter()
            .take(top_k.min(v))
            .map(|(id, cnt)| {
                let p = (cnt as f64 + self.smoothing_k) / denom;
                (self.vocab[id as usize].clone(), p, id + 1)
            })
            .collect()
    }
}

/// Predict substitutes for the masked target position of one occurrence.
///
/// For a forward model the query is the context left of the target; for a
/// backward model, the context right of it. With `pattern` set (e.g.
/// `" and "`), the target plus the pattern text is spliced in next to the
/// blank so that the model predicts a coordinated sibling of the target
/// rather than an arbitrary continuation: `"These apples are sold"` with a
/// forward model queries `"these apples and"`, and the backward model sees
/// the mirrored `"and apples"` reading inward from the right.
pub fn predict_substitutes(
    lm: &ToyLm,
    occ: &Occurrence,
    top_k: usize,
    pattern: Option<&str>,
) -> Result<SubstituteDistribution> {
    if top_k == 0 {
        return Err(Error::Domain("top_k must be >= 1".into()));
    }

    let history_tokens: Vec<String> = match lm.direction {
        Direction::Fwd => {
            let text = match pattern {
                Some(p) => format!("{}{}{}", occ.left(), occ.target_text(), p),
                None => occ.left(),
            };
            tokenize(&text)
        }
        Direction::Bwd => {
            let text = match pattern {
                Some(p) => format!("{}{}{}", p, occ.target_text(), occ.right()),
                None => occ.right(),
            };
            let toks = tokenize(&text);
            let ctx = lm.order - 1;
            // Nearest token first, exactly as the reversed-sequence model
            // saw its histories during training.
            toks.into_iter().take(ctx).rev().collect()
        }
    };

    let entries = lm.predict_from_history(&history_tokens, top_k);
    Ok(SubstituteDistribution {
        context_id: occ.context_id.clone(),
        word: occ.word.clone(),
        direction: lm.direction,
        entries,
        meta: serde_json::Map::new(),
    })
}
