//! Post-hoc inspection of induced senses.
//!
//! Profiles summarize which substitutes each induced sense attracted,
//! discriminative ranking contrasts two senses of the same word, and the
//! cluster-count report quantifies how far chosen counts sit from the
//! gold and best-achievable ones.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::combine::RepresentativeSet;
use crate::error::{Error, Result};
use crate::metrics::{csv_row, fmt_f64};

/// Substitute counts for one induced sense of one word. A token is
/// counted at most once per example, no matter how many of the example's
/// representatives contain it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseProfile {
    pub word: String,
    pub sense_id: usize,
    pub substitute_counts: BTreeMap<String, u64>,
    /// Sum of all counts in this profile.
    pub total: u64,
    /// Union vocabulary size across all senses of the word; shared so
    /// smoothed probabilities of different senses are comparable.
    pub vocab_size: usize,
    pub num_examples: usize,
}

impl SenseProfile {
    pub fn count(&self, token: &str) -> u64 {
        self.substitute_counts.get(token).copied().unwrap_or(0)
    }

    /// Add-one smoothed probability of `token` under this sense.
    pub fn smoothed(&self, token: &str) -> f64 {
        (self.count(token) + 1) as f64 / (self.total + self.vocab_size as u64) as f64
    }
}

/// Aggregate per-sense substitute counts for one word. `labels[i]` is the
/// induced sense of occurrence `i` and `rep_sets[i]` its representatives.
/// Profiles come back sorted by sense id.
pub fn build_profiles(
    word: &str,
    labels: &[usize],
    rep_sets: &[RepresentativeSet],
) -> Result<Vec<SenseProfile>> {
    if labels.len() != rep_sets.len() {
        return Err(Error::Domain(format!(
            "{} labels but {} representative sets",
            labels.len(),
            rep_sets.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Domain(format!("no occurrences to profile for {word:?}")));
    }

    let mut vocab: BTreeSet<&str> = BTreeSet::new();
    let mut counts: BTreeMap<usize, BTreeMap<String, u64>> = BTreeMap::new();
    let mut examples: BTreeMap<usize, usize> = BTreeMap::new();
    for (&label, set) in labels.iter().zip(rep_sets) {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for rep in &set.representatives {
            for token in &rep.substitutes {
                vocab.insert(token);
                seen.insert(token);
            }
        }
        let sense = counts.entry(label).or_default();
        for token in seen {
            *sense.entry(token.to_owned()).or_insert(0) += 1;
        }
        *examples.entry(label).or_insert(0) += 1;
    }

    let vocab_size = vocab.len();
    Ok(counts
        .into_iter()
        .map(|(sense_id, substitute_counts)| SenseProfile {
            word: word.to_owned(),
            sense_id,
            total: substitute_counts.values().sum(),
            substitute_counts,
            vocab_size,
            num_examples: examples[&sense_id],
        })
        .collect())
}

/// One substitute's contrast between two senses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeSubstitute {
    pub token: String,
    pub count_first: u64,
    pub count_second: u64,
    /// Fraction of each sense's examples containing the token.
    pub freq_first: f64,
    pub freq_second: f64,
    /// Smoothed probability ratio first : second; above 1 means the
    /// token leans toward the first sense.
    pub ratio: f64,
}

/// Rank substitutes by how strongly they separate `first` from `second`.
/// Only tokens reaching `min_count` raw occurrences in at least one of
/// the two senses participate. Sorted by ratio descending, then count in
/// the first sense descending, then token; `top_n` keeps the head of that
/// ranking (`None` keeps everything).
pub fn discriminative_substitutes(
    first: &SenseProfile,
    second: &SenseProfile,
    min_count: u64,
    top_n: Option<usize>,
) -> Result<Vec<DiscriminativeSubstitute>> {
    if first.word != second.word {
        return Err(Error::Domain(format!(
            "cannot contrast senses of different words {:?} and {:?}",
            first.word, second.word
        )));
    }
    if first.sense_id == second.sense_id {
        return Err(Error::Domain(format!(
            "cannot contrast sense {} of {:?} with itself",
            first.sense_id, first.word
        )));
    }
    if first.vocab_size != second.vocab_size {
        return Err(Error::Domain(
            "profiles were built with different vocabularies".into(),
        ));
    }

    let tokens: BTreeSet<&String> = first
        .substitute_counts
        .keys()
        .chain(second.substitute_counts.keys())
        .collect();
    let mut out: Vec<DiscriminativeSubstitute> = tokens
        .into_iter()
        .filter(|t| first.count(t) >= min_count || second.count(t) >= min_count)
        .map(|t| DiscriminativeSubstitute {
            token: t.clone(),
            count_first: first.count(t),
            count_second: second.count(t),
            freq_first: first.count(t) as f64 / first.num_examples as f64,
            freq_second: second.count(t) as f64 / second.num_examples as f64,
            ratio: first.smoothed(t) / second.smoothed(t),
        })
        .collect();
    out.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then_with(|| b.count_first.cmp(&a.count_first))
            .then_with(|| a.token.cmp(&b.token))
    });
    if let Some(n) = top_n {
        out.truncate(n);
    }
    Ok(out)
}

/// Pool several profiles of one word into a single profile under
/// `sense_id`, usually to contrast one sense against all others at once.
pub fn merge_profiles(sense_id: usize, parts: &[&SenseProfile]) -> Result<SenseProfile> {
    let Some(first) = parts.first() else {
        return Err(Error::Domain("no profiles to merge".into()));
    };
    let mut substitute_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut num_examples = 0;
    for p in parts {
        if p.word != first.word {
            return Err(Error::Domain(format!(
                "cannot merge profiles of different words {:?} and {:?}",
                first.word, p.word
            )));
        }
        if p.vocab_size != first.vocab_size {
            return Err(Error::Domain(
                "profiles were built with different vocabularies".into(),
            ));
        }
        for (t, c) in &p.substitute_counts {
            *substitute_counts.entry(t.clone()).or_insert(0) += c;
        }
        num_examples += p.num_examples;
    }
    Ok(SenseProfile {
        word: first.word.clone(),
        sense_id,
        total: substitute_counts.values().sum(),
        substitute_counts,
        vocab_size: first.vocab_size,
        num_examples,
    })
}

/// Default raw-count threshold for [`discriminative_substitutes`].
pub const DEFAULT_MIN_COUNT: u64 = 10;

/// Cluster counts for one word under three views of the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcCounts {
    pub word: String,
    pub predicted: usize,
    pub gold: usize,
    pub max_ari: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcDifferenceRow {
    pub word: String,
    pub predicted: usize,
    pub gold: usize,
    pub max_ari: usize,
    pub predicted_minus_gold: i64,
    pub predicted_minus_max_ari: i64,
    pub gold_minus_max_ari: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffSummary {
    pub mean: f64,
    pub mse: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcDifferenceReport {
    pub rows: Vec<NcDifferenceRow>,
    pub predicted_minus_gold: DiffSummary,
    pub predicted_minus_max_ari: DiffSummary,
    pub gold_minus_max_ari: DiffSummary,
}

/// Linearly interpolated quantile (the common "type 7" estimator) of
/// already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Domain("quantile of an empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("quantile level {p} outside [0, 1]")));
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn summarize(diffs: &[i64]) -> Result<DiffSummary> {
    let mut sorted: Vec<f64> = diffs.iter().map(|&d| d as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(DiffSummary {
        mean: sorted.iter().sum::<f64>() / n,
        mse: sorted.iter().map(|d| d * d).sum::<f64>() / n,
        min: sorted[0],
        q25: quantile_sorted(&sorted, 0.25)?,
        median: quantile_sorted(&sorted, 0.5)?,
        q75: quantile_sorted(&sorted, 0.75)?,
        max: sorted[sorted.len() - 1],
    })
}

/// Compare chosen cluster counts against the gold and best-achievable
/// counts across words. Rows come back sorted by word.
pub fn nc_difference_report(counts: &[NcCounts]) -> Result<NcDifferenceReport> {
    if counts.is_empty() {
        return Err(Error::Domain("no cluster counts to compare".into()));
    }
    let mut rows: Vec<NcDifferenceRow> = counts
        .iter()
        .map(|c| NcDifferenceRow {
            word: c.word.clone(),
            predicted: c.predicted,
            gold: c.gold,
            max_ari: c.max_ari,
            predicted_minus_gold: c.predicted as i64 - c.gold as i64,
            predicted_minus_max_ari: c.predicted as i64 - c.max_ari as i64,
            gold_minus_max_ari: c.gold as i64 - c.max_ari as i64,
        })
        .collect();
    rows.sort_by(|a, b| a.word.cmp(&b.word));
    if let Some(pair) = rows.windows(2).find(|p| p[0].word == p[1].word) {
        return Err(Error::Domain(format!(
            "duplicate word {:?} in cluster-count report",
            pair[0].word
        )));
    }

    let collect = |f: fn(&NcDifferenceRow) -> i64| -> Vec<i64> { rows.iter().map(f).collect() };
    Ok(NcDifferenceReport {
        predicted_minus_gold: summarize(&collect(|r| r.predicted_minus_gold))?,
        predicted_minus_max_ari: summarize(&collect(|r| r.predicted_minus_max_ari))?,
        gold_minus_max_ari: summarize(&collect(|r| r.gold_minus_max_ari))?,
        rows,
    })
}

pub fn nc_difference_csv(report: &NcDifferenceReport) -> String {
    let mut out = csv_row(&[
        "word".into(),
        "predicted_nc".into(),
        "gold_nc".into(),
        "max_ari_nc".into(),
        "predicted_minus_gold".into(),
        "predicted_minus_max_ari".into(),
        "gold_minus_max_ari".into(),
    ]);
    for r in &report.rows {
        out.push_str(&csv_row(&[
            r.word.clone(),
            r.predicted.to_string(),
            r.gold.to_string(),
            r.max_ari.to_string(),
            r.predicted_minus_gold.to_string(),
            r.predicted_minus_max_ari.to_string(),
            r.gold_minus_max_ari.to_string(),
        ]));
    }
    for (name, s) in [
        ("predicted_minus_gold", &report.predicted_minus_gold),
        ("predicted_minus_max_ari", &report.predicted_minus_max_ari),
        ("gold_minus_max_ari", &report.gold_minus_max_ari),
    ] {
        out.push_str(&csv_row(&[
            format!("SUMMARY:{name}"),
            fmt_f64(s.mean),
            fmt_f64(s.mse),
            fmt_f64(s.min),
            fmt_f64(s.q25),
            fmt_f64(s.median),
            fmt_f64(s.q75),
        ]));
    }
    out
}
