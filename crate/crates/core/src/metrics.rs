//! Clustering agreement metrics and corpus-level aggregation.
//!
//! All metrics are label-permutation invariant and operate on a shared
//! contingency table. Pair counts stay in integer arithmetic until the
//! final division, so degenerate references (a trivial baseline against
//! any gold partition) score exactly 0.0 rather than within an epsilon.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn binom2(x: u128) -> u128 {
    x * x.saturating_sub(1) / 2
}

/// Contingency-table summary of two labelings of the same items.
#[derive(Debug, Clone)]
struct Contingency {
    n: usize,
    gold_clusters: usize,
    pred_clusters: usize,
    /// Co-assigned pairs: sum of C(n_ij, 2) over table cells.
    common_pairs: u128,
    /// Pairs sharing a gold class: sum of C(a_i, 2).
    gold_pairs: u128,
    /// Pairs sharing a predicted cluster: sum of C(b_j, 2).
    pred_pairs: u128,
    total_pairs: u128,
    /// Entropies in nats.
    h_gold: f64,
    h_pred: f64,
    h_gold_given_pred: f64,
    h_pred_given_gold: f64,
}

fn contingency(gold: &[usize], pred: &[usize]) -> Result<Contingency> {
    if gold.len() != pred.len() {
        return Err(Error::LabelLengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Domain("cannot score an empty labeling".into()));
    }
    let n = gold.len();
    // Ordered maps keep float summation order fixed, so scores are
    // bit-identical across runs.
    let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut gold_sizes: BTreeMap<usize, u64> = BTreeMap::new();
    let mut pred_sizes: BTreeMap<usize, u64> = BTreeMap::new();
    for (&g, &p) in gold.iter().zip(pred) {
        *cells.entry((g, p)).or_insert(0) += 1;
        *gold_sizes.entry(g).or_insert(0) += 1;
        *pred_sizes.entry(p).or_insert(0) += 1;
    }

    let nf = n as f64;
    let entropy = |sizes: &BTreeMap<usize, u64>| -> f64 {
        -sizes
            .values()
            .map(|&c| {
                let p = c as f64 / nf;
                p * p.ln()
            })
            .sum::<f64>()
    };
    // H(gold | pred) = -sum_ij (n_ij / n) ln(n_ij / b_j), and symmetrically.
    let mut h_gold_given_pred = 0.0;
    let mut h_pred_given_gold = 0.0;
    for (&(g, p), &c) in &cells {
        let c = c as f64;
        h_gold_given_pred -= c / nf * (c / pred_sizes[&p] as f64).ln();
        h_pred_given_gold -= c / nf * (c / gold_sizes[&g] as f64).ln();
    }

    Ok(Contingency {
        n,
        gold_clusters: gold_sizes.len(),
        pred_clusters: pred_sizes.len(),
        common_pairs: cells.values().map(|&c| binom2(c as u128)).sum(),
        gold_pairs: gold_sizes.values().map(|&c| binom2(c as u128)).sum(),
        pred_pairs: pred_sizes.values().map(|&c| binom2(c as u128)).sum(),
        total_pairs: binom2(n as u128),
        h_gold: entropy(&gold_sizes),
        h_pred: entropy(&pred_sizes),
        h_gold_given_pred,
        h_pred_given_gold,
    })
}

fn ari_from(c: &Contingency) -> f64 {
    if c.gold_clusters == 1 {
        log::warn!(
            "gold labeling has a single class over {} items; agreement is defined as 0",
            c.n
        );
        return 0.0;
    }
    if c.gold_clusters == c.n && c.pred_clusters == c.n {
        return 1.0; // identical all-singleton partitions
    }
    // Numerator and denominator scaled by 2 * C(n, 2) stay integral, so
    // chance-level agreement is exactly zero.
    let num = 2 * (c.total_pairs * c.common_pairs) as i128
        - 2 * (c.gold_pairs * c.pred_pairs) as i128;
    let den = (c.total_pairs * (c.gold_pairs + c.pred_pairs)) as i128
        - 2 * (c.gold_pairs * c.pred_pairs) as i128;
    if den == 0 {
        return 0.0;
    }
    num as f64 / den as f64
}

/// Adjusted Rand index in `[-1, 1]`. A gold labeling with a single class
/// carries no signal and scores 0 (with a warning); two all-singleton
/// labelings are identical and score 1.
pub fn ari(gold: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(ari_from(&contingency(gold, pred)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn v_measure_parts(h_gold: f64, h_pred: f64, h_gp: f64, h_pg: f64) -> VMeasure {
    let homogeneity = if h_gold == 0.0 { 1.0 } else { 1.0 - h_gp / h_gold };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - h_pg / h_pred };
    let sum = homogeneity + completeness;
    let v_measure = if sum == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / sum
    };
    VMeasure {
        homogeneity,
        completeness,
        v_measure,
    }
}

/// V-measure (harmonic mean of homogeneity and completeness), using
/// natural-log entropies. A zero-entropy side is treated as perfectly
/// homogeneous or complete.
pub fn v_measure(gold: &[usize], pred: &[usize]) -> Result<VMeasure> {
    let c = contingency(gold, pred)?;
    Ok(v_measure_parts(
        c.h_gold,
        c.h_pred,
        c.h_gold_given_pred,
        c.h_pred_given_gold,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedF {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

fn paired_f_parts(common: u128, gold_pairs: u128, pred_pairs: u128) -> PairedF {
    if gold_pairs == 0 && pred_pairs == 0 {
        // Both partitions are all singletons: vacuously perfect.
        return PairedF {
            precision: 1.0,
            recall: 1.0,
            f_score: 1.0,
        };
    }
    if gold_pairs == 0 || pred_pairs == 0 {
        return PairedF {
            precision: 0.0,
            recall: 0.0,
            f_score: 0.0,
        };
    }
    let precision = common as f64 / pred_pairs as f64;
    let recall = common as f64 / gold_pairs as f64;
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PairedF {
        precision,
        recall,
        f_score,
    }
}

/// F-score over co-assigned item pairs: precision against predicted
/// pairs, recall against gold pairs.
pub fn paired_f(gold: &[usize], pred: &[usize]) -> Result<PairedF> {
    let c = contingency(gold, pred)?;
    Ok(paired_f_parts(c.common_pairs, c.gold_pairs, c.pred_pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Everything in one cluster.
    OneCluster,
    /// Every item alone.
    Singletons,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::OneCluster => "one-cluster",
            BaselineKind::Singletons => "singletons",
        }
    }
}

pub fn baseline_labels(kind: BaselineKind, n: usize) -> Vec<usize> {
    match kind {
        BaselineKind::OneCluster => vec![0; n],
        BaselineKind::Singletons => (0..n).collect(),
    }
}

/// Gold and predicted labels for one word's occurrences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordEval {
    pub word: String,
    pub gold: Vec<usize>,
    pub pred: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScores {
    pub num_examples: usize,
    pub gold_num_clusters: usize,
    pub pred_num_clusters: usize,
    pub ari: f64,
    pub v_measure: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub num_words: usize,
    pub num_examples: usize,
    /// Example-weighted mean of per-word scores: the headline numbers.
    pub ari: f64,
    pub v_measure: f64,
    pub f_score: f64,
    /// Geometric mean of the headline v_measure and f_score.
    pub avg: f64,
    /// Alternative aggregation treating the corpus as one big clustering
    /// problem: entropies and pair counts are pooled before the final
    /// ratios, which rewards words differently than averaging does.
    pub pooled_v_measure: f64,
    pub pooled_f_score: f64,
    pub pooled_avg: f64,
    /// Unweighted means over words.
    pub mean_pred_num_clusters: f64,
    pub mean_gold_num_clusters: f64,
    pub mse_num_clusters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_word: BTreeMap<String, WordScores>,
    pub aggregate: AggregateScores,
}

/// Score every word and fold the results into corpus-level numbers.
pub fn aggregate(words: &[WordEval]) -> Result<EvalReport> {
    if words.is_empty() {
        return Err(Error::Domain("no words to evaluate".into()));
    }
    let mut per_word = BTreeMap::new();
    let mut total_examples = 0usize;
    let mut w_ari = 0.0;
    let mut w_v = 0.0;
    let mut w_f = 0.0;
    let mut pooled_h_gold = 0.0;
    let mut pooled_h_pred = 0.0;
    let mut pooled_h_gp = 0.0;
    let mut pooled_h_pg = 0.0;
    let mut pooled_common = 0u128;
    let mut pooled_gold_pairs = 0u128;
    let mut pooled_pred_pairs = 0u128;
    let mut sum_pred_nc = 0.0;
    let mut sum_gold_nc = 0.0;
    let mut sum_sq_nc_diff = 0.0;

    for w in words {
        if per_word.contains_key(&w.word) {
            return Err(Error::Domain(format!("duplicate word {:?} in evaluation", w.word)));
        }
        let c = contingency(&w.gold, &w.pred)
            .map_err(|e| Error::for_word(&w.word, e))?;
        let vm = v_measure_parts(c.h_gold, c.h_pred, c.h_gold_given_pred, c.h_pred_given_gold);
        let pf = paired_f_parts(c.common_pairs, c.gold_pairs, c.pred_pairs);
        let scores = WordScores {
            num_examples: c.n,
            gold_num_clusters: c.gold_clusters,
            pred_num_clusters: c.pred_clusters,
            ari: ari_from(&c),
            v_measure: vm.v_measure,
            f_score: pf.f_score,
        };

        let nf = c.n as f64;
        total_examples += c.n;
        w_ari += scores.ari * nf;
        w_v += scores.v_measure * nf;
        w_f += scores.f_score * nf;
        pooled_h_gold += c.h_gold * nf;
        pooled_h_pred += c.h_pred * nf;
        pooled_h_gp += c.h_gold_given_pred * nf;
        pooled_h_pg += c.h_pred_given_gold * nf;
        pooled_common += c.common_pairs;
        pooled_gold_pairs += c.gold_pairs;
        pooled_pred_pairs += c.pred_pairs;
        sum_pred_nc += c.pred_clusters as f64;
        sum_gold_nc += c.gold_clusters as f64;
        let diff = c.pred_clusters as f64 - c.gold_clusters as f64;
        sum_sq_nc_diff += diff * diff;

        per_word.insert(w.word.clone(), scores);
    }

    let nw = words.len() as f64;
    let ne = total_examples as f64;
    let v_measure = w_v / ne;
    let f_score = w_f / ne;
    let pooled_vm = v_measure_parts(pooled_h_gold, pooled_h_pred, pooled_h_gp, pooled_h_pg);
    let pooled_pf = paired_f_parts(pooled_common, pooled_gold_pairs, pooled_pred_pairs);

    Ok(EvalReport {
        per_word,
        aggregate: AggregateScores {
            num_words: words.len(),
            num_examples: total_examples,
            ari: w_ari / ne,
            v_measure,
            f_score,
            avg: (v_measure * f_score).sqrt(),
            pooled_v_measure: pooled_vm.v_measure,
            pooled_f_score: pooled_pf.f_score,
            pooled_avg: (pooled_vm.v_measure * pooled_pf.f_score).sqrt(),
            mean_pred_num_clusters: sum_pred_nc / nw,
            mean_gold_num_clusters: sum_gold_nc / nw,
            mse_num_clusters: sum_sq_nc_diff / nw,
        },
    })
}

/// Fixed-width float formatting shared by every CSV artifact, so repeated
/// runs emit byte-identical files.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.6}")
}

pub fn csv_escape(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

pub fn csv_row(fields: &[String]) -> String {
    let mut out = fields
        .iter()
        .map(|f| csv_escape(f))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    out
}

/// Per-word scores plus a final `ALL` aggregate row.
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut out = csv_row(&[
        "word".into(),
        "num_examples".into(),
        "gold_num_clusters".into(),
        "pred_num_clusters".into(),
        "ari".into(),
        "v_measure".into(),
        "f_score".into(),
    ]);
    for (word, s) in &report.per_word {
        out.push_str(&csv_row(&[
            word.clone(),
            s.num_examples.to_string(),
            s.gold_num_clusters.to_string(),
            s.pred_num_clusters.to_string(),
            fmt_f64(s.ari),
            fmt_f64(s.v_measure),
            fmt_f64(s.f_score),
        ]));
    }
    let a = &report.aggregate;
    out.push_str(&csv_row(&[
        "ALL".into(),
        a.num_examples.to_string(),
        fmt_f64(a.mean_gold_num_clusters),
        fmt_f64(a.mean_pred_num_clusters),
        fmt_f64(a.ari),
        fmt_f64(a.v_measure),
        fmt_f64(a.f_score),
    ]));
    out
}
