//! Per-word agglomerative clustering and cluster-count selection.
//!
//! Representatives are clustered bottom-up on a precomputed distance
//! matrix. The merge order is fully deterministic: at every step the pair
//! with the globally smallest linkage distance is merged, ties broken by
//! the lexicographically smallest `(min id, max id)` pair, where a
//! cluster's id is the smallest original index it contains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::vectorize::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    Average,
    Complete,
    Single,
}

impl std::fmt::Display for Linkage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Affinity {
    Cosine,
    Euclidean,
}

impl std::fmt::Display for Affinity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Affinity::Cosine => "cosine",
            Affinity::Euclidean => "euclidean",
        })
    }
}

/// Dense symmetric distance matrix with a zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a pairwise function evaluated once per `i < j` pair.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<DistanceMatrix> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Domain(format!("invalid distance {d} at ({i}, {j})")));
                }
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    /// Cosine distance `1 - cos`. Zero-norm vectors are a caller bug:
    /// empty vectors must be filtered out before building the matrix.
    pub fn cosine(vectors: &[&SparseVector]) -> Result<DistanceMatrix> {
        let norms: Vec<f64> = vectors.iter().map(|v| v.norm()).collect();
        if let Some(i) = norms.iter().position(|&x| x == 0.0) {
            return Err(Error::Domain(format!(
                "zero-norm vector at index {i}; empty vectors must be filtered before clustering"
            )));
        }
        DistanceMatrix::from_fn(vectors.len(), |i, j| {
            (1.0 - vectors[i].dot(vectors[j]) / (norms[i] * norms[j])).max(0.0)
        })
    }

    pub fn euclidean(vectors: &[&SparseVector]) -> Result<DistanceMatrix> {
        let sq: Vec<f64> = vectors.iter().map(|v| v.dot(v)).collect();
        DistanceMatrix::from_fn(vectors.len(), |i, j| {
            (sq[i] + sq[j] - 2.0 * vectors[i].dot(vectors[j])).max(0.0).sqrt()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// One merge: cluster `b` absorbed into cluster `a`, with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
}

/// Full merge sequence from `n` singletons down to one cluster. Cutting
/// replays a prefix, so labelings for every cluster count come from the
/// same greedy process.
#[derive(Debug, Clone)]
pub struct MergeTree {
    n: usize,
    merges: Vec<MergeStep>,
}

/// Greedy agglomerative merge sequence under the given linkage, via
/// Lance-Williams updates. Ties in the global minimum are resolved toward
/// the lexicographically smallest `(a, b)` id pair, which the left-to-right
/// scan yields for free.
pub fn build_merge_tree(dm: &DistanceMatrix, linkage: Linkage) -> MergeTree {
    let n = dm.n;
    let mut work = dm.data.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let d = work[i * n + j];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");

        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let dak = work[a * n + k];
            let dbk = work[b * n + k];
            let merged = match linkage {
                Linkage::Average => (sizes[a] * dak + sizes[b] * dbk) / (sizes[a] + sizes[b]),
                Linkage::Complete => dak.max(dbk),
                Linkage::Single => dak.min(dbk),
            };
            work[a * n + k] = merged;
            work[k * n + a] = merged;
        }
        sizes[a] += sizes[b];
        active[b] = false;
        merges.push(MergeStep { a, b });
    }

    MergeTree { n, merges }
}

/// Relabel to consecutive ids in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

pub fn num_distinct(labels: &[usize]) -> usize {
    labels.iter().collect::<std::collections::HashSet<_>>().len()
}

impl MergeTree {
    /// Labels after merging down to exactly `num_clusters` clusters,
    /// canonically renumbered.
    pub fn cut(&self, num_clusters: usize) -> Result<Vec<usize>> {
        if num_clusters == 0 || num_clusters > self.n {
            return Err(Error::Domain(format!(
                "cannot cut {} items into {num_clusters} clusters",
                self.n
            )));
        }
        let mut labels: Vec<usize> = (0..self.n).collect();
        for step in &self.merges[..self.n - num_clusters] {
            for l in labels.iter_mut() {
                if *l == step.b {
                    *l = step.a;
                }
            }
        }
        Ok(canonical_labels(&labels))
    }
}

/// Average-linkage clustering into `num_clusters` clusters.
pub fn agglomerative(dm: &DistanceMatrix, num_clusters: usize) -> Result<Vec<usize>> {
    build_merge_tree(dm, Linkage::Average).cut(num_clusters)
}

/// Mean silhouette coefficient over all items. Items in singleton
/// clusters contribute 0, as does an item whose distances degenerate to
/// `max(a, b) = 0`.
pub fn silhouette(dm: &DistanceMatrix, labels: &[usize]) -> Result<f64> {
    let n = dm.n;
    if labels.len() != n {
        return Err(Error::Domain(format!(
            "label count {} does not match matrix size {n}",
            labels.len()
        )));
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    if clusters.len() < 2 {
        return Err(Error::Domain("silhouette needs at least two clusters".into()));
    }

    let mut total = 0.0;
    for (&own, members) in &clusters {
        for &i in members {
            if members.len() == 1 {
                continue; // singleton: contributes 0
            }
            let a = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dm.get(i, j))
                .sum::<f64>()
                / (members.len() - 1) as f64;
            let b = clusters
                .iter()
                .filter(|(&l, _)| l != own)
                .map(|(_, other)| {
                    other.iter().map(|&j| dm.get(i, j)).sum::<f64>() / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                total += (b - a) / denom;
            }
        }
    }
    Ok(total / n as f64)
}

/// Bounds for the silhouette search over cluster counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcBounds {
    pub nc_min: usize,
    pub nc_max: usize,
}

impl Default for NcBounds {
    fn default() -> Self {
        NcBounds { nc_min: 2, nc_max: 12 }
    }
}

impl NcBounds {
    pub fn validate(&self) -> Result<()> {
        if self.nc_min < 2 {
            return Err(Error::Config("nc_min must be >= 2".into()));
        }
        if self.nc_max < self.nc_min {
            return Err(Error::Config(format!(
                "nc_max {} below nc_min {}",
                self.nc_max, self.nc_min
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcSelection {
    pub num_clusters: usize,
    pub labels: Vec<usize>,
    pub silhouette: Option<f64>,
    /// Set when the input was too small or flat for a meaningful search.
    pub degenerate: bool,
}

/// Choose the cluster count maximizing the silhouette over
/// `[nc_min, min(nc_max, n - 1)]`; ties go to the smallest count.
/// Fewer than three items leave nothing to search: the result is
/// `min(n, nc_min)` clusters, flagged degenerate.
pub fn select_nc_silhouette(dm: &DistanceMatrix, bounds: &NcBounds) -> Result<NcSelection> {
    bounds.validate()?;
    let n = dm.n;
    if n == 0 {
        return Err(Error::Domain("empty distance matrix".into()));
    }
    if n == 1 {
        return Ok(NcSelection {
            num_clusters: 1,
            labels: vec![0],
            silhouette: None,
            degenerate: true,
        });
    }
    let tree = build_merge_tree(dm, Linkage::Average);
    let hi = bounds.nc_max.min(n - 1);
    if n < 3 || bounds.nc_min > hi {
        let nc = bounds.nc_min.min(n);
        return Ok(NcSelection {
            num_clusters: nc,
            labels: tree.cut(nc)?,
            silhouette: None,
            degenerate: true,
        });
    }

    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for nc in bounds.nc_min..=hi {
        let labels = tree.cut(nc)?;
        let s = silhouette(dm, &labels)?;
        if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
            best = Some((s, nc, labels));
        }
    }
    let (score, num_clusters, labels) = best.expect("non-empty search range");
    Ok(NcSelection {
        num_clusters,
        labels,
        silhouette: Some(score),
        // A non-positive best silhouette means no count produced any
        // separation (e.g. all points identical).
        degenerate: score <= 0.0,
    })
}

/// Reshape a silhouette-chosen clustering to exactly `target_nc` clusters.
///
/// With more clusters than requested, the `target_nc` largest (ties to the
/// lower label id) survive and every other item moves to the retained
/// cluster with the smallest average distance to its original members.
/// With fewer, items are simply reclustered to `target_nc`. The output
/// always has exactly `target_nc` non-empty clusters.
pub fn redistribute_prevnc2(
    dm: &DistanceMatrix,
    sil_labels: &[usize],
    target_nc: usize,
) -> Result<Vec<usize>> {
    let n = dm.n;
    if sil_labels.len() != n {
        return Err(Error::Domain(format!(
            "label count {} does not match matrix size {n}",
            sil_labels.len()
        )));
    }
    if target_nc == 0 || target_nc > n {
        return Err(Error::Domain(format!(
            "cannot form {target_nc} clusters from {n} items"
        )));
    }

    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, &l) in sil_labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let current = members.len();

    if current == target_nc {
        return Ok(canonical_labels(sil_labels));
    }
    if current < target_nc {
        return agglomerative(dm, target_nc);
    }

    // Keep the target_nc largest clusters; BTreeMap order makes the tie
    // break (equal size -> lower label id) explicit in the sort.
    let mut by_size: Vec<(usize, &Vec<usize>)> = members.iter().map(|(&l, m)| (l, m)).collect();
    by_size.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    let kept: Vec<(usize, &Vec<usize>)> = by_size[..target_nc].to_vec();
    let kept_ids: std::collections::HashSet<usize> = kept.iter().map(|(l, _)| *l).collect();

    let mut out = vec![usize::MAX; n];
    for (l, m) in &kept {
        for &i in *m {
            out[i] = *l;
        }
    }
    // Reassignment is simultaneous: average distances are measured against
    // the retained clusters' original membership, not intermediate states.
    for (i, &l) in sil_labels.iter().enumerate() {
        if kept_ids.contains(&l) {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for (kl, m) in &kept {
            let avg = m.iter().map(|&j| dm.get(i, j)).sum::<f64>() / m.len() as f64;
            let better = match best {
                None => true,
                Some((bd, bl)) => avg < bd || (avg == bd && *kl < bl),
            };
            if better {
                best = Some((avg, *kl));
            }
        }
        out[i] = best.expect("at least one retained cluster").1;
    }
    Ok(canonical_labels(&out))
}

/// How the per-word cluster count is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Silnc,
    Fixnc,
    Prevnc,
    Prevnc2,
    GoldOracle,
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectorKind::Silnc => "silnc",
            SelectorKind::Fixnc => "fixnc",
            SelectorKind::Prevnc => "prevnc",
            SelectorKind::Prevnc2 => "prevnc2",
            SelectorKind::GoldOracle => "gold-oracle",
        })
    }
}

/// Selector plus the data it needs for one word.
#[derive(Debug, Clone, PartialEq)]
pub enum NcSelector {
    /// Maximize the silhouette within the configured bounds.
    Silhouette,
    /// Always this many clusters (capped at the item count).
    Fixed(usize),
    /// Cluster directly into a previous submission's count.
    Prev(usize),
    /// Silhouette first, then reshape to the previous count.
    Prev2(usize),
    /// Pick the count whose clustering best matches these per-occurrence
    /// gold labels. Diagnostic upper bound, not a real selector.
    GoldOracle(Vec<usize>),
}

impl NcSelector {
    pub fn kind(&self) -> SelectorKind {
        match self {
            NcSelector::Silhouette => SelectorKind::Silnc,
            NcSelector::Fixed(_) => SelectorKind::Fixnc,
            NcSelector::Prev(_) => SelectorKind::Prevnc,
            NcSelector::Prev2(_) => SelectorKind::Prevnc2,
            NcSelector::GoldOracle(_) => SelectorKind::GoldOracle,
        }
    }
}

/// Result of clustering one word's occurrences.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub word: String,
    /// Hard sense label per occurrence: the cluster holding the largest
    /// share of its representatives, ties to the lowest cluster id.
    pub labels: Vec<usize>,
    /// Per-occurrence fraction of representatives per cluster id; every
    /// row sums to 1.
    pub distribution: Vec<Vec<f64>>,
    pub num_clusters: usize,
    pub selector: SelectorKind,
    pub silhouette: Option<f64>,
    pub degenerate: bool,
}

fn split_empty(vectors: &[SparseVector]) -> (Vec<usize>, Vec<usize>) {
    let mut non_empty = Vec::new();
    let mut empty = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        if v.is_empty() {
            empty.push(i);
        } else {
            non_empty.push(i);
        }
    }
    (non_empty, empty)
}

/// Fold representative-level labels into per-occurrence distributions and
/// hard labels. Representatives whose vector was empty join the largest
/// cluster (ties to the lowest id).
fn occurrence_labels(
    rep_labels: &[usize],
    non_empty: &[usize],
    empty: &[usize],
    owners: &[usize],
    num_occurrences: usize,
    num_clusters: usize,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut cluster_sizes = vec![0usize; num_clusters];
    for &l in rep_labels {
        cluster_sizes[l] += 1;
    }
    let largest = (0..num_clusters)
        .max_by(|&a, &b| cluster_sizes[a].cmp(&cluster_sizes[b]).then(b.cmp(&a)))
        .unwrap_or(0);

    let mut counts = vec![vec![0usize; num_clusters]; num_occurrences];
    for (&rep_idx, &label) in non_empty.iter().zip(rep_labels) {
        counts[owners[rep_idx]][label] += 1;
    }
    for &rep_idx in empty {
        counts[owners[rep_idx]][largest] += 1;
    }

    let mut labels = Vec::with_capacity(num_occurrences);
    let mut distribution = Vec::with_capacity(num_occurrences);
    for occ_counts in counts {
        let total: usize = occ_counts.iter().sum();
        debug_assert!(total > 0, "every occurrence owns at least one representative");
        let best = (0..num_clusters)
            .max_by(|&a, &b| occ_counts[a].cmp(&occ_counts[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        labels.push(best);
        distribution.push(
            occ_counts
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect(),
        );
    }
    (labels, distribution)
}

fn validate_owners(vectors: &[SparseVector], owners: &[usize], num_occurrences: usize) -> Result<()> {
    if vectors.len() != owners.len() {
        return Err(Error::Domain(format!(
            "{} vectors but {} owners",
            vectors.len(),
            owners.len()
        )));
    }
    if vectors.is_empty() {
        return Err(Error::Domain("no representatives to cluster".into()));
    }
    let mut seen = vec![false; num_occurrences];
    for &o in owners {
        if o >= num_occurrences {
            return Err(Error::Domain(format!(
                "owner index {o} out of range for {num_occurrences} occurrences"
            )));
        }
        seen[o] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Domain(format!(
            "occurrence {missing} has no representative"
        )));
    }
    Ok(())
}

/// Cluster one word's representatives and aggregate them to occurrences.
///
/// `owners[i]` is the occurrence that representative `i` belongs to. With
/// fewer than two non-empty vectors nothing can be clustered: everything
/// lands in a single cluster and the result is flagged degenerate.
pub fn cluster_word(
    word: &str,
    vectors: &[SparseVector],
    owners: &[usize],
    num_occurrences: usize,
    selector: &NcSelector,
    bounds: &NcBounds,
) -> Result<ClusteringResult> {
    validate_owners(vectors, owners, num_occurrences)?;
    bounds.validate()?;
    if let NcSelector::GoldOracle(gold) = selector {
        if gold.len() != num_occurrences {
            return Err(Error::Domain(format!(
                "gold labels for {} occurrences, expected {num_occurrences}",
                gold.len()
            )));
        }
    }

    let (non_empty, empty) = split_empty(vectors);
    if non_empty.len() < 2 {
        let rep_labels = vec![0; non_empty.len()];
        let (labels, distribution) =
            occurrence_labels(&rep_labels, &non_empty, &empty, owners, num_occurrences, 1);
        return Ok(ClusteringResult {
            word: word.to_owned(),
            labels,
            distribution,
            num_clusters: 1,
            selector: selector.kind(),
            silhouette: None,
            degenerate: true,
        });
    }

    let refs: Vec<&SparseVector> = non_empty.iter().map(|&i| &vectors[i]).collect();
    let dm = DistanceMatrix::cosine(&refs)?;
    let n = dm.n();

    let mut degenerate = false;
    let (rep_labels, num_clusters, sil) = match selector {
        NcSelector::Silhouette => {
            let sel = select_nc_silhouette(&dm, bounds)?;
            degenerate = sel.degenerate;
            (sel.labels, sel.num_clusters, sel.silhouette)
        }
        NcSelector::Fixed(k) | NcSelector::Prev(k) => {
            let nc = (*k).clamp(1, n);
            let labels = agglomerative(&dm, nc)?;
            let sil = if nc >= 2 && nc < n {
                Some(silhouette(&dm, &labels)?)
            } else {
                None
            };
            (labels, nc, sil)
        }
        NcSelector::Prev2(k) => {
            let sel = select_nc_silhouette(&dm, bounds)?;
            degenerate = sel.degenerate;
            let nc = (*k).clamp(1, n);
            let labels = redistribute_prevnc2(&dm, &sel.labels, nc)?;
            (labels, nc, sel.silhouette)
        }
        NcSelector::GoldOracle(gold) => {
            let tree = build_merge_tree(&dm, Linkage::Average);
            let hi = bounds.nc_max.min(n.saturating_sub(1));
            let mut candidates: Vec<usize> = (bounds.nc_min..=hi).collect();
            if candidates.is_empty() {
                candidates.push(bounds.nc_min.min(n));
                degenerate = true;
            }
            let mut best: Option<(f64, usize, Vec<usize>)> = None;
            for nc in candidates {
                let labels = tree.cut(nc)?;
                let (occ, _) =
                    occurrence_labels(&labels, &non_empty, &empty, owners, num_occurrences, nc);
                let score = metrics::ari(gold, &occ)?;
                if best.as_ref().is_none_or(|(bs, _, _)| score > *bs) {
                    best = Some((score, nc, labels));
                }
            }
            let (_, nc, labels) = best.expect("non-empty candidate list");
            (labels, nc, None)
        }
    };

    let (labels, distribution) = occurrence_labels(
        &rep_labels,
        &non_empty,
        &empty,
        owners,
        num_occurrences,
        num_clusters,
    );
    Ok(ClusteringResult {
        word: word.to_owned(),
        labels,
        distribution,
        num_clusters,
        selector: selector.kind(),
        silhouette: sil,
        degenerate,
    })
}

/// Best achievable agreement with gold labels over a clustering grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxAriOutcome {
    pub ari: f64,
    pub num_clusters: usize,
    pub linkage: Linkage,
    pub affinity: Affinity,
}

/// Exhaustively cluster under every `(affinity, linkage, nc)` combination
/// and keep the configuration with the highest agreement against `gold`.
/// Candidate counts are clamped to the number of non-empty vectors and
/// deduplicated; occurrence aggregation matches [`cluster_word`] exactly,
/// so any clustering the pipeline can produce is in the search space.
pub fn max_ari_search(
    vectors: &[SparseVector],
    owners: &[usize],
    num_occurrences: usize,
    gold: &[usize],
    nc_candidates: &[usize],
) -> Result<MaxAriOutcome> {
    validate_owners(vectors, owners, num_occurrences)?;
    if gold.len() != num_occurrences {
        return Err(Error::Domain(format!(
            "gold labels for {} occurrences, expected {num_occurrences}",
            gold.len()
        )));
    }
    if nc_candidates.is_empty() {
        return Err(Error::Domain("empty cluster-count grid".into()));
    }

    let (non_empty, empty) = split_empty(vectors);
    if non_empty.len() < 2 {
        let rep_labels = vec![0; non_empty.len()];
        let (occ, _) =
            occurrence_labels(&rep_labels, &non_empty, &empty, owners, num_occurrences, 1);
        return Ok(MaxAriOutcome {
            ari: metrics::ari(gold, &occ)?,
            num_clusters: 1,
            linkage: Linkage::Average,
            affinity: Affinity::Cosine,
        });
    }

    let refs: Vec<&SparseVector> = non_empty.iter().map(|&i| &vectors[i]).collect();
    let n = refs.len();
    let mut counts: Vec<usize> = nc_candidates.iter().map(|&c| c.clamp(1, n)).collect();
    counts.sort_unstable();
    counts.dedup();

    let mut best: Option<MaxAriOutcome> = None;
    for affinity in [Affinity::Cosine, Affinity::Euclidean] {
        let dm = match affinity {
            Affinity::Cosine => DistanceMatrix::cosine(&refs)?,
            Affinity::Euclidean => DistanceMatrix::euclidean(&refs)?,
        };
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
            let tree = build_merge_tree(&dm, linkage);
            for &nc in &counts {
                let rep_labels = tree.cut(nc)?;
                let (occ, _) = occurrence_labels(
                    &rep_labels,
                    &non_empty,
                    &empty,
                    owners,
                    num_occurrences,
                    nc,
                );
                let score = metrics::ari(gold, &occ)?;
                if best.as_ref().is_none_or(|b| score > b.ari) {
                    best = Some(MaxAriOutcome {
                        ari: score,
                        num_clusters: nc,
                        linkage,
                        affinity,
                    });
                }
            }
        }
    }
    Ok(best.expect("non-empty grid"))
}
