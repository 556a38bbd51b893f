//! Combining forward and backward substitute distributions into
//! representatives of an occurrence.
//!
//! A representative is the multiset of tokens that later becomes one
//! bag-of-words vector. Most methods produce exactly one representative per
//! occurrence; `sampling` produces several, each drawn from the two
//! renormalized distributions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::substitutes::{Direction, SubstituteDistribution, SubstituteEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineMethod {
    /// Union of the top-K tokens of each direction, as a set.
    BaseUnion,
    /// Several representatives per occurrence, each holding `sample_size`
    /// weighted draws from each direction's renormalized top-K.
    Sampling,
    /// Plain average of the two renormalized distributions.
    Avg,
    /// Convex combination weighted by the target's relative position.
    PosWeightAvg,
    /// Product of both probabilities boosted by vocabulary rank.
    BayesComb,
}

impl std::fmt::Display for CombineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CombineMethod::BaseUnion => "base-union",
            CombineMethod::Sampling => "sampling",
            CombineMethod::Avg => "avg",
            CombineMethod::PosWeightAvg => "pos-weight-avg",
            CombineMethod::BayesComb => "bayes-comb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombineConfig {
    pub method: CombineMethod,
    /// K: how many tokens of each direction take part, and how long a
    /// combined representative may get.
    pub top_k: usize,
    /// S: representatives per occurrence (sampling only).
    pub num_representatives: usize,
    /// L: draws per direction inside one sampled representative.
    pub sample_size: usize,
    /// z: exponent of the rank boost in `bayes-comb`.
    pub zipf_z: f64,
    /// Width of the position ramp in `pos-weight-avg`.
    pub beta: f64,
}

impl Default for CombineConfig {
    fn default() -> Self {
        CombineConfig {
            method: CombineMethod::BayesComb,
            top_k: 20,
            num_representatives: 1,
            sample_size: 10,
            zipf_z: 2.0,
            beta: 0.1,
        }
    }
}

impl CombineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("combine.top_k must be >= 1".into()));
        }
        if self.num_representatives == 0 {
            return Err(Error::Config("combine.num_representatives must be >= 1".into()));
        }
        if self.sample_size == 0 {
            return Err(Error::Config("combine.sample_size must be >= 1".into()));
        }
        if !self.zipf_z.is_finite() || self.zipf_z < 0.0 {
            return Err(Error::Config(format!(
                "combine.zipf_z must be a finite non-negative number, got {}",
                self.zipf_z
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::Config(format!(
                "combine.beta must lie in (0, 0.5], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// The token multiset standing in for one occurrence during clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representative {
    pub context_id: String,
    pub substitutes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub representatives: Vec<Representative>,
    /// True when `bayes-comb` had no shared support and the union
    /// fallback was used instead.
    pub bayes_fallback: bool,
}

/// Keep the first `k` entries (the slice is already probability-sorted)
/// and rescale them to sum to 1.
pub fn renormalize_top_k(entries: &[SubstituteEntry], k: usize) -> Result<Vec<SubstituteEntry>> {
    if k == 0 {
        return Err(Error::Domain("top-k renormalization needs k >= 1".into()));
    }
    if entries.is_empty() {
        return Err(Error::Domain("cannot renormalize an empty distribution".into()));
    }
    let kept = &entries[..k.min(entries.len())];
    let sum: f64 = kept.iter().map(|e| e.1).sum();
    Ok(kept
        .iter()
        .map(|(t, p, r)| (t.clone(), p / sum, *r))
        .collect())
}

/// Descending score, ties by rank ascending, then token.
fn sort_scored(entries: &mut [SubstituteEntry]) {
    entries.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| a.2.cmp(&b.2))
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// Union the two supports, scoring each token with `score(p_fwd, p_bwd)`
/// where a missing side contributes probability 0. Ranks are taken from
/// the forward side when present.
fn union_scored(
    fwd: &[SubstituteEntry],
    bwd: &[SubstituteEntry],
    score: impl Fn(f64, f64) -> f64,
) -> Result<Vec<SubstituteEntry>> {
    if fwd.is_empty() && bwd.is_empty() {
        return Err(Error::Domain("both substitute distributions are empty".into()));
    }
    let mut merged: std::collections::HashMap<&str, (f64, f64, u32)> = std::collections::HashMap::new();
    for (t, p, r) in fwd {
        merged.insert(t.as_str(), (*p, 0.0, *r));
    }
    for (t, p, r) in bwd {
        merged
            .entry(t.as_str())
            .and_modify(|e| e.1 = *p)
            .or_insert((0.0, *p, *r));
    }
    let mut out: Vec<SubstituteEntry> = merged
        .into_iter()
        .map(|(t, (pf, pb, r))| (t.to_owned(), score(pf, pb), r))
        .collect();
    sort_scored(&mut out);
    Ok(out)
}

/// Plain average of two distributions. Callers renormalize each side over
/// its top-K first; tokens present on one side only count as 0 on the other.
pub fn combine_avg(fwd: &[SubstituteEntry], bwd: &[SubstituteEntry]) -> Result<Vec<SubstituteEntry>> {
    union_scored(fwd, bwd, |pf, pb| 0.5 * (pf + pb))
}

/// Forward weight as a function of the target's relative position.
///
/// Ramps linearly from 0 at the very start of the context up to 0.5 at
/// `pos = beta`, stays flat at 0.5 through the middle, and ramps up to 1
/// over the final `beta` stretch: a model gets more weight the more
/// context it has seen, and near an edge the opposite direction carries
/// the prediction.
pub fn alpha(pos: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::Domain(format!("beta must lie in (0, 0.5], got {beta}")));
    }
    if !(0.0..=1.0).contains(&pos) {
        return Err(Error::Domain(format!("relative position {pos} outside [0, 1]")));
    }
    let half_slope = 0.5 / beta;
    Ok((half_slope * pos).min(0.5).max(half_slope * (pos - 1.0 + 2.0 * beta)))
}

/// Convex combination `alpha * fwd + (1 - alpha) * bwd`.
pub fn combine_pos_weighted(
    fwd: &[SubstituteEntry],
    bwd: &[SubstituteEntry],
    pos: f64,
    beta: f64,
) -> Result<Vec<SubstituteEntry>> {
    let a = alpha(pos, beta)?;
    union_scored(fwd, bwd, |pf, pb| a * pf + (1.0 - a) * pb)
}

/// Product-of-probabilities score with a rank boost:
/// `P_fwd(w) * P_bwd(w) * rank(w)^z` over the intersection of the two
/// supports, unnormalized. The boost promotes rare, hence specific,
/// tokens over frequent fillers. Rank is read from the forward side.
///
/// Supports are intersected exactly as given; per-side truncation is the
/// substitute source's business.
pub fn combine_bayes(
    fwd: &[SubstituteEntry],
    bwd: &[SubstituteEntry],
    z: f64,
) -> Result<Vec<SubstituteEntry>> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::Domain(format!("rank exponent must be >= 0, got {z}")));
    }
    if fwd.is_empty() && bwd.is_empty() {
        return Err(Error::Domain("both substitute distributions are empty".into()));
    }
    let bwd_probs: std::collections::HashMap<&str, f64> =
        bwd.iter().map(|(t, p, _)| (t.as_str(), *p)).collect();
    let mut out: Vec<SubstituteEntry> = fwd
        .iter()
        .filter_map(|(t, pf, r)| {
            bwd_probs
                .get(t.as_str())
                .map(|pb| (t.clone(), pf * pb * (*r as f64).powf(z), *r))
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NoSharedSubstitutes);
    }
    sort_scored(&mut out);
    Ok(out)
}

/// `count` weighted draws with replacement.
fn draw_tokens(rng: &mut ChaCha8Rng, entries: &[SubstituteEntry], count: usize) -> Vec<String> {
    let mut cumulative = Vec::with_capacity(entries.len());
    let mut acc = 0.0;
    for (_, p, _) in entries {
        acc += p;
        cumulative.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let x: f64 = rng.random::<f64>() * total;
            let i = cumulative
                .iter()
                .position(|&c| x < c)
                .unwrap_or(entries.len() - 1);
            entries[i].0.clone()
        })
        .collect()
}

fn top_tokens(entries: &[SubstituteEntry], k: usize) -> Vec<String> {
    entries.iter().take(k).map(|(t, _, _)| t.clone()).collect()
}

/// Build the representatives of one occurrence.
///
/// `pos` is the target's relative position (used by `pos-weight-avg`
/// only), `seed` drives the sampling method; derive it from the run seed
/// and the occurrence so results are reproducible yet vary across
/// occurrences.
pub fn make_representatives(
    fwd: &SubstituteDistribution,
    bwd: &SubstituteDistribution,
    pos: f64,
    cfg: &CombineConfig,
    seed: u64,
) -> Result<RepresentativeSet> {
    cfg.validate()?;
    if fwd.direction != Direction::Fwd || bwd.direction != Direction::Bwd {
        return Err(Error::Config(format!(
            "distribution directions are swapped: got {} and {}",
            fwd.direction, bwd.direction
        )));
    }
    let fe = &fwd.entries;
    let be = &bwd.entries;
    if fe.is_empty() && be.is_empty() {
        return Err(Error::NoSubstitutes {
            context_id: fwd.context_id.clone(),
        });
    }
    let k = cfg.top_k;
    let rep = |substitutes: Vec<String>| Representative {
        context_id: fwd.context_id.clone(),
        substitutes,
    };

    // A side that produced nothing simply contributes nothing; only both
    // being empty is an error (checked above).
    let renorm_or_empty = |entries: &[SubstituteEntry]| -> Result<Vec<SubstituteEntry>> {
        if entries.is_empty() {
            Ok(Vec::new())
        } else {
            renormalize_top_k(entries, k)
        }
    };

    let mut bayes_fallback = false;
    let representatives = match cfg.method {
        CombineMethod::BaseUnion => {
            let mut seen = std::collections::HashSet::new();
            let mut tokens = Vec::new();
            for (t, _, _) in fe.iter().take(k).chain(be.iter().take(k)) {
                if seen.insert(t.as_str()) {
                    tokens.push(t.clone());
                }
            }
            vec![rep(tokens)]
        }
        CombineMethod::Sampling => {
            let f = renorm_or_empty(fe)?;
            let b = renorm_or_empty(be)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..cfg.num_representatives)
                .map(|_| {
                    let mut tokens = Vec::with_capacity(2 * cfg.sample_size);
                    if !f.is_empty() {
                        tokens.extend(draw_tokens(&mut rng, &f, cfg.sample_size));
                    }
                    if !b.is_empty() {
                        tokens.extend(draw_tokens(&mut rng, &b, cfg.sample_size));
                    }
                    rep(tokens)
                })
                .collect()
        }
        CombineMethod::Avg => {
            let combined = combine_avg(&renorm_or_empty(fe)?, &renorm_or_empty(be)?)?;
            vec![rep(top_tokens(&combined, k))]
        }
        CombineMethod::PosWeightAvg => {
            let combined =
                combine_pos_weighted(&renorm_or_empty(fe)?, &renorm_or_empty(be)?, pos, cfg.beta)?;
            vec![rep(top_tokens(&combined, k))]
        }
        CombineMethod::BayesComb => {
            let combined = match combine_bayes(fe, be, cfg.zipf_z) {
                Ok(c) => c,
                Err(Error::NoSharedSubstitutes) => {
                    bayes_fallback = true;
                    union_scored(fe, be, |pf, pb| pf + pb)?
                }
                Err(e) => return Err(e),
            };
            vec![rep(top_tokens(&combined, k))]
        }
    };

    Ok(RepresentativeSet {
        representatives,
        bayes_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(raw: &[(&str, f64, u32)]) -> Vec<SubstituteEntry> {
        raw.iter().map(|(t, p, r)| (t.to_string(), *p, *r)).collect()
    }

    fn dist(direction: Direction, raw: &[(&str, f64, u32)]) -> SubstituteDistribution {
        SubstituteDistribution {
            context_id: "c1".into(),
            word: "w".into(),
            direction,
            entries: entries(raw),
            meta: serde_json::Map::new(),
        }
    }

    #[test]
    fn renormalize_keeps_top_k_and_rescales() {
        let e = entries(&[("a", 0.4, 1), ("b", 0.2, 2), ("c", 0.1, 3)]);
        let r = renormalize_top_k(&e, 2).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r[1].1 - 1.0 / 3.0).abs() < 1e-12);
        assert!(renormalize_top_k(&[], 2).is_err());
        assert!(renormalize_top_k(&e, 0).is_err());
    }

    #[test]
    fn avg_is_the_elementwise_mean() {
        let f = entries(&[("a", 0.6, 1), ("b", 0.4, 2)]);
        let b = entries(&[("b", 0.8, 2), ("a", 0.2, 1)]);
        let c = combine_avg(&f, &b).unwrap();
        assert_eq!(c[0].0, "b");
        assert!((c[0].1 - 0.6).abs() < 1e-12);
        assert_eq!(c[1].0, "a");
        assert!((c[1].1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn avg_preserves_total_mass() {
        let f = entries(&[("a", 0.5, 1), ("b", 0.5, 2)]);
        let b = entries(&[("c", 1.0, 3)]);
        let c = combine_avg(&f, &b).unwrap();
        let sum: f64 = c.iter().map(|e| e.1).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_matches_hand_computed_values() {
        // beta = 0.1: ramp up over [0, 0.1], flat 0.5, ramp to 1 over [0.9, 1].
        assert!((alpha(0.0, 0.1).unwrap() - 0.0).abs() < 1e-12);
        assert!((alpha(0.5, 0.1).unwrap() - 0.5).abs() < 1e-12);
        assert!((alpha(1.0, 0.1).unwrap() - 1.0).abs() < 1e-12);
        assert!((alpha(0.95, 0.1).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn alpha_rejects_out_of_range_arguments() {
        assert!(alpha(-0.01, 0.1).is_err());
        assert!(alpha(1.01, 0.1).is_err());
        assert!(alpha(0.5, 0.0).is_err());
        assert!(alpha(0.5, 0.6).is_err());
    }

    #[test]
    fn alpha_mirror_identity() {
        for beta in [0.1, 0.25, 0.5] {
            for i in 0..=100 {
                let pos = i as f64 / 100.0;
                let sum = alpha(pos, beta).unwrap() + alpha(1.0 - pos, beta).unwrap();
                assert!((sum - 1.0).abs() < 1e-12, "pos {pos} beta {beta}");
            }
        }
    }

    #[test]
    fn bayes_rank_boost_orders_rare_specific_tokens_first() {
        // w1: 0.1 * 0.2 * 100^2 = 200 beats w2: 0.2 * 0.2 * 10^2 = 4.
        let f = entries(&[("w2", 0.2, 10), ("w1", 0.1, 100)]);
        let b = entries(&[("w1", 0.2, 100), ("w2", 0.2, 10)]);
        let c = combine_bayes(&f, &b, 2.0).unwrap();
        assert_eq!(c[0].0, "w1");
        assert!((c[0].1 - 200.0).abs() < 1e-9);
        assert_eq!(c[1].0, "w2");
        assert!((c[1].1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn bayes_ordering_is_invariant_under_rescaling() {
        let f = entries(&[("a", 0.5, 3), ("b", 0.3, 7), ("c", 0.2, 2)]);
        let b = entries(&[("b", 0.6, 7), ("a", 0.3, 3), ("c", 0.1, 2)]);
        let base: Vec<String> = combine_bayes(&f, &b, 1.5)
            .unwrap()
            .into_iter()
            .map(|e| e.0)
            .collect();
        for scale in [0.25, 3.0] {
            let scaled: Vec<SubstituteEntry> =
                f.iter().map(|(t, p, r)| (t.clone(), p * scale, *r)).collect();
            let got: Vec<String> = combine_bayes(&scaled, &b, 1.5)
                .unwrap()
                .into_iter()
                .map(|e| e.0)
                .collect();
            assert_eq!(got, base);
        }
    }

    #[test]
    fn bayes_disjoint_supports_error_and_union_fallback() {
        let f = dist(Direction::Fwd, &[("a", 0.5, 1)]);
        let b = dist(Direction::Bwd, &[("b", 0.5, 2)]);
        assert!(matches!(
            combine_bayes(&f.entries, &b.entries, 2.0),
            Err(Error::NoSharedSubstitutes)
        ));
        let cfg = CombineConfig {
            method: CombineMethod::BayesComb,
            ..CombineConfig::default()
        };
        let set = make_representatives(&f, &b, 0.5, &cfg, 7).unwrap();
        assert!(set.bayes_fallback);
        assert_eq!(set.representatives.len(), 1);
        let mut subs = set.representatives[0].substitutes.clone();
        subs.sort();
        assert_eq!(subs, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn base_union_deduplicates() {
        let f = dist(Direction::Fwd, &[("a", 0.5, 1), ("b", 0.3, 2)]);
        let b = dist(Direction::Bwd, &[("b", 0.6, 2), ("c", 0.2, 3)]);
        let cfg = CombineConfig {
            method: CombineMethod::BaseUnion,
            top_k: 2,
            ..CombineConfig::default()
        };
        let set = make_representatives(&f, &b, 0.5, &cfg, 0).unwrap();
        assert_eq!(
            set.representatives[0].substitutes,
            vec!["a".to_string(), "b".into(), "c".into()]
        );
    }

    #[test]
    fn sampling_is_seed_reproducible_and_seed_sensitive() {
        let f = dist(
            Direction::Fwd,
            &[("a", 0.4, 1), ("b", 0.3, 2), ("c", 0.2, 3), ("d", 0.1, 4)],
        );
        let b = dist(Direction::Bwd, &[("x", 0.6, 5), ("y", 0.4, 6)]);
        let cfg = CombineConfig {
            method: CombineMethod::Sampling,
            top_k: 4,
            num_representatives: 3,
            sample_size: 8,
            ..CombineConfig::default()
        };
        let one = make_representatives(&f, &b, 0.5, &cfg, 42).unwrap();
        let two = make_representatives(&f, &b, 0.5, &cfg, 42).unwrap();
        let other = make_representatives(&f, &b, 0.5, &cfg, 43).unwrap();
        assert_eq!(one, two);
        assert_ne!(one, other);
        assert_eq!(one.representatives.len(), 3);
        for r in &one.representatives {
            assert_eq!(r.substitutes.len(), 16); // sample_size draws per side
        }
    }

    #[test]
    fn sampling_with_one_empty_side_draws_from_the_other() {
        let f = dist(Direction::Fwd, &[("a", 0.4, 1), ("b", 0.3, 2)]);
        let b = dist(Direction::Bwd, &[]);
        let cfg = CombineConfig {
            method: CombineMethod::Sampling,
            num_representatives: 2,
            sample_size: 5,
            ..CombineConfig::default()
        };
        let set = make_representatives(&f, &b, 0.5, &cfg, 1).unwrap();
        for r in &set.representatives {
            assert_eq!(r.substitutes.len(), 5);
            assert!(r.substitutes.iter().all(|t| t == "a" || t == "b"));
        }
    }

    #[test]
    fn both_sides_empty_is_an_error() {
        let f = dist(Direction::Fwd, &[]);
        let b = dist(Direction::Bwd, &[]);
        let cfg = CombineConfig::default();
        assert!(matches!(
            make_representatives(&f, &b, 0.5, &cfg, 0),
            Err(Error::NoSubstitutes { .. })
        ));
    }

    #[test]
    fn swapped_directions_are_a_configuration_error() {
        let f = dist(Direction::Bwd, &[("a", 0.5, 1)]);
        let b = dist(Direction::Fwd, &[("a", 0.5, 1)]);
        assert!(matches!(
            make_representatives(&f, &b, 0.5, &CombineConfig::default(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn pos_weighting_follows_alpha_at_the_edges() {
        let f = entries(&[("fwd-only", 1.0, 1)]);
        let b = entries(&[("bwd-only", 1.0, 2)]);
        // Target at the very start: everything rides on the backward model.
        let at_start = combine_pos_weighted(&f, &b, 0.0, 0.1).unwrap();
        assert_eq!(at_start[0].0, "bwd-only");
        assert!((at_start[0].1 - 1.0).abs() < 1e-12);
        let at_end = combine_pos_weighted(&f, &b, 1.0, 0.1).unwrap();
        assert_eq!(at_end[0].0, "fwd-only");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_entries(max_len: usize) -> impl Strategy<Value = Vec<SubstituteEntry>> {
            prop::collection::vec((1u32..5000, 1e-6f64..1.0), 1..max_len).prop_map(|raw| {
                let mut seen = std::collections::HashSet::new();
                let mut entries: Vec<SubstituteEntry> = raw
                    .into_iter()
                    .filter(|(r, _)| seen.insert(*r))
                    .map(|(r, w)| (format!("t{r}"), w, r))
                    .collect();
                let sum: f64 = entries.iter().map(|e| e.1).sum();
                for e in &mut entries {
                    e.1 /= sum;
                }
                entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.2.cmp(&b.2)));
                entries
            })
        }

        proptest! {
            #[test]
            fn renormalized_entries_sum_to_one(e in arb_entries(12), k in 1usize..20) {
                let r = renormalize_top_k(&e, k).unwrap();
                let sum: f64 = r.iter().map(|x| x.1).sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }

            #[test]
            fn convex_combinations_preserve_total_mass(
                f in arb_entries(10),
                b in arb_entries(10),
                pos in 0.0f64..=1.0,
                beta in 0.01f64..=0.5,
            ) {
                let avg = combine_avg(&f, &b).unwrap();
                let s: f64 = avg.iter().map(|e| e.1).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
                let pw = combine_pos_weighted(&f, &b, pos, beta).unwrap();
                let s: f64 = pw.iter().map(|e| e.1).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }

            #[test]
            fn alpha_is_monotone_in_position(beta in 0.01f64..=0.5, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(alpha(lo, beta).unwrap() <= alpha(hi, beta).unwrap() + 1e-12);
            }
        }
    }
}
