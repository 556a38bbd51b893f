//! End-to-end runs: substitute acquisition, combination, vectorization,
//! clustering, evaluation, and artifact writing.
//!
//! Expensive, config-independent state (the dataset, trained models, one
//! substitute distribution pair per occurrence) lives in a
//! [`PipelineEnv`] prepared once; [`execute`] then applies one
//! [`RunConfig`] to it, which is what makes grid sweeps cheap. Artifacts
//! are written with stable ordering and fixed number formatting, so a
//! rerun with the same config and seed reproduces them byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{nc_difference_csv, nc_difference_report, NcCounts, NcDifferenceReport};
use crate::cluster::{
    max_ari_search, num_distinct, MaxAriOutcome, NcSelector, SelectorKind,
};
use crate::combine::{make_representatives, CombineMethod, Representative, RepresentativeSet};
use crate::config::{GridObjective, GridSpec, RunConfig, SourceConfig};
use crate::dataset::{format_dataset, ingest_dataset, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{
    self, aggregate, baseline_labels, csv_row, fmt_f64, AggregateScores, BaselineKind,
    EvalReport, WordEval,
};
use crate::substitutes::{read_distribution_file, Direction, SubstituteDistribution};
use crate::toy_lm::{corpus_from_text, predict_substitutes, train_toy_lm};
use crate::vectorize::{build_vocab, tfidf_scale, to_bow, Lemmatizer, SparseVector};

/// Stable per-occurrence seed: FNV-1a over the run seed and the context
/// id. Hand-rolled so the stream never changes underneath recorded runs.
pub fn derive_seed(seed: u64, context_id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    for b in context_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Everything a run needs that does not depend on the tunable settings.
pub struct PipelineEnv {
    pub dataset: Dataset,
    distributions: HashMap<String, (SubstituteDistribution, SubstituteDistribution)>,
    lemmatizer: Lemmatizer,
    /// Per-word cluster counts read from an earlier submission.
    prev_counts: Option<BTreeMap<String, usize>>,
}

fn empty_distribution(context_id: &str, word: &str, direction: Direction) -> SubstituteDistribution {
    SubstituteDistribution {
        context_id: context_id.to_owned(),
        word: word.to_owned(),
        direction,
        entries: Vec::new(),
        meta: serde_json::Map::new(),
    }
}

impl PipelineEnv {
    pub fn prepare(cfg: &RunConfig) -> Result<PipelineEnv> {
        cfg.validate()?;
        let dataset = ingest_dataset(&cfg.dataset)?;

        let distributions = match &cfg.source {
            SourceConfig::ToyLm {
                corpus,
                order,
                smoothing_k,
                top_k,
                use_pattern,
                pattern,
            } => {
                let text = std::fs::read_to_string(corpus).map_err(|e| Error::io(corpus, e))?;
                let sentences = corpus_from_text(&text);
                let fwd_lm = train_toy_lm(&sentences, Direction::Fwd, *order, *smoothing_k)?;
                let bwd_lm = train_toy_lm(&sentences, Direction::Bwd, *order, *smoothing_k)?;
                let spaced = format!(" {} ", pattern.trim());
                let pattern = use_pattern.then_some(spaced.as_str());
                let keep = if *top_k == 0 {
                    fwd_lm.vocab_size().max(1)
                } else {
                    *top_k
                };
                let mut map = HashMap::with_capacity(dataset.occurrences.len());
                for occ in &dataset.occurrences {
                    let fwd = predict_substitutes(&fwd_lm, occ, keep, pattern)?;
                    let bwd = predict_substitutes(&bwd_lm, occ, keep, pattern)?;
                    map.insert(occ.context_id.clone(), (fwd, bwd));
                }
                map
            }
            SourceConfig::File { path } => {
                let known: HashMap<&str, &str> = dataset
                    .occurrences
                    .iter()
                    .map(|o| (o.context_id.as_str(), o.word.as_str()))
                    .collect();
                let mut sides: HashMap<String, (Option<SubstituteDistribution>, Option<SubstituteDistribution>)> =
                    HashMap::new();
                for dist in read_distribution_file(path)? {
                    let Some(&word) = known.get(dist.context_id.as_str()) else {
                        log::warn!(
                            "{}: distribution for unknown occurrence {}, skipping",
                            path.display(),
                            dist.context_id
                        );
                        continue;
                    };
                    if dist.word != word {
                        return Err(Error::Domain(format!(
                            "{}: occurrence {} belongs to {:?} but a distribution says {:?}",
                            path.display(),
                            dist.context_id,
                            word,
                            dist.word
                        )));
                    }
                    let slot = sides.entry(dist.context_id.clone()).or_default();
                    let side = match dist.direction {
                        Direction::Fwd => &mut slot.0,
                        Direction::Bwd => &mut slot.1,
                    };
                    if side.is_some() {
                        return Err(Error::Domain(format!(
                            "{}: duplicate {} distribution for occurrence {}",
                            path.display(),
                            dist.direction,
                            dist.context_id
                        )));
                    }
                    *side = Some(dist);
                }
                dataset
                    .occurrences
                    .iter()
                    .map(|occ| {
                        let (fwd, bwd) = sides.remove(&occ.context_id).unwrap_or((None, None));
                        let fwd = fwd.unwrap_or_else(|| {
                            empty_distribution(&occ.context_id, &occ.word, Direction::Fwd)
                        });
                        let bwd = bwd.unwrap_or_else(|| {
                            empty_distribution(&occ.context_id, &occ.word, Direction::Bwd)
                        });
                        (occ.context_id.clone(), (fwd, bwd))
                    })
                    .collect()
            }
        };

        let lemmatizer = match &cfg.vectorize.lemma_dict {
            Some(path) => Lemmatizer::from_tsv(path)?,
            None => Lemmatizer::identity(),
        };

        let prev_counts = match &cfg.select.prev_submission {
            Some(path) => Some(submission_cluster_counts(&ingest_dataset(path)?)?),
            None => None,
        };

        Ok(PipelineEnv {
            dataset,
            distributions,
            lemmatizer,
            prev_counts,
        })
    }
}

/// Distinct predicted senses per word of an earlier submission.
pub fn submission_cluster_counts(submission: &Dataset) -> Result<BTreeMap<String, usize>> {
    let mut counts = BTreeMap::new();
    for (word, indices) in submission.by_word() {
        let mut labels = std::collections::BTreeSet::new();
        for &i in &indices {
            match &submission.occurrences[i].predict_sense_id {
                Some(id) => {
                    labels.insert(id.as_str());
                }
                None => {
                    return Err(Error::SubmissionMismatch(format!(
                        "occurrence {} of {word:?} has no prediction",
                        submission.occurrences[i].context_id
                    )))
                }
            }
        }
        counts.insert(word.to_owned(), labels.len());
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFailure {
    pub word: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAriReport {
    pub per_word: BTreeMap<String, MaxAriOutcome>,
    /// Example-weighted mean of the per-word best agreements.
    pub weighted_ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub one_cluster: AggregateScores,
    pub singletons: AggregateScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub selector: SelectorKind,
    pub combine_method: CombineMethod,
    pub num_words: usize,
    pub num_occurrences: usize,
    /// Words dropped from predictions and scoring, with the reason.
    pub failures: Vec<WordFailure>,
    /// Words whose input was too small or flat for a real cluster search.
    pub degenerate_words: Vec<String>,
    /// Occurrences where the product combination fell back to a union.
    pub bayes_fallback_occurrences: usize,
    pub scores: Option<EvalReport>,
    pub baselines: Option<BaselineReport>,
    pub max_ari: Option<MaxAriReport>,
    pub nc_differences: Option<NcDifferenceReport>,
}

impl RunReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// One occurrence's representatives, as dumped to `representatives.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentativeDump {
    pub context_id: String,
    pub word: String,
    pub bayes_fallback: bool,
    pub representatives: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    /// The input dataset with predictions filled in for every word that
    /// succeeded.
    pub predictions: Dataset,
    pub representatives: Option<Vec<RepresentativeDump>>,
    /// File names written under the output directory; empty until
    /// [`run_pipeline`] writes them.
    pub artifacts: Vec<String>,
}

struct WordOutput {
    occ_indices: Vec<usize>,
    labels: Vec<usize>,
    silhouette_degenerate: bool,
    bayes_fallbacks: usize,
    gold: Option<Vec<usize>>,
    max_ari: Option<MaxAriOutcome>,
    rep_sets: Option<Vec<RepresentativeSet>>,
}

fn gold_labels(dataset: &Dataset, occ_indices: &[usize]) -> Option<Vec<usize>> {
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(occ_indices.len());
    for &i in occ_indices {
        let gold = dataset.occurrences[i].gold_sense_id.as_deref()?;
        let next = ids.len();
        out.push(*ids.entry(gold).or_insert(next));
    }
    Some(out)
}

fn process_word(
    env: &PipelineEnv,
    cfg: &RunConfig,
    word: &str,
    occ_indices: &[usize],
) -> Result<WordOutput> {
    let mut rep_sets = Vec::with_capacity(occ_indices.len());
    let mut all_reps: Vec<Representative> = Vec::new();
    let mut owners: Vec<usize> = Vec::new();
    for (local, &occ_i) in occ_indices.iter().enumerate() {
        let occ = &env.dataset.occurrences[occ_i];
        let (fwd, bwd) = env
            .distributions
            .get(&occ.context_id)
            .ok_or_else(|| Error::NoSubstitutes {
                context_id: occ.context_id.clone(),
            })?;
        let set = make_representatives(
            fwd,
            bwd,
            occ.relative_position(),
            &cfg.combine,
            derive_seed(cfg.seed, &occ.context_id),
        )?;
        for rep in &set.representatives {
            owners.push(local);
            all_reps.push(rep.clone());
        }
        rep_sets.push(set);
    }

    let vocab = build_vocab(&all_reps, &env.lemmatizer, word, &cfg.vectorize)?;
    let mut vectors: Vec<SparseVector> = all_reps
        .iter()
        .map(|r| to_bow(r, &vocab, &env.lemmatizer))
        .collect();
    if cfg.vectorize.tfidf {
        vectors = tfidf_scale(&vectors);
    }

    let gold = gold_labels(&env.dataset, occ_indices);
    let selector = match cfg.select.selector {
        SelectorKind::Silnc => NcSelector::Silhouette,
        SelectorKind::Fixnc => NcSelector::Fixed(
            cfg.select
                .fixed_nc
                .ok_or_else(|| Error::Config("select.fixed_nc is not set".into()))?,
        ),
        SelectorKind::Prevnc | SelectorKind::Prevnc2 => {
            let counts = cfg.select.prev_submission.as_ref().and(env.prev_counts.as_ref());
            let count = counts
                .and_then(|c| c.get(word))
                .copied()
                .ok_or_else(|| {
                    Error::SubmissionMismatch(format!("no previous predictions for {word:?}"))
                })?;
            if cfg.select.selector == SelectorKind::Prevnc {
                NcSelector::Prev(count)
            } else {
                NcSelector::Prev2(count)
            }
        }
        SelectorKind::GoldOracle => NcSelector::GoldOracle(gold.clone().ok_or_else(|| {
            Error::Domain("the gold-oracle selector needs gold labels on every occurrence".into())
        })?),
    };

    let bounds = cfg.select.bounds();
    let result = crate::cluster::cluster_word(
        word,
        &vectors,
        &owners,
        occ_indices.len(),
        &selector,
        &bounds,
    )?;

    let max_ari = match (&gold, cfg.eval.max_ari) {
        (Some(gold), true) => {
            let mut candidates: Vec<usize> = (bounds.nc_min..=bounds.nc_max).collect();
            candidates.push(result.num_clusters);
            candidates.push(num_distinct(gold));
            Some(max_ari_search(
                &vectors,
                &owners,
                occ_indices.len(),
                gold,
                &candidates,
            )?)
        }
        _ => None,
    };

    Ok(WordOutput {
        occ_indices: occ_indices.to_vec(),
        labels: result.labels,
        silhouette_degenerate: result.degenerate,
        bayes_fallbacks: rep_sets.iter().filter(|s| s.bayes_fallback).count(),
        gold,
        max_ari,
        rep_sets: cfg.eval.dump_representatives.then_some(rep_sets),
    })
}

/// Run one configuration against a prepared environment. Word-level
/// failures do not abort the run: the affected words stay unpredicted
/// and are listed in the report.
pub fn execute(env: &PipelineEnv, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.eval.gold
        && env
            .dataset
            .occurrences
            .iter()
            .all(|o| o.gold_sense_id.is_none())
    {
        return Err(Error::Domain(
            "evaluation against gold senses requested, but the dataset has none".into(),
        ));
    }

    let words: Vec<(String, Vec<usize>)> = env
        .dataset
        .by_word()
        .into_iter()
        .map(|(w, idx)| (w.to_owned(), idx))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a thread pool: {e}")))?;
    let results: Vec<(String, Result<WordOutput>)> = pool.install(|| {
        words
            .par_iter()
            .map(|(word, idx)| (word.clone(), process_word(env, cfg, word, idx)))
            .collect()
    });

    let mut predictions = env.dataset.clone();
    for occ in &mut predictions.occurrences {
        occ.predict_sense_id = None;
    }
    let mut failures = Vec::new();
    let mut degenerate_words = Vec::new();
    let mut bayes_fallback_occurrences = 0;
    let mut scored: Vec<WordEval> = Vec::new();
    let mut max_ari_per_word: BTreeMap<String, MaxAriOutcome> = BTreeMap::new();
    let mut nc_rows: Vec<NcCounts> = Vec::new();
    let mut dump_rows: Vec<Option<RepresentativeDump>> =
        vec![None; env.dataset.occurrences.len()];

    for (word, result) in results {
        let out = match result {
            Ok(out) => out,
            Err(e) => {
                let cause = e.full_message();
                log::warn!("word {word:?} failed: {cause}");
                failures.push(WordFailure { word, error: cause });
                continue;
            }
        };
        for (local, &occ_i) in out.occ_indices.iter().enumerate() {
            predictions.occurrences[occ_i].predict_sense_id = Some(out.labels[local].to_string());
        }
        if out.silhouette_degenerate {
            degenerate_words.push(word.clone());
        }
        bayes_fallback_occurrences += out.bayes_fallbacks;
        if let Some(sets) = &out.rep_sets {
            for (&occ_i, set) in out.occ_indices.iter().zip(sets) {
                let occ = &env.dataset.occurrences[occ_i];
                dump_rows[occ_i] = Some(RepresentativeDump {
                    context_id: occ.context_id.clone(),
                    word: occ.word.clone(),
                    bayes_fallback: set.bayes_fallback,
                    representatives: set
                        .representatives
                        .iter()
                        .map(|r| r.substitutes.clone())
                        .collect(),
                });
            }
        }
        if let Some(gold) = out.gold {
            if cfg.eval.gold {
                if let Some(outcome) = out.max_ari {
                    max_ari_per_word.insert(word.clone(), outcome);
                    nc_rows.push(NcCounts {
                        word: word.clone(),
                        predicted: num_distinct(&out.labels),
                        gold: num_distinct(&gold),
                        max_ari: outcome.num_clusters,
                    });
                }
                scored.push(WordEval {
                    word,
                    gold,
                    pred: out.labels,
                });
            }
        } else if cfg.eval.gold {
            log::warn!("word {word:?} has occurrences without gold senses; not scored");
        }
    }
    failures.sort_by(|a, b| a.word.cmp(&b.word));
    degenerate_words.sort();

    let scores = if cfg.eval.gold && !scored.is_empty() {
        Some(aggregate(&scored)?)
    } else {
        None
    };
    let baselines = match (&scores, cfg.eval.baselines) {
        (Some(_), true) => {
            let with = |kind: BaselineKind| -> Result<AggregateScores> {
                let evals: Vec<WordEval> = scored
                    .iter()
                    .map(|w| WordEval {
                        word: w.word.clone(),
                        gold: w.gold.clone(),
                        pred: baseline_labels(kind, w.gold.len()),
                    })
                    .collect();
                Ok(aggregate(&evals)?.aggregate)
            };
            Some(BaselineReport {
                one_cluster: with(BaselineKind::OneCluster)?,
                singletons: with(BaselineKind::Singletons)?,
            })
        }
        _ => None,
    };
    let max_ari = if max_ari_per_word.is_empty() {
        None
    } else {
        let total: usize = scored
            .iter()
            .filter(|w| max_ari_per_word.contains_key(&w.word))
            .map(|w| w.gold.len())
            .sum();
        let weighted: f64 = scored
            .iter()
            .filter_map(|w| max_ari_per_word.get(&w.word).map(|o| o.ari * w.gold.len() as f64))
            .sum();
        Some(MaxAriReport {
            per_word: max_ari_per_word,
            weighted_ari: weighted / total as f64,
        })
    };
    let nc_differences = if nc_rows.is_empty() {
        None
    } else {
        Some(nc_difference_report(&nc_rows)?)
    };

    let representatives = cfg.eval.dump_representatives.then(|| {
        dump_rows.into_iter().flatten().collect::<Vec<_>>()
    });

    Ok(RunOutcome {
        report: RunReport {
            config_hash: cfg.content_hash()?,
            selector: cfg.select.selector,
            combine_method: cfg.combine.method,
            num_words: words.len(),
            num_occurrences: env.dataset.occurrences.len(),
            failures,
            degenerate_words,
            bayes_fallback_occurrences,
            scores,
            baselines,
            max_ari,
            nc_differences,
        },
        predictions,
        representatives,
        artifacts: Vec::new(),
    })
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    dataset: String,
    num_words: usize,
    num_occurrences: usize,
    partial: bool,
    artifacts: &'a [String],
    config: &'a str,
}

/// Write the artifacts for a finished run and record them in the outcome.
fn write_artifacts(outcome: &mut RunOutcome, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let dir = &cfg.output_dir;
    let mut names: Vec<String> = Vec::new();

    write_text(dir, "predictions.tsv", &format_dataset(&outcome.predictions))?;
    names.push("predictions.tsv".into());

    let mut report_json = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| Error::Domain(format!("cannot serialize the run report: {e}")))?;
    report_json.push('\n');
    write_text(dir, "eval.json", &report_json)?;
    names.push("eval.json".into());

    if let Some(scores) = &outcome.report.scores {
        write_text(dir, "eval.csv", &metrics::eval_report_csv(scores))?;
        names.push("eval.csv".into());
    }
    if let Some(nc) = &outcome.report.nc_differences {
        write_text(dir, "nc_differences.csv", &nc_difference_csv(nc))?;
        names.push("nc_differences.csv".into());
    }
    if let Some(rows) = &outcome.representatives {
        let mut jsonl = String::new();
        for row in rows {
            jsonl.push_str(&serde_json::to_string(row).map_err(|e| {
                Error::Domain(format!("cannot serialize a representative dump: {e}"))
            })?);
            jsonl.push('\n');
        }
        write_text(dir, "representatives.jsonl", &jsonl)?;
        names.push("representatives.jsonl".into());
    }

    let config_toml = cfg.to_toml_string()?;
    let manifest = Manifest {
        config_hash: &outcome.report.config_hash,
        dataset: cfg.dataset.display().to_string(),
        num_words: outcome.report.num_words,
        num_occurrences: outcome.report.num_occurrences,
        partial: outcome.report.is_partial(),
        artifacts: &names,
        config: &config_toml,
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Domain(format!("cannot serialize the manifest: {e}")))?;
    manifest_json.push('\n');
    write_text(dir, "manifest.json", &manifest_json)?;
    names.push("manifest.json".into());

    outcome.artifacts = names;
    Ok(())
}

/// Prepare, execute, and write artifacts for one configuration.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    let env = PipelineEnv::prepare(cfg)?;
    let mut outcome = execute(&env, cfg)?;
    write_artifacts(&mut outcome, cfg)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub settings: BTreeMap<String, String>,
    /// Value of the sweep objective; absent when no word could be scored.
    pub objective: Option<f64>,
    pub scores: Option<AggregateScores>,
    pub max_ari: Option<f64>,
    pub failed_words: usize,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub objective: GridObjective,
    /// Rows sorted best first.
    pub rows: Vec<GridRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub report: GridReport,
    pub best: RunConfig,
    pub artifacts: Vec<String>,
}

fn grid_csv(report: &GridReport) -> String {
    let axes: Vec<&String> = report
        .rows
        .first()
        .map(|r| r.settings.keys().collect())
        .unwrap_or_default();
    let mut header: Vec<String> = axes.iter().map(|a| a.to_string()).collect();
    header.extend(
        ["objective", "ari", "v_measure", "f_score", "avg", "max_ari", "failed_words"]
            .map(String::from),
    );
    let mut out = csv_row(&header);
    for row in &report.rows {
        let mut fields: Vec<String> = axes
            .iter()
            .map(|a| row.settings.get(*a).cloned().unwrap_or_default())
            .collect();
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        fields.push(opt(row.objective));
        fields.push(opt(row.scores.as_ref().map(|s| s.ari)));
        fields.push(opt(row.scores.as_ref().map(|s| s.v_measure)));
        fields.push(opt(row.scores.as_ref().map(|s| s.f_score)));
        fields.push(opt(row.scores.as_ref().map(|s| s.avg)));
        fields.push(opt(row.max_ari));
        fields.push(row.failed_words.to_string());
        out.push_str(&csv_row(&fields));
    }
    out
}

/// Sweep the grid against a shared environment and keep every point's
/// aggregate scores. Points run sequentially; each one parallelizes over
/// words. The best configuration is exported as TOML.
pub fn grid_search(base: &RunConfig, spec: &GridSpec) -> Result<GridOutcome> {
    if !base.eval.gold {
        return Err(Error::Config("a grid sweep needs eval.gold to rank points".into()));
    }
    let points = spec.points(base)?;
    let env = PipelineEnv::prepare(base)?;

    let mut rows = Vec::with_capacity(points.len());
    for point in points {
        let outcome = execute(&env, &point.config).map_err(|e| {
            Error::Config(format!(
                "grid point {:?} failed: {}",
                point.settings,
                e.full_message()
            ))
        })?;
        let scores = outcome.report.scores.map(|r| r.aggregate);
        let max_ari = outcome.report.max_ari.map(|m| m.weighted_ari);
        let objective = match spec.objective {
            GridObjective::Ari => scores.as_ref().map(|s| s.ari),
            GridObjective::MaxAri => max_ari,
        };
        rows.push(GridRow {
            settings: point.settings,
            objective,
            scores,
            max_ari,
            failed_words: outcome.report.failures.len(),
            config: point.config,
        });
    }
    rows.sort_by(|a, b| match (a.objective, b.objective) {
        (Some(x), Some(y)) => y
            .total_cmp(&x)
            .then_with(|| format!("{:?}", a.settings).cmp(&format!("{:?}", b.settings))),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => format!("{:?}", a.settings).cmp(&format!("{:?}", b.settings)),
    });
    let best_row = rows
        .iter()
        .find(|r| r.objective.is_some())
        .ok_or_else(|| Error::Domain("no grid point produced a score".into()))?;
    let best = best_row.config.clone();

    let report = GridReport {
        objective: spec.objective,
        rows,
    };
    std::fs::create_dir_all(&base.output_dir).map_err(|e| Error::io(&base.output_dir, e))?;
    let dir = &base.output_dir;
    write_text(dir, "grid.csv", &grid_csv(&report))?;
    let mut grid_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Domain(format!("cannot serialize the grid report: {e}")))?;
    grid_json.push('\n');
    write_text(dir, "grid.json", &grid_json)?;
    write_text(dir, "best_config.toml", &best.to_toml_string()?)?;

    Ok(GridOutcome {
        report,
        best,
        artifacts: vec!["grid.csv".into(), "grid.json".into(), "best_config.toml".into()],
    })
}

/// Score a submission's predictions against a reference with gold senses.
/// The two datasets must cover exactly the same occurrences.
pub fn score_submission(reference: &Dataset, submission: &Dataset) -> Result<EvalReport> {
    if reference.occurrences.len() != submission.occurrences.len() {
        return Err(Error::SubmissionMismatch(format!(
            "{} reference occurrences vs {} submitted",
            reference.occurrences.len(),
            submission.occurrences.len()
        )));
    }
    let by_id: HashMap<&str, &crate::dataset::Occurrence> = submission
        .occurrences
        .iter()
        .map(|o| (o.context_id.as_str(), o))
        .collect();

    let mut evals = Vec::new();
    for (word, indices) in reference.by_word() {
        let mut gold_ids: HashMap<&str, usize> = HashMap::new();
        let mut pred_ids: HashMap<&str, usize> = HashMap::new();
        let mut gold = Vec::with_capacity(indices.len());
        let mut pred = Vec::with_capacity(indices.len());
        for &i in &indices {
            let occ = &reference.occurrences[i];
            let sub = by_id.get(occ.context_id.as_str()).ok_or_else(|| {
                Error::SubmissionMismatch(format!("occurrence {} is missing", occ.context_id))
            })?;
            let g = occ.gold_sense_id.as_deref().ok_or_else(|| {
                Error::Domain(format!("occurrence {} has no gold sense", occ.context_id))
            })?;
            let p = sub.predict_sense_id.as_deref().ok_or_else(|| {
                Error::SubmissionMismatch(format!(
                    "occurrence {} has no prediction",
                    occ.context_id
                ))
            })?;
            let next = gold_ids.len();
            gold.push(*gold_ids.entry(g).or_insert(next));
            let next = pred_ids.len();
            pred.push(*pred_ids.entry(p).or_insert(next));
        }
        evals.push(WordEval {
            word: word.to_owned(),
            gold,
            pred,
        });
    }
    aggregate(&evals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub first: EvalReport,
    pub second: EvalReport,
    /// Agreement between the two submissions per word.
    pub per_word_agreement: BTreeMap<String, f64>,
    /// Example-weighted mean agreement.
    pub weighted_agreement: f64,
}

/// Score two submissions against the same reference and against each
/// other.
pub fn compare_submissions(
    reference: &Dataset,
    first: &Dataset,
    second: &Dataset,
) -> Result<ComparisonReport> {
    let first_report = score_submission(reference, first)?;
    let second_report = score_submission(reference, second)?;

    let label_map = |ds: &Dataset| -> HashMap<String, String> {
        ds.occurrences
            .iter()
            .filter_map(|o| {
                o.predict_sense_id
                    .as_ref()
                    .map(|p| (o.context_id.clone(), p.clone()))
            })
            .collect()
    };
    let first_labels = label_map(first);
    let second_labels = label_map(second);

    let mut per_word_agreement = BTreeMap::new();
    let mut weighted = 0.0;
    let mut total = 0usize;
    for (word, indices) in reference.by_word() {
        let mut a_ids: HashMap<&str, usize> = HashMap::new();
        let mut b_ids: HashMap<&str, usize> = HashMap::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for &i in &indices {
            let id = &reference.occurrences[i].context_id;
            let (Some(la), Some(lb)) = (first_labels.get(id), second_labels.get(id)) else {
                return Err(Error::SubmissionMismatch(format!(
                    "occurrence {id} has no prediction in one submission"
                )));
            };
            let next = a_ids.len();
            a.push(*a_ids.entry(la).or_insert(next));
            let next = b_ids.len();
            b.push(*b_ids.entry(lb).or_insert(next));
        }
        let agreement = metrics::ari(&a, &b)?;
        weighted += agreement * indices.len() as f64;
        total += indices.len();
        per_word_agreement.insert(word.to_owned(), agreement);
    }

    Ok(ComparisonReport {
        first: first_report,
        second: second_report,
        per_word_agreement,
        weighted_agreement: weighted / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{GridSpec, SelectConfig};
    use crate::synthetic::{generate, SyntheticSpec};

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_pseudowords: 2,
            senses_per_word: 2,
            examples_per_sense: 5,
            context_tokens_per_sense: 3,
            sibling_tokens_per_sense: 3,
            sentences_per_sibling: 12,
            glue_tokens: 10,
            glue_sentences: 20,
            slot_noise: 0.1,
            shared_context_fraction: 0.0,
            seed: 3,
        }
    }

    fn write_fixture(dir: &Path) -> RunConfig {
        let data = generate(&small_spec()).unwrap();
        std::fs::write(dir.join("corpus.txt"), &data.corpus).unwrap();
        crate::dataset::write_dataset(dir.join("dataset.tsv"), &data.dataset).unwrap();
        RunConfig::from_toml_str(&format!(
            r#"
                dataset = "{0}/dataset.tsv"
                output_dir = "{0}/out"
                seed = 11

                [source]
                kind = "toy-lm"
                corpus = "{0}/corpus.txt"
                order = 3
                smoothing_k = 0.05
                top_k = 12

                [combine]
                method = "bayes-comb"
                top_k = 12

                [eval]
                gold = true
                max_ari = true
                baselines = true
                dump_representatives = true
            "#,
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn end_to_end_run_writes_consistent_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_fixture(tmp.path());
        let outcome = run_pipeline(&cfg).unwrap();

        assert!(!outcome.report.is_partial());
        assert_eq!(outcome.report.num_words, 2);
        assert!(outcome.report.scores.is_some());
        assert!(outcome.report.max_ari.is_some());
        assert!(outcome.report.baselines.is_some());
        assert!(outcome.report.nc_differences.is_some());
        assert!(outcome
            .predictions
            .occurrences
            .iter()
            .all(|o| o.predict_sense_id.is_some()));
        for name in [
            "predictions.tsv",
            "eval.json",
            "eval.csv",
            "nc_differences.csv",
            "representatives.jsonl",
            "manifest.json",
        ] {
            assert!(cfg.output_dir.join(name).exists(), "{name} missing");
            assert!(outcome.artifacts.contains(&name.to_string()), "{name} unlisted");
        }
        let baselines = outcome.report.baselines.unwrap();
        assert_eq!(baselines.one_cluster.ari, 0.0);
        assert_eq!(baselines.singletons.ari, 0.0);
        let max_ari = outcome.report.max_ari.unwrap();
        let scores = outcome.report.scores.unwrap();
        assert!(max_ari.weighted_ari >= scores.aggregate.ari - 1e-12);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_fixture(tmp.path());
        let first = run_pipeline(&cfg).unwrap();
        let read = |name: &str| std::fs::read(cfg.output_dir.join(name)).unwrap();
        let snapshots: Vec<(String, Vec<u8>)> = first
            .artifacts
            .iter()
            .map(|n| (n.clone(), read(n)))
            .collect();
        run_pipeline(&cfg).unwrap();
        for (name, before) in snapshots {
            assert_eq!(read(&name), before, "{name} changed between identical runs");
        }
    }

    #[test]
    fn missing_distributions_fail_only_that_word() {
        let tmp = tempfile::tempdir().unwrap();
        let data = generate(&small_spec()).unwrap();
        crate::dataset::write_dataset(tmp.path().join("dataset.tsv"), &data.dataset).unwrap();

        // Distributions for pw_0 only; pw_1 must fail and stay unpredicted.
        let mut dists = Vec::new();
        for occ in &data.dataset.occurrences {
            if occ.word != "pw_0" {
                continue;
            }
            for direction in [Direction::Fwd, Direction::Bwd] {
                let mut d = empty_distribution(&occ.context_id, &occ.word, direction);
                d.entries = vec![
                    (format!("sub_{}", occ.gold_sense_id.as_deref().unwrap()), 0.6, 1),
                    ("shared".into(), 0.3, 2),
                ];
                dists.push(d);
            }
        }
        crate::substitutes::write_distribution_file(tmp.path().join("dists.jsonl"), &dists)
            .unwrap();

        let cfg = RunConfig::from_toml_str(&format!(
            r#"
                dataset = "{0}/dataset.tsv"
                output_dir = "{0}/out"

                [source]
                kind = "file"
                path = "{0}/dists.jsonl"
            "#,
            tmp.path().display()
        ))
        .unwrap();
        let outcome = run_pipeline(&cfg).unwrap();
        assert!(outcome.report.is_partial());
        assert_eq!(outcome.report.failures.len(), 1);
        assert_eq!(outcome.report.failures[0].word, "pw_1");
        assert!(outcome.report.failures[0].error.contains("substitutes"));
        for occ in &outcome.predictions.occurrences {
            assert_eq!(occ.predict_sense_id.is_some(), occ.word == "pw_0");
        }
        // Scored words only.
        let scores = outcome.report.scores.unwrap();
        assert_eq!(scores.per_word.len(), 1);
        assert!(scores.per_word.contains_key("pw_0"));
    }

    #[test]
    fn previous_count_selectors_reuse_submission_counts() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = write_fixture(tmp.path());
        let first = run_pipeline(&cfg).unwrap();
        let prev_counts =
            submission_cluster_counts(&first.predictions).unwrap();

        cfg.select = SelectConfig {
            selector: SelectorKind::Prevnc2,
            prev_submission: Some(cfg.output_dir.join("predictions.tsv")),
            ..SelectConfig::default()
        };
        cfg.output_dir = tmp.path().join("out2");
        let second = run_pipeline(&cfg).unwrap();
        assert!(!second.report.is_partial());
        let new_counts = submission_cluster_counts(&second.predictions).unwrap();
        assert_eq!(new_counts, prev_counts);
    }

    #[test]
    fn grid_sweep_ranks_points_and_exports_the_best() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write_fixture(tmp.path());
        let spec = GridSpec {
            method: Some(vec![CombineMethod::Avg, CombineMethod::BayesComb]),
            tfidf: Some(vec![false, true]),
            ..GridSpec::default()
        };
        let outcome = grid_search(&cfg, &spec).unwrap();
        assert_eq!(outcome.report.rows.len(), 4);
        let objectives: Vec<f64> = outcome
            .report
            .rows
            .iter()
            .map(|r| r.objective.unwrap())
            .collect();
        assert!(objectives.windows(2).all(|w| w[0] >= w[1]), "{objectives:?}");
        assert!(cfg.output_dir.join("grid.csv").exists());
        assert!(cfg.output_dir.join("grid.json").exists());
        let best = RunConfig::load(&cfg.output_dir.join("best_config.toml")).unwrap();
        assert_eq!(best.combine.method, outcome.best.combine.method);
    }

    #[test]
    fn submissions_are_scored_and_compared() {
        let data = generate(&small_spec()).unwrap();
        let mut perfect = data.dataset.clone();
        for occ in &mut perfect.occurrences {
            occ.predict_sense_id = occ.gold_sense_id.clone();
        }
        let report = score_submission(&data.dataset, &perfect).unwrap();
        assert_eq!(report.aggregate.ari, 1.0);

        let mut lumped = data.dataset.clone();
        for occ in &mut lumped.occurrences {
            occ.predict_sense_id = Some("all".into());
        }
        let comparison = compare_submissions(&data.dataset, &perfect, &lumped).unwrap();
        assert_eq!(comparison.first.aggregate.ari, 1.0);
        assert_eq!(comparison.second.aggregate.ari, 0.0);
        assert_eq!(comparison.weighted_agreement, 0.0);

        let mut missing = perfect.clone();
        missing.occurrences.pop();
        assert!(matches!(
            score_submission(&data.dataset, &missing),
            Err(Error::SubmissionMismatch(_))
        ));
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "ctx.1"), derive_seed(7, "ctx.1"));
        assert_ne!(derive_seed(7, "ctx.1"), derive_seed(8, "ctx.1"));
        assert_ne!(derive_seed(7, "ctx.1"), derive_seed(7, "ctx.2"));
    }
}
