//! Command-line front end for the sense induction pipeline: dataset
//! validation, configured runs, grid sweeps, submission comparison,
//! synthetic data generation, and sense profiling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use log::warn;

use wsi_core::analysis::{
    build_profiles, discriminative_substitutes, merge_profiles, SenseProfile, DEFAULT_MIN_COUNT,
};
use wsi_core::cluster::SelectorKind;
use wsi_core::combine::{CombineConfig, Representative, RepresentativeSet};
use wsi_core::config::{EvalConfig, GridSpec, RunConfig, SelectConfig, SourceConfig};
use wsi_core::dataset::{ingest_dataset, write_dataset, Dataset};
use wsi_core::metrics::{csv_row, fmt_f64, AggregateScores};
use wsi_core::pipeline::{
    compare_submissions, grid_search, run_pipeline, RepresentativeDump, RunReport,
};
use wsi_core::synthetic::{generate, SyntheticSpec};
use wsi_core::vectorize::{Lemmatizer, VectorizeConfig};

#[derive(Parser)]
#[command(
    name = "wsi",
    version,
    about = "Word sense induction from combined substitute distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset file and print its summary counts.
    IngestCheck {
        /// Dataset TSV with one target occurrence per row.
        dataset: PathBuf,
    },
    /// Execute one configured run and write its artifacts.
    Run {
        /// Run configuration TOML.
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate every point of a hyperparameter grid.
    Grid {
        /// Base run configuration TOML the axes are applied to.
        #[arg(long)]
        config: PathBuf,
        /// Grid axes TOML.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Score two submissions against a gold dataset and each other.
    Compare {
        /// First submission TSV with predictions filled in.
        #[arg(long)]
        pred_a: PathBuf,
        /// Second submission TSV with predictions filled in.
        #[arg(long)]
        pred_b: PathBuf,
        /// Reference dataset TSV with gold senses.
        #[arg(long)]
        gold: PathBuf,
        /// Rerun this configuration with the previous-count selectors
        /// constrained to pred-b's per-word cluster counts.
        #[arg(long)]
        rerun_config: Option<PathBuf>,
        /// Directory for comparison.json; printed to stdout when absent.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a pseudoword corpus, dataset and starter config.
    MakeSynthetic {
        /// Output directory for corpus.txt, dataset.tsv and run.toml.
        #[arg(long)]
        out_dir: PathBuf,
        /// Pseudowords to conflate.
        #[arg(long)]
        pseudowords: Option<usize>,
        /// Senses per pseudoword.
        #[arg(long)]
        senses: Option<usize>,
        /// Labeled examples per sense.
        #[arg(long)]
        examples_per_sense: Option<usize>,
        /// Fraction of sense sentences whose slot holds a filler token.
        #[arg(long)]
        slot_noise: Option<f64>,
        /// Fraction of sentences whose left context is shared across
        /// senses, blinding forward-only predictions.
        #[arg(long)]
        shared_context_fraction: Option<f64>,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Profile induced senses and rank their discriminative substitutes.
    Analyze {
        /// Predictions TSV from a run.
        #[arg(long)]
        predictions: PathBuf,
        /// representatives.jsonl from the same run.
        #[arg(long)]
        representatives: PathBuf,
        /// Output directory for discriminative.csv and profiles.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Profile gold senses instead of predicted ones.
        #[arg(long)]
        use_gold: bool,
        /// Keep substitutes generated at least this often for one sense.
        #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
        min_count: u64,
        /// Keep only the strongest N substitutes per sense.
        #[arg(long)]
        top_n: Option<usize>,
        /// Token TAB lemma dictionary applied to substitutes.
        #[arg(long)]
        lemmas: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::IngestCheck { dataset } => ingest_check(&dataset),
        Command::Run { config } => run_cmd(&config),
        Command::Grid { config, grid } => grid_cmd(&config, &grid),
        Command::Compare {
            pred_a,
            pred_b,
            gold,
            rerun_config,
            out_dir,
        } => compare_cmd(&pred_a, &pred_b, &gold, rerun_config.as_deref(), out_dir.as_deref()),
        Command::MakeSynthetic {
            out_dir,
            pseudowords,
            senses,
            examples_per_sense,
            slot_noise,
            shared_context_fraction,
            seed,
        } => make_synthetic(
            &out_dir,
            pseudowords,
            senses,
            examples_per_sense,
            slot_noise,
            shared_context_fraction,
            seed,
        ),
        Command::Analyze {
            predictions,
            representatives,
            out_dir,
            use_gold,
            min_count,
            top_n,
            lemmas,
        } => analyze(
            &predictions,
            &representatives,
            &out_dir,
            use_gold,
            min_count,
            top_n,
            lemmas.as_deref(),
        ),
    }
}

fn ingest_check(path: &Path) -> Result<ExitCode> {
    let ds = ingest_dataset(path)?;
    let by_word = ds.by_word();
    println!("dataset: {}", path.display());
    println!("examples: {}", ds.occurrences.len());
    println!("words: {}", by_word.len());
    let with_gold = ds
        .occurrences
        .iter()
        .filter(|o| o.gold_sense_id.is_some())
        .count();
    let with_pred = ds
        .occurrences
        .iter()
        .filter(|o| o.predict_sense_id.is_some())
        .count();
    println!("examples with gold senses: {with_gold}");
    println!("examples with predictions: {with_pred}");
    if with_gold > 0 {
        let mut labeled_words = 0usize;
        let mut senses_total = 0usize;
        for indices in by_word.values() {
            let senses: BTreeSet<&str> = indices
                .iter()
                .filter_map(|&i| ds.occurrences[i].gold_sense_id.as_deref())
                .collect();
            if !senses.is_empty() {
                labeled_words += 1;
                senses_total += senses.len();
            }
        }
        println!(
            "mean gold senses per labeled word: {:.2}",
            senses_total as f64 / labeled_words as f64
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_for(report: &RunReport) -> ExitCode {
    if report.is_partial() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn print_aggregate(prefix: &str, a: &AggregateScores) {
    println!(
        "{prefix}ari {}  v-measure {}  f-score {}  avg {}",
        fmt_f64(a.ari),
        fmt_f64(a.v_measure),
        fmt_f64(a.f_score),
        fmt_f64(a.avg)
    );
    println!(
        "{prefix}clusters: predicted {:.2}  gold {:.2}  mse {:.4}",
        a.mean_pred_num_clusters, a.mean_gold_num_clusters, a.mse_num_clusters
    );
}

fn print_report(report: &RunReport) {
    println!("config: {}", report.config_hash);
    println!(
        "selector: {}  combine: {}",
        report.selector, report.combine_method
    );
    println!(
        "words: {}  examples: {}",
        report.num_words, report.num_occurrences
    );
    if !report.degenerate_words.is_empty() {
        println!("degenerate words: {}", report.degenerate_words.len());
    }
    if report.bayes_fallback_occurrences > 0 {
        println!(
            "bayes fallback occurrences: {}",
            report.bayes_fallback_occurrences
        );
    }
    if let Some(scores) = &report.scores {
        print_aggregate("", &scores.aggregate);
    }
    if let Some(m) = &report.max_ari {
        println!("max-ari (weighted): {}", fmt_f64(m.weighted_ari));
    }
    if let Some(b) = &report.baselines {
        println!(
            "baselines: one-cluster ari {}  singletons ari {}",
            fmt_f64(b.one_cluster.ari),
            fmt_f64(b.singletons.ari)
        );
    }
    for f in &report.failures {
        warn!("word {} failed: {}", f.word, f.error);
    }
}

fn run_cmd(config: &Path) -> Result<ExitCode> {
    let cfg = RunConfig::load(config)?;
    let outcome = run_pipeline(&cfg)?;
    print_report(&outcome.report);
    println!(
        "artifacts: {} in {}",
        outcome.artifacts.join(" "),
        cfg.output_dir.display()
    );
    Ok(exit_for(&outcome.report))
}

fn grid_cmd(config: &Path, grid: &Path) -> Result<ExitCode> {
    let base = RunConfig::load(config)?;
    let spec = GridSpec::load(grid)?;
    let outcome = grid_search(&base, &spec)?;
    let rows = &outcome.report.rows;
    println!("objective: {}", outcome.report.objective);
    println!("points: {}", rows.len());
    for (i, row) in rows.iter().take(10).enumerate() {
        let settings: Vec<String> = row
            .settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        let objective = row
            .objective
            .map(fmt_f64)
            .unwrap_or_else(|| "failed".into());
        println!("{:>3}. {}  [{}]", i + 1, objective, settings.join(" "));
    }
    println!(
        "artifacts: {} in {}",
        outcome.artifacts.join(" "),
        base.output_dir.display()
    );
    let degraded = rows
        .iter()
        .any(|r| r.failed_words > 0 || r.objective.is_none());
    Ok(if degraded {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn compare_cmd(
    pred_a: &Path,
    pred_b: &Path,
    gold: &Path,
    rerun_config: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<ExitCode> {
    let reference = ingest_dataset(gold).context("reading the gold labels")?;
    let first = ingest_dataset(pred_a).context("reading the first submission")?;
    let second = ingest_dataset(pred_b).context("reading the second submission")?;
    let report = compare_submissions(&reference, &first, &second)?;

    println!("first: {}", pred_a.display());
    print_aggregate("  ", &report.first.aggregate);
    println!("second: {}", pred_b.display());
    print_aggregate("  ", &report.second.aggregate);
    println!(
        "agreement between submissions (weighted ari): {}",
        fmt_f64(report.weighted_agreement)
    );
    println!("{:<24} {:>10} {:>10} {:>10}", "word", "ari-a", "ari-b", "agree");
    for (word, a) in &report.first.per_word {
        let b = &report.second.per_word[word];
        let agree = report.per_word_agreement[word];
        println!(
            "{:<24} {:>10.4} {:>10.4} {:>10.4}",
            word, a.ari, b.ari, agree
        );
    }

    let mut exit = ExitCode::SUCCESS;
    if let Some(cfg_path) = rerun_config {
        let base = RunConfig::load(cfg_path)?;
        for (name, selector) in [
            ("prevnc", SelectorKind::Prevnc),
            ("prevnc2", SelectorKind::Prevnc2),
        ] {
            let mut cfg = base.clone();
            cfg.select.selector = selector;
            cfg.select.prev_submission = Some(pred_b.to_path_buf());
            cfg.output_dir = base.output_dir.join(name);
            let outcome = run_pipeline(&cfg)
                .with_context(|| format!("rerunning the engine with the {name} selector"))?;
            println!("{name} rerun:");
            print_report(&outcome.report);
            if outcome.report.is_partial() {
                exit = ExitCode::from(2);
            }
        }
    }

    let json = serde_json::to_string_pretty(&report)? + "\n";
    match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("comparison.json");
            fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(exit)
}

#[allow(clippy::too_many_arguments)]
fn make_synthetic(
    out_dir: &Path,
    pseudowords: Option<usize>,
    senses: Option<usize>,
    examples_per_sense: Option<usize>,
    slot_noise: Option<f64>,
    shared_context_fraction: Option<f64>,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut spec = SyntheticSpec::default();
    if let Some(v) = pseudowords {
        spec.num_pseudowords = v;
    }
    if let Some(v) = senses {
        spec.senses_per_word = v;
    }
    if let Some(v) = examples_per_sense {
        spec.examples_per_sense = v;
    }
    if let Some(v) = slot_noise {
        spec.slot_noise = v;
    }
    if let Some(v) = shared_context_fraction {
        spec.shared_context_fraction = v;
    }
    if let Some(v) = seed {
        spec.seed = v;
    }
    let data = generate(&spec)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let corpus_path = out_dir.join("corpus.txt");
    fs::write(&corpus_path, &data.corpus)
        .with_context(|| format!("writing {}", corpus_path.display()))?;
    let dataset_path = out_dir.join("dataset.tsv");
    write_dataset(&dataset_path, &data.dataset)?;

    let cfg = RunConfig {
        dataset: dataset_path.clone(),
        output_dir: out_dir.join("run"),
        seed: spec.seed,
        workers: 0,
        source: SourceConfig::ToyLm {
            corpus: corpus_path.clone(),
            order: 3,
            smoothing_k: 0.1,
            top_k: 12,
            use_pattern: false,
            pattern: "and".into(),
        },
        combine: CombineConfig::default(),
        vectorize: VectorizeConfig {
            tfidf: true,
            ..Default::default()
        },
        select: SelectConfig::default(),
        eval: EvalConfig {
            gold: true,
            max_ari: true,
            baselines: true,
            dump_representatives: true,
        },
    };
    cfg.validate()?;
    let config_path = out_dir.join("run.toml");
    fs::write(&config_path, cfg.to_toml_string()?)
        .with_context(|| format!("writing {}", config_path.display()))?;

    println!("wrote {}", corpus_path.display());
    println!(
        "wrote {} ({} examples, {} words)",
        dataset_path.display(),
        data.dataset.occurrences.len(),
        data.dataset.by_word().len()
    );
    println!("wrote {}", config_path.display());
    Ok(ExitCode::SUCCESS)
}

fn analyze(
    predictions: &Path,
    representatives: &Path,
    out_dir: &Path,
    use_gold: bool,
    min_count: u64,
    top_n: Option<usize>,
    lemmas: Option<&Path>,
) -> Result<ExitCode> {
    let ds = ingest_dataset(predictions)
        .with_context(|| format!("ingesting {}", predictions.display()))?;
    let text = fs::read_to_string(representatives)
        .with_context(|| format!("reading {}", representatives.display()))?;
    let mut reps: BTreeMap<String, RepresentativeDump> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dump: RepresentativeDump = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", representatives.display(), idx + 1))?;
        reps.insert(dump.context_id.clone(), dump);
    }
    let lemmatizer = match lemmas {
        Some(p) => Lemmatizer::from_tsv(p)?,
        None => Lemmatizer::identity(),
    };

    let mut csv = csv_row(&[
        "word".into(),
        "sense".into(),
        "lemma".into(),
        "freq1".into(),
        "freq2".into(),
        "ratio".into(),
    ]);
    let mut all_profiles: Vec<SenseProfile> = Vec::new();
    let mut profiled = 0usize;
    for (word, indices) in ds.by_word() {
        match analyze_word(&ds, word, &indices, &reps, &lemmatizer, use_gold, min_count, top_n) {
            Ok((profiles, rows)) => {
                profiled += 1;
                all_profiles.extend(profiles);
                csv.push_str(&rows);
            }
            Err(e) => warn!("skipping {word}: {e:#}"),
        }
    }
    if profiled == 0 {
        bail!("no word could be profiled");
    }

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join("discriminative.csv");
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    let profiles_path = out_dir.join("profiles.json");
    fs::write(
        &profiles_path,
        serde_json::to_string_pretty(&all_profiles)? + "\n",
    )
    .with_context(|| format!("writing {}", profiles_path.display()))?;

    println!("profiled {profiled} words");
    println!("wrote {}", csv_path.display());
    println!("wrote {}", profiles_path.display());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn analyze_word(
    ds: &Dataset,
    word: &str,
    indices: &[usize],
    reps: &BTreeMap<String, RepresentativeDump>,
    lemmatizer: &Lemmatizer,
    use_gold: bool,
    min_count: u64,
    top_n: Option<usize>,
) -> Result<(Vec<SenseProfile>, String)> {
    let mut names: Vec<String> = Vec::new();
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut labels = Vec::with_capacity(indices.len());
    let mut rep_sets = Vec::with_capacity(indices.len());
    for &i in indices {
        let occ = &ds.occurrences[i];
        let label = if use_gold {
            occ.gold_sense_id.as_deref()
        } else {
            occ.predict_sense_id.as_deref()
        };
        let Some(label) = label else {
            bail!(
                "occurrence {} has no {} sense",
                occ.context_id,
                if use_gold { "gold" } else { "predicted" }
            );
        };
        let next = ids.len();
        let id = *ids.entry(label).or_insert_with(|| {
            names.push(label.to_owned());
            next
        });
        labels.push(id);

        let dump = reps
            .get(occ.context_id.as_str())
            .ok_or_else(|| anyhow!("no representatives for occurrence {}", occ.context_id))?;
        if dump.word != occ.word {
            bail!(
                "representatives for occurrence {} belong to {:?}, not {:?}",
                occ.context_id,
                dump.word,
                occ.word
            );
        }
        rep_sets.push(RepresentativeSet {
            representatives: dump
                .representatives
                .iter()
                .map(|subs| Representative {
                    context_id: dump.context_id.clone(),
                    substitutes: subs
                        .iter()
                        .map(|t| lemmatizer.lemmatize(t).to_owned())
                        .collect(),
                })
                .collect(),
            bayes_fallback: dump.bayes_fallback,
        });
    }

    let profiles = build_profiles(word, &labels, &rep_sets)?;
    let mut rows = String::new();
    if profiles.len() >= 2 {
        for (i, profile) in profiles.iter().enumerate() {
            let others: Vec<&SenseProfile> = profiles
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| q)
                .collect();
            // The pooled contrast profile needs a sense id of its own;
            // canonical ids start at 0, so the max is never taken.
            let rest = merge_profiles(usize::MAX, &others)?;
            for d in discriminative_substitutes(profile, &rest, min_count, top_n)? {
                rows.push_str(&csv_row(&[
                    word.to_owned(),
                    names[profile.sense_id].clone(),
                    d.token,
                    fmt_f64(d.freq_first),
                    fmt_f64(d.freq_second),
                    fmt_f64(d.ratio),
                ]));
            }
        }
    }
    Ok((profiles, rows))
}
