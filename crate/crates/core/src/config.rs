//! Run configuration, loaded from TOML.
//!
//! One [`RunConfig`] describes a full pass over a dataset: where the
//! substitute distributions come from, how the two directions are
//! combined, how representatives become vectors, how cluster counts are
//! chosen, and which evaluation artifacts to produce. [`GridSpec`] turns
//! a base config plus per-axis value lists into a cartesian sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{NcBounds, SelectorKind};
use crate::combine::{CombineConfig, CombineMethod};
use crate::error::{Error, Result};
use crate::vectorize::VectorizeConfig;

fn default_order() -> usize {
    3
}

fn default_smoothing_k() -> f64 {
    1.0
}

fn default_source_top_k() -> usize {
    50
}

fn default_pattern() -> String {
    "and".into()
}

/// Where per-occurrence substitute distributions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    /// Train a count-based model on a plain-text corpus and predict
    /// substitutes for every occurrence.
    ToyLm {
        corpus: PathBuf,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_smoothing_k")]
        smoothing_k: f64,
        /// Tokens kept per direction and occurrence; 0 keeps the full
        /// vocabulary.
        #[serde(default = "default_source_top_k")]
        top_k: usize,
        /// Splice the target and a conjunctive pattern into the query so
        /// the model predicts a coordinate of the target instead of an
        /// arbitrary continuation.
        #[serde(default)]
        use_pattern: bool,
        #[serde(default = "default_pattern")]
        pattern: String,
    },
    /// Read precomputed distributions (both directions) from a JSONL file.
    File { path: PathBuf },
}

fn default_true() -> bool {
    true
}

fn default_nc_min() -> usize {
    2
}

fn default_nc_max() -> usize {
    12
}

fn default_selector() -> SelectorKind {
    SelectorKind::Silnc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    #[serde(default = "default_selector")]
    pub selector: SelectorKind,
    #[serde(default = "default_nc_min")]
    pub nc_min: usize,
    #[serde(default = "default_nc_max")]
    pub nc_max: usize,
    /// Required by the fixed-count selector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_nc: Option<usize>,
    /// Earlier predictions whose per-word cluster counts the previous
    /// -count selectors reuse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_submission: Option<PathBuf>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            selector: default_selector(),
            nc_min: default_nc_min(),
            nc_max: default_nc_max(),
            fixed_nc: None,
            prev_submission: None,
        }
    }
}

impl SelectConfig {
    pub fn bounds(&self) -> NcBounds {
        NcBounds {
            nc_min: self.nc_min,
            nc_max: self.nc_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Score predictions against the dataset's gold senses.
    #[serde(default = "default_true")]
    pub gold: bool,
    /// Also search the clustering grid for the best achievable agreement.
    #[serde(default)]
    pub max_ari: bool,
    /// Also score the trivial baselines.
    #[serde(default)]
    pub baselines: bool,
    /// Write every occurrence's representatives to a JSONL artifact.
    #[serde(default)]
    pub dump_representatives: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            gold: true,
            max_ari: false,
            baselines: false,
            dump_representatives: false,
        }
    }
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 lets the thread pool pick.
    #[serde(default)]
    pub workers: usize,
    pub source: SourceConfig,
    #[serde(default)]
    pub combine: CombineConfig,
    #[serde(default)]
    pub vectorize: VectorizeConfig,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("unserializable config: {e}")))
    }

    /// Hex digest of the canonical serialization, recorded in run
    /// manifests so artifacts can be traced back to their settings.
    pub fn content_hash(&self) -> Result<String> {
        let canonical = self.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        Ok(hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        match &self.source {
            SourceConfig::ToyLm {
                order,
                smoothing_k,
                use_pattern,
                pattern,
                ..
            } => {
                if *order < 2 {
                    return Err(Error::Config(format!("source order {order} must be >= 2")));
                }
                if !smoothing_k.is_finite() || *smoothing_k <= 0.0 {
                    return Err(Error::Config(format!(
                        "source smoothing_k {smoothing_k} must be positive and finite"
                    )));
                }
                if *use_pattern && pattern.trim().is_empty() {
                    return Err(Error::Config("empty source pattern".into()));
                }
            }
            SourceConfig::File { .. } => {}
        }
        self.combine.validate()?;
        self.select.bounds().validate()?;
        match self.select.selector {
            SelectorKind::Fixnc => {
                match self.select.fixed_nc {
                    None => {
                        return Err(Error::Config(
                            "the fixnc selector requires select.fixed_nc".into(),
                        ))
                    }
                    Some(0) => return Err(Error::Config("select.fixed_nc must be >= 1".into())),
                    Some(_) => {}
                }
            }
            SelectorKind::Prevnc | SelectorKind::Prevnc2 => {
                if self.select.prev_submission.is_none() {
                    return Err(Error::Config(format!(
                        "the {} selector requires select.prev_submission",
                        self.select.selector
                    )));
                }
            }
            SelectorKind::GoldOracle => {
                if !self.eval.gold {
                    return Err(Error::Config(
                        "the gold-oracle selector requires eval.gold".into(),
                    ));
                }
            }
            SelectorKind::Silnc => {}
        }
        if self.eval.max_ari && !self.eval.gold {
            return Err(Error::Config("eval.max_ari requires eval.gold".into()));
        }
        if self.eval.baselines && !self.eval.gold {
            return Err(Error::Config("eval.baselines requires eval.gold".into()));
        }
        Ok(())
    }
}

/// What a grid sweep tries to maximize.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridObjective {
    /// Agreement of the pipeline's own predictions.
    #[default]
    Ari,
    /// Best achievable agreement over the clustering grid.
    MaxAri,
}

impl std::fmt::Display for GridObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GridObjective::Ari => "ari",
            GridObjective::MaxAri => "max-ari",
        })
    }
}

/// Value lists for the swept axes; an omitted axis keeps the base
/// config's single value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub objective: GridObjective,
    pub method: Option<Vec<CombineMethod>>,
    pub top_k: Option<Vec<usize>>,
    pub num_representatives: Option<Vec<usize>>,
    pub sample_size: Option<Vec<usize>>,
    pub zipf_z: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub tfidf: Option<Vec<bool>>,
    pub exclude_target: Option<Vec<bool>>,
    pub selector: Option<Vec<SelectorKind>>,
}

/// One config in a sweep, with the swept settings spelled out for
/// reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub settings: BTreeMap<String, String>,
    pub config: RunConfig,
}

const MAX_GRID_POINTS: usize = 10_000;

impl GridSpec {
    pub fn from_toml_str(text: &str) -> Result<GridSpec> {
        let spec: GridSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid grid spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<GridSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GridSpec::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        fn non_empty<T>(name: &str, axis: &Option<Vec<T>>) -> Result<usize> {
            match axis {
                Some(v) if v.is_empty() => {
                    Err(Error::Config(format!("grid axis {name} has no values")))
                }
                Some(v) => Ok(v.len()),
                None => Ok(1),
            }
        }
        let total = non_empty("method", &self.method)?
            .saturating_mul(non_empty("top_k", &self.top_k)?)
            .saturating_mul(non_empty("num_representatives", &self.num_representatives)?)
            .saturating_mul(non_empty("sample_size", &self.sample_size)?)
            .saturating_mul(non_empty("zipf_z", &self.zipf_z)?)
            .saturating_mul(non_empty("beta", &self.beta)?)
            .saturating_mul(non_empty("tfidf", &self.tfidf)?)
            .saturating_mul(non_empty("exclude_target", &self.exclude_target)?)
            .saturating_mul(non_empty("selector", &self.selector)?);
        if total > MAX_GRID_POINTS {
            return Err(Error::Config(format!(
                "grid has {total} points, more than the {MAX_GRID_POINTS} supported"
            )));
        }
        Ok(())
    }

    /// Expand into the cartesian product over the present axes. Points
    /// come out in a stable nested order and each config is validated.
    pub fn points(&self, base: &RunConfig) -> Result<Vec<GridPoint>> {
        self.validate()?;
        let mut points = vec![GridPoint {
            settings: BTreeMap::new(),
            config: base.clone(),
        }];

        fn sweep<T: Clone>(
            points: Vec<GridPoint>,
            name: &str,
            axis: &Option<Vec<T>>,
            show: impl Fn(&T) -> String,
            apply: impl Fn(&mut RunConfig, &T),
        ) -> Vec<GridPoint> {
            let Some(values) = axis else { return points };
            let mut out = Vec::with_capacity(points.len() * values.len());
            for point in &points {
                for value in values {
                    let mut next = point.clone();
                    apply(&mut next.config, value);
                    next.settings.insert(name.to_owned(), show(value));
                    out.push(next);
                }
            }
            out
        }

        points = sweep(points, "method", &self.method, |m| m.to_string(), |c, m| {
            c.combine.method = *m;
        });
        points = sweep(points, "top_k", &self.top_k, |v| v.to_string(), |c, v| {
            c.combine.top_k = *v;
        });
        points = sweep(
            points,
            "num_representatives",
            &self.num_representatives,
            |v| v.to_string(),
            |c, v| c.combine.num_representatives = *v,
        );
        points = sweep(
            points,
            "sample_size",
            &self.sample_size,
            |v| v.to_string(),
            |c, v| c.combine.sample_size = *v,
        );
        points = sweep(points, "zipf_z", &self.zipf_z, |v| v.to_string(), |c, v| {
            c.combine.zipf_z = *v;
        });
        points = sweep(points, "beta", &self.beta, |v| v.to_string(), |c, v| {
            c.combine.beta = *v;
        });
        points = sweep(points, "tfidf", &self.tfidf, |v| v.to_string(), |c, v| {
            c.vectorize.tfidf = *v;
        });
        points = sweep(
            points,
            "exclude_target",
            &self.exclude_target,
            |v| v.to_string(),
            |c, v| c.vectorize.exclude_target = *v,
        );
        points = sweep(
            points,
            "selector",
            &self.selector,
            |s| s.to_string(),
            |c, s| c.select.selector = *s,
        );

        for point in &mut points {
            if self.objective == GridObjective::MaxAri {
                point.config.eval.max_ari = true;
            }
            point
                .config
                .validate()
                .map_err(|e| Error::Config(format!("grid point {:?}: {e}", point.settings)))?;
        }
        Ok(points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        dataset = "data.tsv"
        output_dir = "out"

        [source]
        kind = "toy-lm"
        corpus = "corpus.txt"
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.workers, 0);
        assert_eq!(cfg.combine.method, CombineMethod::BayesComb);
        assert_eq!(cfg.select.selector, SelectorKind::Silnc);
        assert_eq!(cfg.select.nc_min, 2);
        assert_eq!(cfg.select.nc_max, 12);
        assert!(cfg.eval.gold);
        assert!(!cfg.eval.max_ari);
        match cfg.source {
            SourceConfig::ToyLm {
                order,
                top_k,
                use_pattern,
                ref pattern,
                ..
            } => {
                assert_eq!(order, 3);
                assert_eq!(top_k, 50);
                assert!(!use_pattern);
                assert_eq!(pattern, "and");
            }
            SourceConfig::File { .. } => panic!("wrong source kind"),
        }
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
            dataset = "data.tsv"
            output_dir = "out"
            seed = 7
            workers = 2

            [source]
            kind = "file"
            path = "dists.jsonl"

            [combine]
            method = "pos-weight-avg"
            top_k = 15
            beta = 0.25

            [vectorize]
            tfidf = true
            exclude_target = false

            [select]
            selector = "fixnc"
            fixed_nc = 3

            [eval]
            gold = true
            max_ari = true
            baselines = true
        "#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.combine.method, CombineMethod::PosWeightAvg);
        assert_eq!(cfg.combine.beta, 0.25);
        assert_eq!(cfg.combine.sample_size, 10); // untouched default
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\ntypo_key = 1\n");
        assert!(RunConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn selector_requirements_are_enforced() {
        let fixnc = MINIMAL.to_owned() + "\n[select]\nselector = \"fixnc\"\n";
        let err = RunConfig::from_toml_str(&fixnc).unwrap_err().to_string();
        assert!(err.contains("fixed_nc"), "{err}");

        let prevnc = MINIMAL.to_owned() + "\n[select]\nselector = \"prevnc\"\n";
        let err = RunConfig::from_toml_str(&prevnc).unwrap_err().to_string();
        assert!(err.contains("prev_submission"), "{err}");

        let oracle = MINIMAL.to_owned()
            + "\n[select]\nselector = \"gold-oracle\"\n[eval]\ngold = false\n";
        assert!(RunConfig::from_toml_str(&oracle).is_err());

        let maxari = MINIMAL.to_owned() + "\n[eval]\ngold = false\nmax_ari = true\n";
        assert!(RunConfig::from_toml_str(&maxari).is_err());
    }

    #[test]
    fn source_parameters_are_validated() {
        let bad_order = MINIMAL.replace("corpus = \"corpus.txt\"", "corpus = \"c\"\norder = 1");
        assert!(RunConfig::from_toml_str(&bad_order).is_err());
        let bad_k = MINIMAL.replace("corpus = \"corpus.txt\"", "corpus = \"c\"\nsmoothing_k = 0.0");
        assert!(RunConfig::from_toml_str(&bad_k).is_err());
        let bad_pattern = MINIMAL.replace(
            "corpus = \"corpus.txt\"",
            "corpus = \"c\"\nuse_pattern = true\npattern = \" \"",
        );
        assert!(RunConfig::from_toml_str(&bad_pattern).is_err());
    }

    #[test]
    fn content_hash_tracks_settings() {
        let a = RunConfig::from_toml_str(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        b.seed = 43;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
        assert_eq!(a.content_hash().unwrap().len(), 64);
    }

    #[test]
    fn grid_expands_cartesian_product_in_stable_order() {
        let base = RunConfig::from_toml_str(MINIMAL).unwrap();
        let spec = GridSpec {
            method: Some(vec![CombineMethod::Avg, CombineMethod::BaseUnion]),
            top_k: Some(vec![10, 20]),
            ..GridSpec::default()
        };
        let points = spec.points(&base).unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].settings["method"], "avg");
        assert_eq!(points[0].settings["top_k"], "10");
        assert_eq!(points[1].settings["top_k"], "20");
        assert_eq!(points[2].settings["method"], "base-union");
        assert_eq!(points[0].config.combine.method, CombineMethod::Avg);
        assert_eq!(points[3].config.combine.top_k, 20);
        // Unswept axes keep base values and stay out of the settings.
        assert!(!points[0].settings.contains_key("beta"));
    }

    #[test]
    fn grid_max_ari_objective_forces_the_search() {
        let base = RunConfig::from_toml_str(MINIMAL).unwrap();
        let spec = GridSpec {
            objective: GridObjective::MaxAri,
            ..GridSpec::default()
        };
        let points = spec.points(&base).unwrap();
        assert!(points[0].config.eval.max_ari);
    }

    #[test]
    fn grid_rejects_empty_axes_and_invalid_points() {
        let base = RunConfig::from_toml_str(MINIMAL).unwrap();
        let empty = GridSpec {
            top_k: Some(vec![]),
            ..GridSpec::default()
        };
        assert!(empty.points(&base).is_err());

        // Sweeping onto a selector whose requirements the base lacks must
        // fail loudly, not at run time.
        let invalid = GridSpec {
            selector: Some(vec![SelectorKind::Fixnc]),
            ..GridSpec::default()
        };
        assert!(invalid.points(&base).is_err());
    }

    #[test]
    fn grid_spec_parses_from_toml() {
        let spec = GridSpec::from_toml_str(
            "objective = \"max-ari\"\nzipf_z = [0.0, 1.0, 2.0]\ntfidf = [true, false]\n",
        )
        .unwrap();
        assert_eq!(spec.objective, GridObjective::MaxAri);
        assert_eq!(spec.zipf_z.as_deref(), Some(&[0.0, 1.0, 2.0][..]));
        assert!(GridSpec::from_toml_str("bogus = 1").is_err());
    }
}
