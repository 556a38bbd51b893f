//! Turning representatives into sparse bag-of-words vectors.
//!
//! Vocabularies are built per target word from that word's representatives
//! only, after lemmatization and optional removal of the target itself.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::combine::Representative;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizeConfig {
    /// Scale counts by inverse document frequency.
    pub tfidf: bool,
    /// Drop the target word's own lemma from every vocabulary.
    pub exclude_target: bool,
    /// Optional token -> lemma dictionary; tokens not listed map to themselves.
    pub lemma_dict: Option<std::path::PathBuf>,
}

impl Default for VectorizeConfig {
    fn default() -> Self {
        VectorizeConfig {
            tfidf: false,
            exclude_target: true,
            lemma_dict: None,
        }
    }
}

/// Dictionary lemmatizer with identity fallback.
///
/// Chains in the dictionary (a -> b, b -> c) are resolved at load time so
/// that lemmatization is idempotent. Lookup is exact; casing is the
/// caller's concern (the built-in tokenizer lowercases).
#[derive(Debug, Clone, Default)]
pub struct Lemmatizer {
    map: HashMap<String, String>,
}

impl Lemmatizer {
    /// Identity lemmatizer.
    pub fn identity() -> Self {
        Lemmatizer::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let raw: HashMap<String, String> = pairs.into_iter().collect();
        let mut map = HashMap::with_capacity(raw.len());
        for key in raw.keys() {
            let mut current = key.as_str();
            let mut hops = 0usize;
            while let Some(next) = raw.get(current) {
                if next == current {
                    break;
                }
                current = next;
                hops += 1;
                if hops > raw.len() {
                    return Err(Error::Config(format!(
                        "lemma dictionary contains a cycle involving {key:?}"
                    )));
                }
            }
            map.insert(key.clone(), current.to_owned());
        }
        Ok(Lemmatizer { map })
    }

    /// Load a two-column `token TAB lemma` file. Blank lines are skipped.
    pub fn from_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(tok), Some(lem), None) if !tok.is_empty() && !lem.is_empty() => {
                    pairs.push((tok.to_owned(), lem.to_owned()));
                }
                _ => {
                    return Err(Error::parse(path, idx + 1, "expected exactly 2 tab-separated columns"));
                }
            }
        }
        Lemmatizer::from_pairs(pairs)
    }

    pub fn lemmatize<'a>(&'a self, token: &'a str) -> &'a str {
        self.map.get(token).map(String::as_str).unwrap_or(token)
    }
}

/// Per-word lemma vocabulary; ids follow sorted lemma order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn id(&self, lemma: &str) -> Option<usize> {
        self.index.get(lemma).copied()
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Collect the lemma vocabulary over all representatives of one word.
/// With `exclude_target` the target's lemma is left out, so its counts are
/// dropped as out-of-vocabulary later.
pub fn build_vocab(
    reps: &[Representative],
    lemmatizer: &Lemmatizer,
    target: &str,
    cfg: &VectorizeConfig,
) -> Result<Vocabulary> {
    let target_lemma = lemmatizer.lemmatize(target);
    let mut lemmas: BTreeMap<String, usize> = BTreeMap::new();
    for rep in reps {
        for tok in &rep.substitutes {
            let lemma = lemmatizer.lemmatize(tok);
            if cfg.exclude_target && lemma == target_lemma {
                continue;
            }
            lemmas.entry(lemma.to_owned()).or_insert(0);
        }
    }
    if lemmas.is_empty() {
        return Err(Error::EmptyVocabulary {
            word: target.to_owned(),
        });
    }
    for (i, v) in lemmas.values_mut().enumerate() {
        *v = i;
    }
    Ok(Vocabulary { index: lemmas })
}

/// Sparse vector with strictly increasing indices and positive values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Domain("index/value length mismatch".into()));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Domain("indices must be strictly increasing".into()));
            }
        }
        if indices.last().is_some_and(|&i| i >= dim) {
            return Err(Error::Domain("index beyond vector dimension".into()));
        }
        if values.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::Domain("values must be positive and finite".into()));
        }
        Ok(SparseVector { indices, values, dim })
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let mut sum = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

/// Count a representative's lemmas against the vocabulary. Tokens whose
/// lemma is not in the vocabulary (including an excluded target) are
/// dropped; the result may be empty.
pub fn to_bow(rep: &Representative, vocab: &Vocabulary, lemmatizer: &Lemmatizer) -> SparseVector {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for tok in &rep.substitutes {
        if let Some(id) = vocab.id(lemmatizer.lemmatize(tok)) {
            *counts.entry(id).or_insert(0.0) += 1.0;
        }
    }
    let (indices, values): (Vec<usize>, Vec<f64>) = counts.into_iter().unzip();
    SparseVector {
        indices,
        values,
        dim: vocab.len(),
    }
}

/// Scale term counts by smoothed inverse document frequency:
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, never below 1, so the
/// sparsity pattern of every vector is preserved.
pub fn tfidf_scale(vectors: &[SparseVector]) -> Vec<SparseVector> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, SparseVector::dim);
    let mut df = vec![0usize; dim];
    for v in vectors {
        for (i, _) in v.iter() {
            df[i] += 1;
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    vectors
        .iter()
        .map(|v| SparseVector {
            indices: v.indices.clone(),
            values: v
                .indices
                .iter()
                .zip(&v.values)
                .map(|(&i, &val)| val * idf[i])
                .collect(),
            dim: v.dim,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(tokens: &[&str]) -> Representative {
        Representative {
            context_id: "c".into(),
            substitutes: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn lem(pairs: &[(&str, &str)]) -> Lemmatizer {
        Lemmatizer::from_pairs(pairs.iter().map(|(a, b)| (a.to_string(), b.to_string()))).unwrap()
    }

    #[test]
    fn lemmatizer_is_idempotent_across_chains() {
        let l = lem(&[("running", "run"), ("run", "go")]);
        assert_eq!(l.lemmatize("running"), "go");
        assert_eq!(l.lemmatize(l.lemmatize("running")), "go");
        assert_eq!(l.lemmatize("unknown"), "unknown");
    }

    #[test]
    fn lemmatizer_rejects_cycles() {
        let r = Lemmatizer::from_pairs(vec![
            ("a".to_string(), "b".to_string()),
            ("b".to_string(), "a".to_string()),
        ]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn lemma_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lemmas.tsv");
        std::fs::write(&p, "banks\tbank\nrivers\triver\n\n").unwrap();
        let l = Lemmatizer::from_tsv(&p).unwrap();
        assert_eq!(l.lemmatize("banks"), "bank");
        std::fs::write(&p, "one\ttwo\tthree\n").unwrap();
        assert!(matches!(Lemmatizer::from_tsv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn vocab_excludes_target_by_lemma() {
        let l = lem(&[("banks", "bank")]);
        let reps = vec![rep(&["banks", "river", "money"])];
        let cfg = VectorizeConfig::default();
        let v = build_vocab(&reps, &l, "bank", &cfg).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.id("bank").is_none());
        assert!(v.id("river").is_some());

        let keep = VectorizeConfig {
            exclude_target: false,
            ..cfg
        };
        let v = build_vocab(&reps, &l, "bank", &keep).unwrap();
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_vocabulary_names_the_word() {
        let l = Lemmatizer::identity();
        let reps = vec![rep(&["bank", "bank"])];
        match build_vocab(&reps, &l, "bank", &VectorizeConfig::default()) {
            Err(Error::EmptyVocabulary { word }) => assert_eq!(word, "bank"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bow_counts_multiplicities_and_drops_oov() {
        let l = Lemmatizer::identity();
        let reps = vec![rep(&["a", "b"]), rep(&["b", "c"])];
        let cfg = VectorizeConfig {
            exclude_target: false,
            ..VectorizeConfig::default()
        };
        let vocab = build_vocab(&reps, &l, "w", &cfg).unwrap();
        let v = to_bow(&rep(&["b", "a", "b", "oov"]), &vocab, &l);
        assert_eq!(v.dim(), 3);
        let pairs: Vec<(usize, f64)> = v.iter().collect();
        assert_eq!(pairs, vec![(0, 1.0), (1, 2.0)]);
    }

    #[test]
    fn tfidf_matches_hand_computed_idf() {
        // Two vectors; a term in one of them gets idf = ln(3/2) + 1.
        let a = SparseVector::new(vec![0, 1], vec![2.0, 1.0], 2).unwrap();
        let b = SparseVector::new(vec![0], vec![1.0], 2).unwrap();
        let scaled = tfidf_scale(&[a, b]);
        let shared_idf = (3.0f64 / 3.0).ln() + 1.0; // df = 2
        let rare_idf = (3.0f64 / 2.0).ln() + 1.0; // df = 1
        let pairs: Vec<(usize, f64)> = scaled[0].iter().collect();
        assert!((pairs[0].1 - 2.0 * shared_idf).abs() < 1e-12);
        assert!((pairs[1].1 - rare_idf).abs() < 1e-12);
        assert!((rare_idf - 1.405_465_108_108_164_4).abs() < 1e-12);
    }

    #[test]
    fn tfidf_preserves_sparsity_and_empties() {
        let a = SparseVector::new(vec![1, 3], vec![1.0, 4.0], 5).unwrap();
        let e = SparseVector::empty(5);
        let scaled = tfidf_scale(&[a.clone(), e]);
        assert_eq!(
            scaled[0].iter().map(|(i, _)| i).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert!(scaled[1].is_empty());
        assert!(scaled[0].iter().all(|(_, v)| v > 0.0));
    }

    #[test]
    fn sparse_vector_validates_structure() {
        assert!(SparseVector::new(vec![0, 0], vec![1.0, 1.0], 3).is_err());
        assert!(SparseVector::new(vec![0, 5], vec![1.0, 1.0], 3).is_err());
        assert!(SparseVector::new(vec![0], vec![-1.0], 3).is_err());
        assert!(SparseVector::new(vec![0], vec![1.0, 2.0], 3).is_err());
    }

    #[test]
    fn dot_walks_shared_indices() {
        let a = SparseVector::new(vec![0, 2, 4], vec![1.0, 2.0, 3.0], 5).unwrap();
        let b = SparseVector::new(vec![2, 3, 4], vec![5.0, 7.0, 11.0], 5).unwrap();
        assert_eq!(a.dot(&b), 2.0 * 5.0 + 3.0 * 11.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tfidf_never_changes_the_support(
                vecs in prop::collection::vec(
                    prop::collection::btree_map(0usize..12, 1.0f64..5.0, 0..6),
                    1..8,
                )
            ) {
                let vectors: Vec<SparseVector> = vecs
                    .iter()
                    .map(|m| {
                        let (idx, vals): (Vec<usize>, Vec<f64>) =
                            m.iter().map(|(&i, &v)| (i, v)).unzip();
                        SparseVector::new(idx, vals, 12).unwrap()
                    })
                    .collect();
                let scaled = tfidf_scale(&vectors);
                for (orig, s) in vectors.iter().zip(&scaled) {
                    let a: Vec<usize> = orig.iter().map(|(i, _)| i).collect();
                    let b: Vec<usize> = s.iter().map(|(i, _)| i).collect();
                    prop_assert_eq!(a, b);
                    prop_assert!(s.iter().all(|(_, v)| v > 0.0 && v.is_finite()));
                }
            }
        }
    }
}
