//! Tab-separated dataset of target-word occurrences and its validation.
//!
//! One row per occurrence of an ambiguous word inside a context sentence.
//! `gold_sense_id` may be empty for unlabeled data; `predict_sense_id` is
//! filled by the pipeline and left empty on input. Offsets in `positions`
//! are character offsets, `begin-end`, end exclusive.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const DATASET_HEADER: [&str; 6] = [
    "context_id",
    "word",
    "gold_sense_id",
    "predict_sense_id",
    "positions",
    "context",
];

/// Character span of the target word inside its context, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occurrence {
    pub context_id: String,
    pub word: String,
    pub gold_sense_id: Option<String>,
    pub predict_sense_id: Option<String>,
    pub target_span: Span,
    pub context: String,
}

impl Occurrence {
    /// Context text to the left of the target.
    pub fn left(&self) -> String {
        self.context.chars().take(self.target_span.begin).collect()
    }

    /// Context text to the right of the target.
    pub fn right(&self) -> String {
        self.context.chars().skip(self.target_span.end).collect()
    }

    /// The target word as it is spelled in the context.
    pub fn target_text(&self) -> String {
        self.context
            .chars()
            .skip(self.target_span.begin)
            .take(self.target_span.end - self.target_span.begin)
            .collect()
    }

    /// Relative start position of the target in `[0, 1)`, used for
    /// position-dependent weighting of the two model directions.
    pub fn relative_position(&self) -> f64 {
        let len = self.context.chars().count();
        if len == 0 {
            return 0.0;
        }
        self.target_span.begin as f64 / len as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    /// Rows in original file order.
    pub occurrences: Vec<Occurrence>,
}

impl Dataset {
    /// Occurrence indices grouped by word, words in sorted order.
    pub fn by_word(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, occ) in self.occurrences.iter().enumerate() {
            map.entry(occ.word.as_str()).or_default().push(i);
        }
        map
    }

    pub fn summary(&self) -> DatasetSummary {
        let by_word = self.by_word();
        let mut senses_per_word = Vec::new();
        let mut labeled = 0usize;
        for idxs in by_word.values() {
            let senses: BTreeSet<&str> = idxs
                .iter()
                .filter_map(|&i| self.occurrences[i].gold_sense_id.as_deref())
                .collect();
            if !senses.is_empty() {
                senses_per_word.push(senses.len());
            }
            labeled += idxs
                .iter()
                .filter(|&&i| self.occurrences[i].gold_sense_id.is_some())
                .count();
        }
        let words = by_word.len();
        DatasetSummary {
            words,
            examples: self.occurrences.len(),
            labeled_examples: labeled,
            mean_examples_per_word: if words == 0 {
                0.0
            } else {
                self.occurrences.len() as f64 / words as f64
            },
            mean_gold_senses_per_word: if senses_per_word.is_empty() {
                None
            } else {
                Some(senses_per_word.iter().sum::<usize>() as f64 / senses_per_word.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub words: usize,
    pub examples: usize,
    pub labeled_examples: usize,
    pub mean_examples_per_word: f64,
    pub mean_gold_senses_per_word: Option<f64>,
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} words, {} examples ({} labeled), {:.1} examples/word",
            self.words, self.examples, self.labeled_examples, self.mean_examples_per_word
        )?;
        if let Some(s) = self.mean_gold_senses_per_word {
            write!(f, ", {s:.2} gold senses/word")?;
        }
        Ok(())
    }
}

fn none_if_empty(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_owned())
    }
}

/// Parse the first `begin-end` span of a `positions` field. Extra spans
/// after a comma are allowed and ignored: substitutes are only ever taken
/// at the first occurrence of the target.
fn parse_first_span(field: &str) -> std::result::Result<Span, String> {
    let first = field.split(',').next().unwrap_or("").trim();
    let (b, e) = first
        .split_once('-')
        .ok_or_else(|| format!("positions {field:?} is not in begin-end form"))?;
    let begin: usize = b
        .trim()
        .parse()
        .map_err(|_| format!("bad span begin {b:?}"))?;
    let end: usize = e.trim().parse().map_err(|_| format!("bad span end {e:?}"))?;
    if begin >= end {
        return Err(format!("empty span {begin}-{end}"));
    }
    Ok(Span { begin, end })
}

/// Read and validate a dataset file. Any violation is reported with its
/// 1-based line number; the header counts as line 1.
pub fn ingest_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols != DATASET_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("bad header {cols:?}, expected {DATASET_HEADER:?}"),
        ));
    }

    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut occurrences = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 6 columns, found {}", fields.len()),
            ));
        }
        let context_id = fields[0].trim();
        if context_id.is_empty() {
            return Err(Error::parse(path, lineno, "empty context_id"));
        }
        if !seen_ids.insert(context_id.to_owned()) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate context_id {context_id:?}"),
            ));
        }
        let word = fields[1].trim();
        if word.is_empty() {
            return Err(Error::parse(path, lineno, "empty word"));
        }
        let context = fields[5];
        if context.is_empty() {
            return Err(Error::parse(path, lineno, "empty context"));
        }
        let span = parse_first_span(fields[4]).map_err(|msg| Error::parse(path, lineno, msg))?;
        let n_chars = context.chars().count();
        if span.end > n_chars {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "span {}-{} exceeds context length {n_chars}",
                    span.begin, span.end
                ),
            ));
        }
        occurrences.push(Occurrence {
            context_id: context_id.to_owned(),
            word: word.to_owned(),
            gold_sense_id: none_if_empty(fields[2].trim()),
            predict_sense_id: none_if_empty(fields[3].trim()),
            target_span: span,
            context: context.to_owned(),
        });
    }
    Ok(Dataset { occurrences })
}

/// Serialize a dataset back to the TSV format `ingest_dataset` accepts.
pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    out.push_str(&DATASET_HEADER.join("\t"));
    out.push('\n');
    for occ in &dataset.occurrences {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}-{}\t{}",
            occ.context_id,
            occ.word,
            occ.gold_sense_id.as_deref().unwrap_or(""),
            occ.predict_sense_id.as_deref().unwrap_or(""),
            occ.target_span.begin,
            occ.target_span.end,
            occ.context,
        );
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tsv() -> String {
        let header = DATASET_HEADER.join("\t");
        format!(
            "{header}\n\
             ex1\tbank\triver\t\t4-8\tthe bank of the stream\n\
             ex2\tbank\tmoney\t\t10-14\tdeposit at bank counters\n"
        )
    }

    #[test]
    fn ingest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.tsv");
        std::fs::write(&p, sample_tsv()).unwrap();
        let ds = ingest_dataset(&p).unwrap();
        assert_eq!(ds.occurrences.len(), 2);
        assert_eq!(ds.occurrences[0].target_text(), "bank");
        assert_eq!(ds.occurrences[1].gold_sense_id.as_deref(), Some("money"));

        let back = format_dataset(&ds);
        assert_eq!(back, sample_tsv());
    }

    #[test]
    fn duplicate_context_id_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.tsv");
        let mut text = sample_tsv();
        text.push_str("ex1\tbank\triver\t\t0-3\tthe bank again\n");
        std::fs::write(&p, text).unwrap();
        let err = ingest_dataset(&p).unwrap_err();
        match err {
            Error::Parse { line, ref msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("duplicate"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn span_outside_context_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.tsv");
        let header = DATASET_HEADER.join("\t");
        std::fs::write(&p, format!("{header}\nex1\tw\ta\t\t3-99\tshort text\n")).unwrap();
        assert!(matches!(
            ingest_dataset(&p),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn spans_are_character_offsets() {
        // Cyrillic characters occupy two bytes each; offsets must count chars.
        let occ = Occurrence {
            context_id: "c".into(),
            word: "речка".into(),
            gold_sense_id: None,
            predict_sense_id: None,
            target_span: Span { begin: 3, end: 8 },
            context: "на речка берегу".into(),
        };
        assert_eq!(occ.target_text(), "речка");
        assert_eq!(occ.left(), "на ");
        assert_eq!(occ.right(), " берегу");
    }

    #[test]
    fn multi_span_positions_use_first() {
        let span = parse_first_span("4-8,20-24").unwrap();
        assert_eq!(span, Span { begin: 4, end: 8 });
    }

    #[test]
    fn relative_position_bounds() {
        let occ = Occurrence {
            context_id: "c".into(),
            word: "w".into(),
            gold_sense_id: None,
            predict_sense_id: None,
            target_span: Span { begin: 0, end: 1 },
            context: "w at start".into(),
        };
        assert_eq!(occ.relative_position(), 0.0);
    }
}
