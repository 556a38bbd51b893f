//! Substitute distributions for a masked target position.
//!
//! A distribution lists candidate fill-in tokens with their probability and
//! their rank in the source model's frequency-ordered vocabulary (rank 1 is
//! the most frequent token). Distributions can come from the built-in model
//! in [`crate::toy_lm`] or from a precomputed JSON-lines file, one object
//! per line:
//!
//! ```text
//! {"context_id":"ex1","word":"bank","direction":"fwd",
//!  "entries":[["shore",0.31,57],["money",0.14,12]],"meta":{}}
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the target a model reads before predicting it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Bwd,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Fwd => "fwd",
            Direction::Bwd => "bwd",
        })
    }
}

/// `(token, probability, vocabulary rank)`.
pub type SubstituteEntry = (String, f64, u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstituteDistribution {
    pub context_id: String,
    pub word: String,
    pub direction: Direction,
    /// Sorted by probability descending; ties by rank ascending.
    pub entries: Vec<SubstituteEntry>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

/// Sum tolerance: probabilities may sum to at most 1 up to rounding noise.
const SUM_SLACK: f64 = 1e-9;

impl SubstituteDistribution {
    /// Check the structural invariants every distribution must satisfy.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.context_id.is_empty() {
            return Err("empty context_id".into());
        }
        let mut sum = 0.0;
        let mut seen = std::collections::HashSet::new();
        for (i, (token, prob, rank)) in self.entries.iter().enumerate() {
            if token.is_empty() {
                return Err(format!("entry {i}: empty token"));
            }
            if !(*prob > 0.0 && *prob <= 1.0) {
                return Err(format!("entry {i} ({token:?}): probability {prob} not in (0,1]"));
            }
            if *rank == 0 {
                return Err(format!("entry {i} ({token:?}): rank must be >= 1"));
            }
            if !seen.insert(token.as_str()) {
                return Err(format!("duplicate token {token:?}"));
            }
            if i > 0 && self.entries[i - 1].1 < *prob {
                return Err(format!(
                    "entries not sorted by probability at index {i} ({token:?})"
                ));
            }
            sum += prob;
        }
        if sum > 1.0 + SUM_SLACK {
            return Err(format!("probabilities sum to {sum}, above 1"));
        }
        Ok(())
    }
}

/// Read a JSON-lines distribution file, validating every record. Errors
/// carry the 1-based line number of the offending record.
pub fn read_distribution_file(path: impl AsRef<Path>) -> Result<Vec<SubstituteDistribution>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let dist: SubstituteDistribution = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        dist.validate()
            .map_err(|msg| Error::parse(path, idx + 1, msg))?;
        out.push(dist);
    }
    Ok(out)
}

pub fn write_distribution_file(
    path: impl AsRef<Path>,
    dists: &[SubstituteDistribution],
) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for dist in dists {
        // Infallible for these types; keep the expect local and loud.
        let line = serde_json::to_string(dist).expect("distribution serializes");
        let _ = writeln!(text, "{line}");
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(entries: Vec<SubstituteEntry>) -> SubstituteDistribution {
        SubstituteDistribution {
            context_id: "ex1".into(),
            word: "bank".into(),
            direction: Direction::Fwd,
            entries,
            meta: serde_json::Map::new(),
        }
    }

    #[test]
    fn round_trip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("subst.jsonl");
        let records = vec![
            dist(vec![("shore".into(), 0.31, 57), ("money".into(), 0.14, 12)]),
            SubstituteDistribution {
                direction: Direction::Bwd,
                ..dist(vec![("river".into(), 0.5, 9)])
            },
        ];
        write_distribution_file(&p, &records).unwrap();
        let back = read_distribution_file(&p).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn unsorted_entries_are_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("subst.jsonl");
        let good = serde_json::to_string(&dist(vec![("a".into(), 0.5, 1)])).unwrap();
        let bad = r#"{"context_id":"x","word":"w","direction":"fwd","entries":[["a",0.1,3],["b",0.4,2]]}"#;
        std::fs::write(&p, format!("{good}\n{bad}\n")).unwrap();
        match read_distribution_file(&p) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("sorted"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn probability_sum_above_one_is_rejected() {
        let d = dist(vec![("a".into(), 0.7, 1), ("b".into(), 0.5, 2)]);
        let err = d.validate().unwrap_err();
        assert!(err.contains("sum"), "{err}");
    }

    #[test]
    fn duplicate_tokens_are_rejected() {
        let d = dist(vec![("a".into(), 0.3, 1), ("a".into(), 0.2, 1)]);
        assert!(d.validate().unwrap_err().contains("duplicate"));
    }

    #[test]
    fn zero_rank_is_rejected() {
        let d = dist(vec![("a".into(), 0.3, 0)]);
        assert!(d.validate().unwrap_err().contains("rank"));
    }

    #[test]
    fn direction_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Direction::Fwd).unwrap(), "\"fwd\"");
        assert_eq!(serde_json::to_string(&Direction::Bwd).unwrap(), "\"bwd\"");
    }
}
