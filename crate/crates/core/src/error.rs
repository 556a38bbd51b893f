//! Error type shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file; `line` is 1-based and counts every physical line.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument fell outside the range an operation is defined on.
    #[error("{0}")]
    Domain(String),

    #[error("label slices differ in length: {gold} gold vs {pred} predicted")]
    LabelLengthMismatch { gold: usize, pred: usize },

    #[error("occurrence {context_id}: no substitutes available from either direction")]
    NoSubstitutes { context_id: String },

    /// Forward and backward supports share no token, so a product score
    /// cannot be formed. Callers are expected to fall back to a union.
    #[error("forward and backward substitute supports do not intersect")]
    NoSharedSubstitutes,

    #[error("word {word:?}: vocabulary is empty after lemma filtering")]
    EmptyVocabulary { word: String },

    #[error("submissions disagree on context ids: {0}")]
    SubmissionMismatch(String),

    #[error("word {word:?} failed")]
    Word {
        word: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn for_word(word: &str, source: Error) -> Self {
        Error::Word {
            word: word.to_owned(),
            source: Box::new(source),
        }
    }

    /// Message including the full cause chain, `": "`-joined. Display alone
    /// stops at the outermost layer; use this where an error is flattened
    /// into a plain string instead of being reported through a chain-aware
    /// handler.
    pub fn full_message(&self) -> String {
        let mut out = self.to_string();
        let mut source = std::error::Error::source(self);
        while let Some(cause) = source {
            out.push_str(": ");
            out.push_str(&cause.to_string());
            source = cause.source();
        }
        out
    }
}
