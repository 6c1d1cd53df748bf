//! Natural-corpus pipeline: idiom lists, lemma-sequence matching, quality
//! score filtering, capped test-set construction and length-matched random
//! sets.

mod formats;
mod matching;
mod testsets;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formats::{
    parse_corpus_tsv, parse_idioms, parse_labels, parse_scores, read_corpus_tsv, read_idioms, read_labels, read_scores,
    write_labels, write_scores, Label, LabelRow, ScoreRow,
};
pub use matching::{match_idioms, tokenize, Lemmatizer, LowercaseLemmatizer, MatchSet};
pub use testsets::{
    attach_scores, build_testsets, filter_by_scores, length_match_indices, length_match_random, target_len, TestItem,
    TestSets, DEFAULT_SCAN_CAP,
};

#[derive(Debug, Error)]
pub enum IdiomError {
    #[error("invalid idiom entry {id:?}: {msg}")]
    Entry { id: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("pair {0} has no quality score")]
    MissingScore(usize),
    #[error("{0}")]
    Invalid(String),
    #[error("candidate pool exhausted after {0} picks")]
    PoolExhausted(usize),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdiomEntry {
    pub id: String,
    pub surface: String,
    pub lemmas: Vec<String>,
    #[serde(default)]
    pub literal_gloss: String,
    #[serde(default)]
    pub figurative_gloss: String,
    #[serde(default)]
    pub lang: String,
}

impl IdiomEntry {
    pub fn validate(&self) -> Result<(), IdiomError> {
        if self.lemmas.is_empty() || self.lemmas.iter().any(String::is_empty) {
            return Err(IdiomError::Entry { id: self.id.clone(), msg: "lemma sequence must be nonempty".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TextPair {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub score: Option<f64>,
    /// Per-token source lemmas, when the corpus ships them precomputed.
    #[serde(default)]
    pub lemmas: Option<Vec<String>>,
}

impl TextPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self { source: source.into(), target: target.into(), score: None, lemmas: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub pairs: Vec<TextPair>,
}

impl TextCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// The bundled miniature corpus used by tests and the CLI smoke pipeline.
pub mod fixture {
    pub const IDIOMS_JSON: &str = include_str!("../../fixtures/idioms/idioms.json");
    pub const CORPUS_TSV: &str = include_str!("../../fixtures/idioms/corpus.tsv");
    pub const LABELS_CSV: &str = include_str!("../../fixtures/idioms/labels.csv");
    pub const SCORES_CSV: &str = include_str!("../../fixtures/idioms/scores.csv");
}
