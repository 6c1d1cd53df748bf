//! BLEU, paired permutation tests, Krippendorff's alpha, frequency
//! quintiles, severity-graded human scores and report serialization.

mod agreement;
mod bleu;
mod mqm;
mod permutation;
mod quintiles;
mod report;

use thiserror::Error;

pub use agreement::krippendorff_alpha;
pub use bleu::{corpus_bleu, corpus_bleu_details, BleuResult, BleuSmoothing, BleuStats, MAX_ORDER};
pub use mqm::{mqm_aggregate, parse_labels, read_labels, write_labels, HumanLabel, MqmSummary, Severity};
pub use permutation::{permutation_test, permutation_test_scores, PermutationConfig, PermutationResult};
pub use quintiles::{frequency_quintiles, QuintileRow};
pub use report::{EvalReport, SentenceRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: {left} vs {right} items")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn same_len(what: &'static str, left: usize, right: usize) -> Result<(), EvalError> {
    if left == right {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch { what, left, right })
    }
}

#[cfg(test)]
mod tests;
