use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Severe,
    Major,
    Ok,
}

impl Severity {
    /// severe → 0, major → 0.5, ok → 1.
    pub fn score(self) -> f64 {
        match self {
            Severity::Severe => 0.0,
            Severity::Major => 0.5,
            Severity::Ok => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanLabel {
    pub id: String,
    pub severity: Severity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MqmSummary {
    pub n: usize,
    pub n_severe: usize,
    pub n_major: usize,
    /// Mean score.
    pub accuracy: f64,
    pub severe_rate: f64,
    pub major_rate: f64,
}

pub fn mqm_aggregate(labels: &[HumanLabel]) -> Result<MqmSummary, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Invalid("no labels".into()));
    }
    let n = labels.len();
    let count = |s: Severity| labels.iter().filter(|l| l.severity == s).count();
    let (n_severe, n_major) = (count(Severity::Severe), count(Severity::Major));
    let total: f64 = labels.iter().map(|l| l.severity.score()).sum();
    Ok(MqmSummary {
        n,
        n_severe,
        n_major,
        accuracy: total / n as f64,
        severe_rate: n_severe as f64 / n as f64,
        major_rate: n_major as f64 / n as f64,
    })
}

/// Reads `id,severity` rows with a header line.
pub fn parse_labels<R: std::io::Read>(r: R) -> Result<Vec<HumanLabel>, EvalError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_labels(path: &Path) -> Result<Vec<HumanLabel>, EvalError> {
    parse_labels(std::fs::File::open(path)?)
}

pub fn write_labels(path: &Path, labels: &[HumanLabel]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for l in labels {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}
