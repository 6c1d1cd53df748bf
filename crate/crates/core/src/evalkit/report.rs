use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BleuResult, BleuSmoothing, BleuStats, EvalError, MqmSummary, PermutationResult, QuintileRow};

/// One scored hypothesis. Token sequences are space-joined strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: usize,
    pub source: String,
    pub hypothesis: String,
    pub reference: String,
    pub exact_match: bool,
    pub group: Option<String>,
    pub matches_1: u64,
    pub matches_2: u64,
    pub matches_3: u64,
    pub matches_4: u64,
    pub totals_1: u64,
    pub totals_2: u64,
    pub totals_3: u64,
    pub totals_4: u64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl SentenceRecord {
    pub fn new(id: usize, source: &[String], hyp: &[String], reference: &[String], group: Option<String>) -> Self {
        let s = BleuStats::of(hyp, reference);
        Self {
            id,
            source: source.join(" "),
            hypothesis: hyp.join(" "),
            reference: reference.join(" "),
            exact_match: hyp == reference,
            group,
            matches_1: s.matches[0],
            matches_2: s.matches[1],
            matches_3: s.matches[2],
            matches_4: s.matches[3],
            totals_1: s.totals[0],
            totals_2: s.totals[1],
            totals_3: s.totals[2],
            totals_4: s.totals[3],
            hyp_len: s.hyp_len,
            ref_len: s.ref_len,
        }
    }

    pub fn stats(&self) -> BleuStats {
        BleuStats {
            matches: [self.matches_1, self.matches_2, self.matches_3, self.matches_4],
            totals: [self.totals_1, self.totals_2, self.totals_3, self.totals_4],
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sentences: Vec<SentenceRecord>,
    pub smoothing: BleuSmoothing,
    pub bleu: BleuResult,
    pub exact_match: Option<f64>,
    /// Exact-match accuracy per record group, sorted by group name.
    pub group_exact_match: Vec<(String, f64)>,
    pub significance: Option<PermutationResult>,
    pub quintiles: Option<Vec<QuintileRow>>,
    pub mqm: Option<MqmSummary>,
}

impl EvalReport {
    /// Aggregates recomputed from the per-sentence records.
    pub fn from_records(sentences: Vec<SentenceRecord>, smoothing: BleuSmoothing) -> Self {
        let mut total = BleuStats::default();
        for s in &sentences {
            total.add(&s.stats());
        }
        let n = sentences.len();
        let exact_match = (n > 0).then(|| sentences.iter().filter(|s| s.exact_match).count() as f64 / n as f64);
        let mut groups: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
        for s in &sentences {
            if let Some(g) = &s.group {
                let e = groups.entry(g.clone()).or_default();
                e.0 += usize::from(s.exact_match);
                e.1 += 1;
            }
        }
        Self {
            bleu: total.result(smoothing),
            smoothing,
            exact_match,
            group_exact_match: groups.into_iter().map(|(g, (h, n))| (g, h as f64 / n as f64)).collect(),
            sentences,
            significance: None,
            quintiles: None,
            mqm: None,
        }
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn sentences_csv(&self) -> Result<Vec<u8>, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.sentences {
            w.serialize(s)?;
        }
        w.into_inner().map_err(|e| EvalError::Io(e.into_error()))
    }

    pub fn parse_sentences_csv<R: std::io::Read>(r: R) -> Result<Vec<SentenceRecord>, EvalError> {
        let mut rd = csv::Reader::from_reader(r);
        Ok(rd.deserialize().collect::<Result<_, _>>()?)
    }

    /// Writes `<stem>.json` and `<stem>.csv`.
    pub fn write(&self, stem: &Path) -> Result<(), EvalError> {
        std::fs::write(stem.with_extension("json"), self.to_json()?)?;
        std::fs::write(stem.with_extension("csv"), self.sentences_csv()?)?;
        Ok(())
    }
}
