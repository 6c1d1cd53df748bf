//! File formats: idiom lists as JSON arrays, corpora as TSV
//! (`source<TAB>target[<TAB>space-separated lemmas]`), labels and scores as
//! headed CSV.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IdiomEntry, IdiomError, TextCorpus, TextPair};

pub fn parse_idioms(text: &str) -> Result<Vec<IdiomEntry>, IdiomError> {
    let entries: Vec<IdiomEntry> = serde_json::from_str(text)?;
    let mut seen = std::collections::BTreeSet::new();
    for e in &entries {
        e.validate()?;
        if !seen.insert(&e.id) {
            return Err(IdiomError::Entry { id: e.id.clone(), msg: "duplicate id".into() });
        }
    }
    Ok(entries)
}

pub fn read_idioms(path: &Path) -> Result<Vec<IdiomEntry>, IdiomError> {
    parse_idioms(&std::fs::read_to_string(path)?)
}

pub fn parse_corpus_tsv(text: &str) -> Result<TextCorpus, IdiomError> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        let fields: Vec<&str> = line.split('\t').collect();
        let mut pair = match fields.as_slice() {
            [s, t] | [s, t, _] => TextPair::new(*s, *t),
            _ => return Err(IdiomError::Parse { line: i + 1, msg: "expected 2 or 3 tab-separated fields".into() }),
        };
        if let [_, _, l] = fields.as_slice() {
            pair.lemmas = Some(l.split_whitespace().map(str::to_owned).collect());
        }
        pairs.push(pair);
    }
    Ok(TextCorpus { pairs })
}

pub fn read_corpus_tsv(path: &Path) -> Result<TextCorpus, IdiomError> {
    parse_corpus_tsv(&std::fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Idiomatic,
    Literal,
    Na,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub pair_index: usize,
    pub idiom_id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub pair_index: usize,
    pub score: f64,
}

fn parse_rows<T: for<'de> Deserialize<'de>>(reader: impl Read) -> Result<Vec<T>, IdiomError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IdiomError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_labels(reader: impl Read) -> Result<Vec<LabelRow>, IdiomError> {
    parse_rows(reader)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, IdiomError> {
    parse_labels(std::fs::File::open(path)?)
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), IdiomError> {
    write_rows(path, rows)
}

pub fn parse_scores(reader: impl Read) -> Result<Vec<ScoreRow>, IdiomError> {
    let rows: Vec<ScoreRow> = parse_rows(reader)?;
    if let Some(r) = rows.iter().find(|r| !r.score.is_finite()) {
        return Err(IdiomError::Invalid(format!("pair {} has a non-finite score", r.pair_index)));
    }
    Ok(rows)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, IdiomError> {
    parse_scores(std::fs::File::open(path)?)
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<(), IdiomError> {
    write_rows(path, rows)
}
