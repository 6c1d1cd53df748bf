//! Parallel corpus and its text form: one pair per line, source and target
//! token ids separated by a tab, tokens separated by single spaces.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SynLangError, Token};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub src: Vec<Token>,
    pub tgt: Vec<Token>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pairs {
            push_tokens(&mut s, &p.src);
            s.push('\t');
            push_tokens(&mut s, &p.tgt);
            s.push('\n');
        }
        s
    }
}

fn push_tokens(s: &mut String, toks: &[Token]) {
    for (i, t) in toks.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{t}").expect("writing to a String");
    }
}

fn parse_side(field: &str, line: usize) -> Result<Vec<Token>, SynLangError> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(' ')
        .map(|w| w.parse::<Token>().map_err(|e| SynLangError::Parse { line, msg: format!("bad token {w:?}: {e}") }))
        .collect()
}

fn parse_line(text: &str, line: usize) -> Result<SentencePair, SynLangError> {
    let mut fields = text.split('\t');
    let (Some(src), Some(tgt), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(SynLangError::Parse { line, msg: "expected exactly one tab".into() });
    };
    Ok(SentencePair { src: parse_side(src, line)?, tgt: parse_side(tgt, line)? })
}

/// Parses corpus text. A trailing newline is optional and `\r\n` is accepted.
pub fn parse_corpus(text: &str) -> Result<ParallelCorpus, SynLangError> {
    let pairs = text
        .lines()
        .enumerate()
        .map(|(i, l)| parse_line(l.strip_suffix('\r').unwrap_or(l), i + 1))
        .collect::<Result<_, _>>()?;
    Ok(ParallelCorpus { pairs })
}

pub fn read_corpus(path: &Path) -> Result<ParallelCorpus, SynLangError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        pairs.push(parse_line(line.strip_suffix('\r').unwrap_or(&line), i + 1)?);
    }
    Ok(ParallelCorpus { pairs })
}

pub fn write_corpus(path: &Path, corpus: &ParallelCorpus) -> Result<(), SynLangError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(corpus.to_text().as_bytes())?;
    f.flush()?;
    Ok(())
}
