//! Plain-text helpers. Hypothesis and reference files hold one sentence per
//! line; a line with a tab is read as `source<TAB>target`.

use std::path::Path;

use anyhow::{bail, Context, Result};

use ncmt::synlang::{parse_corpus, ParallelCorpus, Token};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_corpus(path: &Path) -> Result<ParallelCorpus> {
    parse_corpus(&read_text(path)?).with_context(|| format!("parsing corpus {}", path.display()))
}

pub struct Line {
    pub source: Option<Vec<String>>,
    pub tokens: Vec<String>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Lines of a token file; for tab-separated lines `tokens` is the target side.
pub fn read_lines(path: &Path) -> Result<Vec<Line>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| match l.split_once('\t') {
            Some((s, t)) => Line { source: Some(words(s)), tokens: words(t) },
            None => Line { source: None, tokens: words(l) },
        })
        .collect())
}

/// Source sentences from a corpus file or a file of bare source lines.
pub fn read_sources(path: &Path) -> Result<Vec<Vec<Token>>> {
    read_text(path)?
        .lines()
        .enumerate()
        .map(|(i, l)| {
            let src = l.split_once('\t').map_or(l, |(s, _)| s);
            src.split_whitespace()
                .map(|w| w.parse::<Token>().with_context(|| format!("{}:{}: bad token {w:?}", path.display(), i + 1)))
                .collect()
        })
        .collect()
}

pub fn token_lines(sentences: &[Vec<Token>]) -> String {
    let mut s = String::new();
    for toks in sentences {
        let words: Vec<String> = toks.iter().map(u32::to_string).collect();
        s.push_str(&words.join(" "));
        s.push('\n');
    }
    s
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn numeric(tokens: &[String]) -> Option<Vec<Token>> {
    tokens.iter().map(|t| t.parse().ok()).collect()
}

pub fn ensure_same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        bail!("{what}: {a} vs {b} lines");
    }
    Ok(())
}
