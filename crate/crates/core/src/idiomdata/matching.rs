use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{IdiomEntry, TextCorpus};

/// Maps a token sequence to lemmas, one per token.
pub trait Lemmatizer: Sync {
    fn lemmatize(&self, tokens: &[&str]) -> Result<Vec<String>, String>;
}

/// Lemma = lowercased token. Stands in for a real lemmatizer in tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct LowercaseLemmatizer;

impl Lemmatizer for LowercaseLemmatizer {
    fn lemmatize(&self, tokens: &[&str]) -> Result<Vec<String>, String> {
        Ok(tokens.iter().map(|t| t.to_lowercase()).collect())
    }
}

/// Whitespace tokens with surrounding punctuation stripped; tokens that are
/// pure punctuation are dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    /// Matched pair index → idiom ids in ascending order.
    pub by_pair: BTreeMap<usize, Vec<String>>,
    /// Pairs skipped because lemmatization failed.
    pub skipped: Vec<usize>,
}

impl MatchSet {
    pub fn n_pairs(&self) -> usize {
        self.by_pair.len()
    }

    /// Matched (pair, idiom) events; a pair matching two idioms counts twice.
    pub fn n_events(&self) -> usize {
        self.by_pair.values().map(Vec::len).sum()
    }

    /// Pairs matching `id`, in corpus order.
    pub fn pairs_for(&self, id: &str) -> Vec<usize> {
        self.by_pair.iter().filter(|(_, ids)| ids.iter().any(|i| i == id)).map(|(&p, _)| p).collect()
    }
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

fn sentence_lemmas(pair: &super::TextPair, lemmatizer: &dyn Lemmatizer) -> Result<Vec<String>, String> {
    if let Some(l) = &pair.lemmas {
        return Ok(l.iter().map(|s| s.to_lowercase()).collect());
    }
    let tokens = tokenize(&pair.source);
    let lemmas = lemmatizer.lemmatize(&tokens)?;
    if lemmas.len() != tokens.len() {
        return Err(format!("lemmatizer returned {} lemmas for {} tokens", lemmas.len(), tokens.len()));
    }
    Ok(lemmas)
}

/// Records every idiom whose lemma sequence occurs contiguously in each
/// sentence's lemma sequence. Precomputed lemmas on a pair take precedence
/// over the lemmatizer.
pub fn match_idioms(corpus: &TextCorpus, idioms: &[IdiomEntry], lemmatizer: &dyn Lemmatizer) -> MatchSet {
    let mut sorted: Vec<&IdiomEntry> = idioms.iter().filter(|e| !e.lemmas.is_empty()).collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let patterns: Vec<(&str, Vec<String>)> =
        sorted.iter().map(|e| (e.id.as_str(), e.lemmas.iter().map(|l| l.to_lowercase()).collect())).collect();

    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = corpus.pairs.len().div_ceil(threads).max(256);
    let results: Vec<(usize, Result<Vec<String>, String>)> = std::thread::scope(|s| {
        let handles: Vec<_> = corpus
            .pairs
            .chunks(chunk)
            .enumerate()
            .map(|(c, pairs)| {
                let patterns = &patterns;
                s.spawn(move || {
                    pairs
                        .iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let ids = sentence_lemmas(p, lemmatizer).map(|lemmas| {
                                patterns
                                    .iter()
                                    .filter(|(_, pat)| contains_run(&lemmas, pat))
                                    .map(|(id, _)| (*id).to_owned())
                                    .collect()
                            });
                            (c * chunk + j, ids)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("matching worker panicked")).collect()
    });

    let mut out = MatchSet::default();
    for (i, r) in results {
        match r {
            Ok(ids) if !ids.is_empty() => {
                let mut ids: Vec<String> = ids;
                ids.dedup();
                out.by_pair.insert(i, ids);
            }
            Ok(_) => {}
            Err(e) => {
                log::warn!("skipping pair {i}: {e}");
                out.skipped.push(i);
            }
        }
    }
    out
}
