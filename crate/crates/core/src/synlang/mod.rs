//! Synthetic source/target languages with a single non-compositional rule.
//!
//! Every source token translates to itself plus a fixed shift, except the
//! pattern `noncomp_src`, which translates as a unit to `noncomp_tgt`. An
//! optional canary token marks pattern occurrences and has no translation.

mod corpus;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{parse_corpus, read_corpus, write_corpus, ParallelCorpus, SentencePair};

pub type Token = u32;

#[derive(Debug, Error)]
pub enum SynLangError {
    #[error("token {0} is not in the source vocabulary")]
    UnknownToken(Token),
    #[error("invalid language spec: {0}")]
    Spec(String),
    #[error("infeasible corpus config: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynLangSpec {
    pub src_vocab: Vec<Token>,
    pub tgt_vocab: Vec<Token>,
    pub shift: Token,
    pub noncomp_src: Vec<Token>,
    pub noncomp_tgt: Vec<Token>,
    pub canary: Token,
    pub max_len: usize,
}

impl Default for SynLangSpec {
    fn default() -> Self {
        Self {
            src_vocab: (0..10).collect(),
            tgt_vocab: (10..20).collect(),
            shift: 10,
            noncomp_src: vec![0, 1],
            noncomp_tgt: vec![12],
            canary: 11,
            max_len: 6,
        }
    }
}

impl SynLangSpec {
    pub fn validate(&self) -> Result<(), SynLangError> {
        let bad = |m: String| Err(SynLangError::Spec(m));
        if self.src_vocab.is_empty() {
            return bad("empty source vocabulary".into());
        }
        let src: BTreeSet<_> = self.src_vocab.iter().collect();
        let tgt: BTreeSet<_> = self.tgt_vocab.iter().collect();
        if src.len() != self.src_vocab.len() || tgt.len() != self.tgt_vocab.len() {
            return bad("duplicate vocabulary entries".into());
        }
        for &t in &self.src_vocab {
            match t.checked_add(self.shift) {
                Some(s) if tgt.contains(&s) => {}
                _ => return bad(format!("source token {t} shifts outside the target vocabulary")),
            }
        }
        if self.noncomp_src.is_empty() || self.noncomp_src.iter().any(|t| !src.contains(t)) {
            return bad("pattern must be a nonempty sequence of source tokens".into());
        }
        if self.noncomp_tgt.iter().any(|t| !tgt.contains(t)) {
            return bad("pattern translation must use target tokens".into());
        }
        let literal: Vec<Token> = self.noncomp_src.iter().map(|t| t + self.shift).collect();
        if literal == self.noncomp_tgt {
            return bad("pattern translation equals its literal translation".into());
        }
        if src.contains(&self.canary) {
            return bad(format!("canary {} collides with the source vocabulary", self.canary));
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        Ok(())
    }

    fn pattern_at(&self, src: &[Token], i: usize) -> bool {
        src[i..].starts_with(&self.noncomp_src)
    }

    /// Largest raw token id on either side.
    pub fn max_token(&self) -> Token {
        let s = self.src_vocab.iter().copied().chain([self.canary]).max().unwrap_or(0);
        let t = self.tgt_vocab.iter().copied().max().unwrap_or(0);
        s.max(t)
    }
}

/// Ground-truth translation: leftmost non-overlapping pattern matches emit
/// `noncomp_tgt`, the canary emits nothing, anything else is shifted.
pub fn oracle_translate(src: &[Token], spec: &SynLangSpec) -> Result<Vec<Token>, SynLangError> {
    let mut out = Vec::with_capacity(src.len());
    let mut i = 0;
    while i < src.len() {
        if spec.pattern_at(src, i) {
            out.extend_from_slice(&spec.noncomp_tgt);
            i += spec.noncomp_src.len();
            continue;
        }
        let t = src[i];
        if t == spec.canary {
        } else if spec.src_vocab.contains(&t) {
            out.push(t + spec.shift);
        } else {
            return Err(SynLangError::UnknownToken(t));
        }
        i += 1;
    }
    Ok(out)
}

/// Leftmost non-overlapping occurrences of the pattern.
pub fn pattern_count(src: &[Token], spec: &SynLangSpec) -> usize {
    let mut n = 0;
    let mut i = 0;
    while i < src.len() {
        if spec.pattern_at(src, i) {
            n += 1;
            i += spec.noncomp_src.len();
        } else {
            i += 1;
        }
    }
    n
}

pub fn is_noncompositional(src: &[Token], spec: &SynLangSpec) -> bool {
    pattern_count(src, spec) > 0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynCorpusConfig {
    pub n_sentences: usize,
    pub n_noncomp: usize,
    #[serde(default)]
    pub informative: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
}

fn default_min_len() -> usize {
    1
}

impl SynCorpusConfig {
    pub fn new(n_sentences: usize, n_noncomp: usize, informative: bool, seed: u64) -> Self {
        Self { n_sentences, n_noncomp, informative, seed, min_len: 1 }
    }
}

const MAX_ATTEMPTS: usize = 10_000;

fn check_feasible(config: &SynCorpusConfig, spec: &SynLangSpec) -> Result<(), SynLangError> {
    spec.validate()?;
    let bad = |m: String| Err(SynLangError::Config(m));
    if config.n_noncomp > config.n_sentences {
        return bad(format!("n_noncomp {} exceeds n_sentences {}", config.n_noncomp, config.n_sentences));
    }
    if config.min_len == 0 || config.min_len > spec.max_len {
        return bad(format!("min_len {} must lie in 1..={}", config.min_len, spec.max_len));
    }
    let needed = spec.noncomp_src.len() + usize::from(config.informative);
    if config.n_noncomp > 0 && spec.max_len < needed {
        return bad(format!("max_len {} cannot hold the pattern (needs {needed})", spec.max_len));
    }
    // With a one-token vocabulary every long enough sentence repeats the pattern.
    let free_exists = spec.src_vocab.len() > 1 || config.min_len < spec.noncomp_src.len();
    if config.n_sentences > config.n_noncomp && !free_exists {
        return bad("no pattern-free sentence exists for this vocabulary".into());
    }
    Ok(())
}

fn random_sentence(rng: &mut ChaCha8Rng, spec: &SynLangSpec, len: usize) -> Vec<Token> {
    (0..len).map(|_| *spec.src_vocab.choose(rng).expect("nonempty vocab")).collect()
}

fn pattern_free(
    rng: &mut ChaCha8Rng,
    config: &SynCorpusConfig,
    spec: &SynLangSpec,
) -> Result<Vec<Token>, SynLangError> {
    for _ in 0..MAX_ATTEMPTS {
        let len = rng.gen_range(config.min_len..=spec.max_len);
        let s = random_sentence(rng, spec, len);
        if pattern_count(&s, spec) == 0 {
            return Ok(s);
        }
    }
    Err(SynLangError::Config("could not sample a pattern-free sentence".into()))
}

fn pattern_bearing(
    rng: &mut ChaCha8Rng,
    config: &SynCorpusConfig,
    spec: &SynLangSpec,
) -> Result<Vec<Token>, SynLangError> {
    let unit: Vec<Token> = if config.informative {
        std::iter::once(spec.canary).chain(spec.noncomp_src.iter().copied()).collect()
    } else {
        spec.noncomp_src.clone()
    };
    let lo = config.min_len.max(unit.len());
    for _ in 0..MAX_ATTEMPTS {
        let len = rng.gen_range(lo..=spec.max_len);
        let start = rng.gen_range(0..=len - unit.len());
        let mut s = random_sentence(rng, spec, len - unit.len());
        s.splice(start..start, unit.iter().copied());
        if pattern_count(&s, spec) == 1 {
            return Ok(s);
        }
    }
    Err(SynLangError::Config("could not sample a sentence with exactly one pattern".into()))
}

/// Seeded corpus with exactly `n_noncomp` pattern-bearing sources (one
/// occurrence each) and pattern-free remaining sources, in shuffled order.
pub fn generate_corpus(config: &SynCorpusConfig, spec: &SynLangSpec) -> Result<ParallelCorpus, SynLangError> {
    check_feasible(config, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sources = Vec::with_capacity(config.n_sentences);
    for _ in 0..config.n_noncomp {
        sources.push(pattern_bearing(&mut rng, config, spec)?);
    }
    for _ in config.n_noncomp..config.n_sentences {
        sources.push(pattern_free(&mut rng, config, spec)?);
    }
    sources.shuffle(&mut rng);
    let pairs = sources
        .into_iter()
        .map(|src| {
            let tgt = oracle_translate(&src, spec)?;
            Ok(SentencePair { src, tgt })
        })
        .collect::<Result<Vec<_>, SynLangError>>()?;
    Ok(ParallelCorpus { pairs })
}
