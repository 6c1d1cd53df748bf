use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{IdiomError, Label, LabelRow, MatchSet, ScoreRow, TextCorpus, TextPair};

pub const DEFAULT_SCAN_CAP: usize = 100;

/// Copies scores onto the corpus by pair index.
pub fn attach_scores(corpus: &mut TextCorpus, scores: &[ScoreRow]) -> Result<(), IdiomError> {
    for r in scores {
        let n = corpus.len();
        let p = corpus
            .pairs
            .get_mut(r.pair_index)
            .ok_or_else(|| IdiomError::Invalid(format!("score for pair {} but corpus has {n}", r.pair_index)))?;
        p.score = Some(r.score);
    }
    Ok(())
}

/// Removes the ⌊drop_fraction·N⌋ lowest-scored pairs. Among equal scores the
/// later pair goes first. Returns the kept pairs and their original indices.
pub fn filter_by_scores(corpus: &TextCorpus, drop_fraction: f64) -> Result<(TextCorpus, Vec<usize>), IdiomError> {
    if !(0.0..=1.0).contains(&drop_fraction) {
        return Err(IdiomError::Invalid(format!("drop_fraction {drop_fraction} outside [0, 1]")));
    }
    let scores: Vec<f64> = corpus
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| p.score.filter(|s| s.is_finite()).ok_or(IdiomError::MissingScore(i)))
        .collect::<Result<_, _>>()?;
    let n = scores.len();
    // The nudge keeps products such as 0.29 * 100 from flooring one short.
    let n_drop = ((drop_fraction * n as f64) + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)));
    let dropped: BTreeSet<usize> = order[..n_drop.min(n)].iter().copied().collect();
    let kept: Vec<usize> = (0..n).filter(|i| !dropped.contains(i)).collect();
    let pairs = kept.iter().map(|&i| corpus.pairs[i].clone()).collect();
    Ok((TextCorpus { pairs }, kept))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    pub pair_index: usize,
    pub idiom_id: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSets {
    pub idiomatic: Vec<TestItem>,
    pub literal: Vec<TestItem>,
}

/// For each idiom in id order, scans its first `scan_cap` matches in corpus
/// order and takes up to `take_cap` idiomatic and `take_cap` literal
/// examples. Unlabeled and `na` matches are skipped. A pair enters the output
/// at most once, under the first idiom that takes it.
pub fn build_testsets(matches: &MatchSet, labels: &[LabelRow], scan_cap: usize, take_cap: usize) -> TestSets {
    let label_of: HashMap<(usize, &str), Label> =
        labels.iter().map(|r| ((r.pair_index, r.idiom_id.as_str()), r.label)).collect();
    let ids: BTreeSet<&str> = matches.by_pair.values().flatten().map(String::as_str).collect();
    let mut used = BTreeSet::new();
    let mut out = TestSets::default();
    for id in ids {
        let (mut n_id, mut n_lit) = (0, 0);
        for p in matches.pairs_for(id).into_iter().take(scan_cap) {
            if used.contains(&p) {
                continue;
            }
            let (set, n) = match label_of.get(&(p, id)) {
                Some(Label::Idiomatic) => (&mut out.idiomatic, &mut n_id),
                Some(Label::Literal) => (&mut out.literal, &mut n_lit),
                _ => continue,
            };
            if *n < take_cap {
                *n += 1;
                set.push(TestItem { pair_index: p, idiom_id: id.to_owned() });
                used.insert(p);
            }
        }
    }
    out
}

/// Target length in whitespace tokens.
pub fn target_len(pair: &TextPair) -> usize {
    pair.target.split_whitespace().count()
}

/// Greedy selection without replacement: each reference length in order
/// takes the unused pool entry with the nearest length, earliest index on
/// ties. Returns pool indices aligned with `reference`.
pub fn length_match_indices(pool: &[usize], reference: &[usize]) -> Result<Vec<usize>, IdiomError> {
    let mut by_len: BTreeMap<usize, VecDeque<usize>> = BTreeMap::new();
    for (i, &l) in pool.iter().enumerate() {
        by_len.entry(l).or_default().push_back(i);
    }
    let mut out = Vec::with_capacity(reference.len());
    for &r in reference {
        let below = by_len.range(..=r).next_back().map(|(&l, q)| (r - l, q[0], l));
        let above = by_len.range(r + 1..).next().map(|(&l, q)| (l - r, q[0], l));
        let best = match (below, above) {
            (Some(a), Some(b)) => a.min(b),
            (a, b) => a.or(b).ok_or(IdiomError::PoolExhausted(out.len()))?,
        };
        let q = by_len.get_mut(&best.2).expect("length present");
        out.push(q.pop_front().expect("nonempty queue"));
        if q.is_empty() {
            by_len.remove(&best.2);
        }
    }
    Ok(out)
}

/// Length-matched random set on the target side. The pool must be at least
/// as large as the reference and share no pair with it.
pub fn length_match_random(pool: &[TextPair], reference: &[TextPair]) -> Result<Vec<usize>, IdiomError> {
    if pool.len() < reference.len() {
        return Err(IdiomError::PoolExhausted(pool.len()));
    }
    let refs: BTreeSet<(&str, &str)> = reference.iter().map(|p| (p.source.as_str(), p.target.as_str())).collect();
    if let Some(i) = pool.iter().position(|p| refs.contains(&(p.source.as_str(), p.target.as_str()))) {
        return Err(IdiomError::Invalid(format!("pool pair {i} also appears in the reference set")));
    }
    let pool_lens: Vec<usize> = pool.iter().map(target_len).collect();
    let ref_lens: Vec<usize> = reference.iter().map(target_len).collect();
    length_match_indices(&pool_lens, &ref_lens)
}
