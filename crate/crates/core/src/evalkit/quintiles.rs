use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuintileRow {
    /// 1 (least frequent) to 5.
    pub quintile: usize,
    pub idioms: Vec<String>,
    pub n_sentences: usize,
    /// Mean metric over the bucket's sentences; `None` if it has none.
    pub mean: Option<f64>,
}

/// Bucket sizes for `n` items in 5 groups by largest remainder: every group
/// gets `n / 5`, and the `n % 5` leftover items go to the lowest groups.
fn bucket_sizes(n: usize) -> [usize; 5] {
    let mut s = [n / 5; 5];
    for b in s.iter_mut().take(n % 5) {
        *b += 1;
    }
    s
}

/// Ranks idioms by ascending frequency (ties by key), splits them into five
/// near-equal buckets and averages the per-sentence metric in each bucket.
/// With `exclude_bottom` the least frequent bucket is dropped.
pub fn frequency_quintiles(
    frequencies: &[(String, u64)],
    sentence_values: &[(String, f64)],
    exclude_bottom: bool,
) -> Result<Vec<QuintileRow>, EvalError> {
    let mut ranked: Vec<&(String, u64)> = frequencies.iter().collect();
    ranked.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut bucket_of: HashMap<&str, usize> = HashMap::new();
    let mut rows = Vec::with_capacity(5);
    let mut it = ranked.into_iter();
    for (q, size) in bucket_sizes(frequencies.len()).into_iter().enumerate() {
        let members: Vec<&str> = it.by_ref().take(size).map(|(k, _)| k.as_str()).collect();
        for &k in &members {
            if bucket_of.insert(k, q).is_some() {
                return Err(EvalError::Invalid(format!("duplicate idiom key {k:?}")));
            }
        }
        let idioms = members.into_iter().map(String::from).collect();
        rows.push(QuintileRow { quintile: q + 1, idioms, n_sentences: 0, mean: None });
    }
    let mut sums = [0.0f64; 5];
    for (k, v) in sentence_values {
        let q = *bucket_of.get(k.as_str()).ok_or_else(|| EvalError::Invalid(format!("unknown idiom {k:?}")))?;
        sums[q] += v;
        rows[q].n_sentences += 1;
    }
    for (row, s) in rows.iter_mut().zip(sums) {
        row.mean = (row.n_sentences > 0).then(|| s / row.n_sentences as f64);
    }
    if exclude_bottom {
        rows.remove(0);
    }
    Ok(rows)
}
