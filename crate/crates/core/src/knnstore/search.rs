use std::cmp::Ordering;

use super::{Datastore, KnnConfig, KnnError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Squared Euclidean distance.
    pub distance: f32,
}

pub fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Orders by distance, then by entry index.
pub(crate) fn by_distance(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index))
}

/// Keeps the `k` best of `cands` in ascending order.
pub(crate) fn top_k(mut cands: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    if k == 0 {
        return Vec::new();
    }
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, by_distance);
        cands.truncate(k);
    }
    cands.sort_by(by_distance);
    cands
}

/// Brute-force `k` nearest keys; ties go to the lower entry index.
pub fn exact_search(keys: &[f32], d: usize, query: &[f32], k: usize) -> Vec<Neighbor> {
    let cands = keys
        .chunks_exact(d)
        .enumerate()
        .map(|(index, key)| Neighbor { index, distance: sq_dist(key, query) })
        .collect();
    top_k(cands, k)
}

/// `p(v) ∝ Σ_{retrieved j with value v} exp(−d_j / T)` over `vocab` tokens.
pub fn knn_distribution(query: &[f32], ds: &Datastore, cfg: &KnnConfig, vocab: usize) -> Result<Vec<f32>, KnnError> {
    cfg.validate()?;
    let neighbors = ds.search(query, cfg)?;
    Ok(distribution_from(&neighbors, ds, cfg.temperature, vocab))
}

pub(crate) fn distribution_from(neighbors: &[Neighbor], ds: &Datastore, temperature: f32, vocab: usize) -> Vec<f32> {
    let mut p = vec![0.0f32; vocab];
    // Shifting by the nearest distance leaves the normalized result unchanged
    // and keeps the largest weight at exactly 1.
    let d0 = neighbors.first().map_or(0.0, |n| n.distance);
    let mut total = 0.0f32;
    for n in neighbors {
        let w = (-(n.distance - d0) / temperature).exp();
        p[ds.values[n.index] as usize] += w;
        total += w;
    }
    for x in &mut p {
        *x /= total;
    }
    p
}
