use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::search::{exact_search, sq_dist, top_k, Neighbor};

/// Inverted-file index: k-means centroids and the entries assigned to each.
#[derive(Clone, Debug, PartialEq)]
pub struct IvfIndex {
    pub d: usize,
    pub centroids: Vec<f32>,
    pub lists: Vec<Vec<usize>>,
}

pub const KMEANS_ITERATIONS: usize = 20;

fn nearest_centroid(centroids: &[f32], d: usize, x: &[f32]) -> usize {
    exact_search(centroids, d, x, 1)[0].index
}

impl IvfIndex {
    /// Seeded Lloyd k-means with a fixed iteration count. Initial centroids
    /// are distinct keys sampled without replacement; an emptied cluster
    /// keeps its previous centroid.
    pub fn build(keys: &[f32], d: usize, n_centroids: usize, seed: u64) -> Self {
        let n = keys.len() / d;
        let c = n_centroids.clamp(1, n.max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids: Vec<f32> = Vec::with_capacity(c * d);
        for i in sample(&mut rng, n, c.min(n)).into_iter() {
            centroids.extend_from_slice(&keys[i * d..(i + 1) * d]);
        }
        let mut assign = vec![0usize; n];
        for _ in 0..KMEANS_ITERATIONS {
            for (i, x) in keys.chunks_exact(d).enumerate() {
                assign[i] = nearest_centroid(&centroids, d, x);
            }
            let mut sums = vec![0.0f64; c * d];
            let mut counts = vec![0usize; c];
            for (i, x) in keys.chunks_exact(d).enumerate() {
                counts[assign[i]] += 1;
                for (s, &v) in sums[assign[i] * d..(assign[i] + 1) * d].iter_mut().zip(x) {
                    *s += v as f64;
                }
            }
            for j in 0..c {
                if counts[j] > 0 {
                    for t in 0..d {
                        centroids[j * d + t] = (sums[j * d + t] / counts[j] as f64) as f32;
                    }
                }
            }
        }
        let mut lists = vec![Vec::new(); c];
        for (i, x) in keys.chunks_exact(d).enumerate() {
            lists[nearest_centroid(&centroids, d, x)].push(i);
        }
        Self { d, centroids, lists }
    }

    pub fn n_centroids(&self) -> usize {
        self.lists.len()
    }

    /// Scans the lists of the `nprobe` centroids nearest to `query`.
    pub fn search(&self, keys: &[f32], query: &[f32], nprobe: usize, k: usize) -> Vec<Neighbor> {
        let d = self.d;
        let probes = exact_search(&self.centroids, d, query, nprobe.max(1));
        let mut cands = Vec::new();
        for p in probes {
            for &i in &self.lists[p.index] {
                cands.push(Neighbor { index: i, distance: sq_dist(&keys[i * d..(i + 1) * d], query) });
            }
        }
        top_k(cands, k)
    }
}
