//! kNN-MT: a datastore of decoder states and their next target tokens,
//! exact and inverted-file nearest-neighbor search, the retrieval
//! distribution and decoding with it mixed into the model distribution.

mod datastore;
mod decode;
mod grid;
mod ivf;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transformer::ModelError;

pub use datastore::{build_datastore, model_fingerprint, Datastore, DatastoreHeader, IvfHeader, DATASTORE_MAGIC};
pub use decode::{interpolated_decode, interpolated_decode_batch, KnnScorer};
pub use grid::{grid_search, GridResult, GridRow, KnnGrid};
pub use ivf::IvfIndex;
pub use search::{exact_search, knn_distribution, sq_dist, Neighbor};

#[derive(Debug, Error)]
pub enum KnnError {
    #[error("datastore is empty")]
    Empty,
    #[error("datastore was built for model {stored}, not {query}")]
    HashMismatch { stored: String, query: String },
    #[error("dimension mismatch: datastore {stored}, query {query}")]
    Dimension { stored: usize, query: usize },
    #[error("invalid kNN config: {0}")]
    Config(String),
    #[error("datastore file: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] crate::evalkit::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Exact,
    Ivf { n_centroids: usize, nprobe: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub lambda: f32,
    pub temperature: f32,
    pub k: usize,
    pub index: IndexKind,
}

impl KnnConfig {
    pub fn exact(lambda: f32, temperature: f32, k: usize) -> Self {
        Self { lambda, temperature, k, index: IndexKind::Exact }
    }

    pub fn validate(&self) -> Result<(), KnnError> {
        let bad = |m: &str| Err(KnnError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if let IndexKind::Ivf { n_centroids, nprobe } = self.index {
            if n_centroids == 0 || nprobe == 0 || nprobe > n_centroids {
                return bad("need 1 <= nprobe <= n_centroids");
            }
        }
        Ok(())
    }
}

/// Default centroid count: one per 512 entries, at least one.
pub fn default_centroids(n: usize) -> usize {
    (n / 512).max(1)
}
