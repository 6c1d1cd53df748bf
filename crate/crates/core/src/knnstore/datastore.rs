use std::path::Path;

use half::f16;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::search::{exact_search, Neighbor};
use super::{IndexKind, IvfIndex, KnnConfig, KnnError};
use crate::numerics::{Graph, NodeId};
use crate::synlang::SentencePair;
use crate::transformer::{forward_graph, to_model_ids, Batch, ModelParams};

pub const DATASTORE_MAGIC: &[u8; 8] = b"NCMTKNNS";
const VERSION: u32 = 1;
const BUILD_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatastoreHeader {
    pub n: usize,
    pub d: usize,
    pub model_hash: String,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ivf: Option<IvfHeader>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvfHeader {
    pub lists: usize,
    pub centroid_rows: usize,
}

/// Keys are held as f32 values that are exactly representable in f16, so a
/// saved and reloaded store searches identically.
#[derive(Clone, Debug, PartialEq)]
pub struct Datastore {
    pub d: usize,
    /// `n × d`, row-major.
    pub keys: Vec<f32>,
    /// Target model token id following each key's state.
    pub values: Vec<u32>,
    /// `(sentence index, target position)` of each entry.
    pub provenance: Vec<(u32, u32)>,
    pub model_hash: String,
    pub ivf: Option<IvfIndex>,
}

/// SHA-256 over the model's serialized checkpoint (config and weights).
pub fn model_fingerprint(params: &ModelParams) -> String {
    hex::encode(Sha256::digest(params.to_checkpoint().to_bytes()))
}

fn round_f16(x: f32) -> f32 {
    f16::from_f32(x).to_f32()
}

/// One entry per predicted target position (EOS included), in corpus order:
/// the key is the input of the last decoder layer's feedforward sublayer
/// under teacher forcing and the value is the token predicted there.
pub fn build_datastore(params: &ModelParams, pairs: &[SentencePair]) -> Result<Datastore, KnnError> {
    let d = params.config.d_model;
    let mut ds = Datastore {
        d,
        keys: Vec::new(),
        values: Vec::new(),
        provenance: Vec::new(),
        model_hash: model_fingerprint(params),
        ivf: None,
    };
    for (c, chunk) in pairs.chunks(BUILD_CHUNK).enumerate() {
        let ids: Vec<(Vec<usize>, Vec<usize>)> =
            chunk.iter().map(|p| (to_model_ids(&p.src), to_model_ids(&p.tgt))).collect();
        let batch = Batch::new(&ids);
        let mut g = Graph::<f32>::new();
        let nodes: Vec<NodeId> = params.tensors.iter().map(|t| g.input(t.clone())).collect();
        let out = forward_graph(&mut g, &nodes, params, &batch, None)?;
        let hidden = g.value(out.ffn_input);
        for (b, p) in chunk.iter().enumerate() {
            for pos in 0..=p.tgt.len() {
                let row = b * batch.tgt_len + pos;
                ds.keys.extend(hidden.row(row).iter().map(|&x| round_f16(x)));
                ds.values.push(batch.tgt_out[row] as u32);
                ds.provenance.push(((c * BUILD_CHUNK + b) as u32, pos as u32));
            }
        }
    }
    Ok(ds)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], KnnError> {
    if bytes.len() < n {
        return Err(KnnError::Format("truncated".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

impl Datastore {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn key(&self, i: usize) -> &[f32] {
        &self.keys[i * self.d..(i + 1) * self.d]
    }

    pub fn check_model(&self, params: &ModelParams) -> Result<(), KnnError> {
        let query = model_fingerprint(params);
        if query != self.model_hash {
            return Err(KnnError::HashMismatch { stored: self.model_hash.clone(), query });
        }
        if params.config.d_model != self.d {
            return Err(KnnError::Dimension { stored: self.d, query: params.config.d_model });
        }
        Ok(())
    }

    /// Attaches an IVF index with the given centroid count.
    pub fn build_ivf(&mut self, n_centroids: usize, seed: u64) {
        self.ivf = Some(IvfIndex::build(&self.keys, self.d, n_centroids, seed));
    }

    pub fn search(&self, query: &[f32], cfg: &KnnConfig) -> Result<Vec<Neighbor>, KnnError> {
        if self.is_empty() {
            return Err(KnnError::Empty);
        }
        if query.len() != self.d {
            return Err(KnnError::Dimension { stored: self.d, query: query.len() });
        }
        match cfg.index {
            IndexKind::Exact => Ok(exact_search(&self.keys, self.d, query, cfg.k)),
            IndexKind::Ivf { n_centroids, nprobe } => match &self.ivf {
                Some(ivf) if ivf.n_centroids() == n_centroids.min(self.len()) => {
                    Ok(ivf.search(&self.keys, query, nprobe, cfg.k))
                }
                _ => Err(KnnError::Config(format!("no IVF index with {n_centroids} centroids is attached"))),
            },
        }
    }

    pub fn header(&self) -> DatastoreHeader {
        DatastoreHeader {
            n: self.len(),
            d: self.d,
            model_hash: self.model_hash.clone(),
            dtype: "f16".into(),
            ivf: self.ivf.as_ref().map(|x| IvfHeader {
                lists: x.lists.len(),
                centroid_rows: if self.d == 0 { 0 } else { x.centroids.len() / self.d },
            }),
        }
    }

    /// Magic, u32 version, u64 header length, JSON header, then f16 keys,
    /// u32 values and u64 provenance (`sentence << 32 | position`), all
    /// little-endian. An inverted-file index follows as f32 centroids and
    /// one u32 list id per entry.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(24 + header.len() + self.keys.len() * 2 + self.len() * 12);
        out.extend_from_slice(DATASTORE_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for &k in &self.keys {
            out.extend_from_slice(&f16::from_f32(k).to_le_bytes());
        }
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &(s, p) in &self.provenance {
            out.extend_from_slice(&(((s as u64) << 32) | p as u64).to_le_bytes());
        }
        if let Some(ivf) = &self.ivf {
            for &c in &ivf.centroids {
                out.extend_from_slice(&c.to_le_bytes());
            }
            let mut list_of = vec![0u32; self.len()];
            for (l, members) in ivf.lists.iter().enumerate() {
                for &i in members {
                    list_of[i] = l as u32;
                }
            }
            for l in list_of {
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, KnnError> {
        let b = &mut bytes;
        if take(b, 8)? != DATASTORE_MAGIC {
            return Err(KnnError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(b, 4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(KnnError::Format(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(take(b, 8)?.try_into().expect("8 bytes"));
        let hlen = usize::try_from(hlen).map_err(|_| KnnError::Format("header length overflow".into()))?;
        let header: DatastoreHeader =
            serde_json::from_slice(take(b, hlen)?).map_err(|e| KnnError::Format(format!("header: {e}")))?;
        if header.dtype != "f16" {
            return Err(KnnError::Format(format!("unsupported dtype {}", header.dtype)));
        }
        let (n, d) = (header.n, header.d);
        let key_bytes = n.checked_mul(d).and_then(|x| x.checked_mul(2));
        let ivf_bytes = match header.ivf {
            None => Some(0),
            Some(h) => h
                .centroid_rows
                .checked_mul(d)
                .and_then(|x| x.checked_mul(4))
                .and_then(|x| x.checked_add(n.checked_mul(4)?)),
        };
        let rest = n.checked_mul(12).and_then(|r| r.checked_add(ivf_bytes?));
        match (key_bytes, rest) {
            (Some(k), Some(r)) if k.checked_add(r) == Some(b.len()) => {}
            _ => return Err(KnnError::Format("block sizes do not match the header".into())),
        }
        if d == 0 && n > 0 {
            return Err(KnnError::Format("zero key dimension".into()));
        }
        let keys = take(b, n * d * 2)?.chunks_exact(2).map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32()).collect();
        let values =
            take(b, n * 4)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let provenance = take(b, n * 8)?
            .chunks_exact(8)
            .map(|c| {
                let v = u64::from_le_bytes(c.try_into().expect("8 bytes"));
                ((v >> 32) as u32, v as u32)
            })
            .collect();
        let ivf = match header.ivf {
            None => None,
            Some(h) => {
                if h.lists == 0 || h.centroid_rows > h.lists {
                    return Err(KnnError::Format("inconsistent index header".into()));
                }
                let centroids = take(b, h.centroid_rows * d * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                let mut lists = vec![Vec::new(); h.lists];
                for (i, c) in take(b, n * 4)?.chunks_exact(4).enumerate() {
                    let l = u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize;
                    lists.get_mut(l).ok_or_else(|| KnnError::Format(format!("entry {i} in missing list {l}")))?.push(i);
                }
                Some(IvfIndex { d, centroids, lists })
            }
        };
        Ok(Self { d, keys, values, provenance, model_hash: header.model_hash, ivf })
    }

    pub fn save(&self, path: &Path) -> Result<(), KnnError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KnnError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
