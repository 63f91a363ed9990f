//! Persistent embedding index.
//!
//! `embeddings.dce` layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "DCEE" (44 43 45 45)
//!      4     4  u32 version = 1
//!      8     4  u32 dtype code = 1 (float32)
//!     12     8  u64 row count N
//!     20     4  u32 dimension D
//!     24     4  u32 flags (bit 0: rows are L2-normalized)
//!     28 4·N·D  row-major float32 payload
//! ```
//!
//! Row ids live next to it in `item_ids.json`, a JSON array of N strings
//! aligned with the rows.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::StoreError;
use crate::fsutil::write_atomic;
use crate::id::ItemId;

pub const STORE_FILE: &str = "embeddings.dce";
pub const IDS_FILE: &str = "item_ids.json";
pub const MAGIC: [u8; 4] = *b"DCEE";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
pub const FLAG_NORMALIZED: u32 = 1;
pub const HEADER_LEN: usize = 28;
/// Allowed deviation of a row's L2 norm from 1 when flagged normalized.
pub const NORM_TOLERANCE: f32 = 1e-4;

/// N×D float32 matrix with positionally aligned ids.
///
/// Invariants are enforced at construction: ids are valid and pairwise
/// distinct, every value is finite, and when `is_normalized()` every row has
/// unit norm within [`NORM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: Vec<f32>,
    ids: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    normalized: bool,
}

impl EmbeddingStore {
    pub fn empty(dim: usize) -> Result<Self, StoreError> {
        Self::new(dim, Vec::new(), Vec::new(), true)
    }

    /// Build a store from raw parts, checking every invariant.
    pub fn new(dim: usize, ids: Vec<ItemId>, vectors: Vec<f32>, normalized: bool) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        if vectors.len() % dim != 0 {
            return Err(StoreError::Ragged {
                len: vectors.len(),
                dim,
            });
        }
        let rows = vectors.len() / dim;
        if ids.len() != rows {
            return Err(StoreError::IdCount { ids: ids.len(), rows });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), row).is_some() {
                return Err(StoreError::DuplicateId(id.to_string()));
            }
        }
        check_rows(&vectors, dim, 0, normalized)?;
        Ok(Self {
            dim,
            vectors,
            ids,
            index,
            normalized,
        })
    }

    /// Build a store and L2-normalize every row.
    pub fn from_unnormalized(dim: usize, ids: Vec<ItemId>, vectors: Vec<f32>) -> Result<Self, StoreError> {
        let mut store = Self::new(dim, ids, vectors, false)?;
        store.normalize_rows()?;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    /// Row index of `id`, if present.
    pub fn row_of(&self, id: &ItemId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.vectors.chunks_exact(self.dim)
    }

    fn normalize_rows(&mut self) -> Result<(), StoreError> {
        for (row, values) in self.vectors.chunks_exact_mut(self.dim).enumerate() {
            let norm = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(StoreError::ZeroNorm { row });
            }
            for v in values.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Append `new_ids.len()` rows. Existing rows keep their positions.
    pub fn append_rows(mut self, new_ids: Vec<ItemId>, new_vectors: &[f32]) -> Result<Self, StoreError> {
        self.push_rows(new_ids, new_vectors)?;
        Ok(self)
    }

    /// In-place form of [`append_rows`](Self::append_rows). On error the
    /// store is unchanged.
    pub fn push_rows(&mut self, new_ids: Vec<ItemId>, new_vectors: &[f32]) -> Result<(), StoreError> {
        let expected = new_ids.len() * self.dim;
        if new_vectors.len() != expected {
            return Err(StoreError::Ragged {
                len: new_vectors.len(),
                dim: self.dim,
            });
        }
        let mut batch = HashSet::with_capacity(new_ids.len());
        for id in &new_ids {
            if self.index.contains_key(id) || !batch.insert(id) {
                return Err(StoreError::DuplicateId(id.to_string()));
            }
        }
        check_rows(new_vectors, self.dim, self.len(), self.normalized)?;
        for id in new_ids {
            self.index.insert(id.clone(), self.ids.len());
            self.ids.push(id);
        }
        self.vectors.extend_from_slice(new_vectors);
        Ok(())
    }

    /// Serialize the `embeddings.dce` bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.vectors.len() * 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        let flags = if self.normalized { FLAG_NORMALIZED } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn encode_ids(&self) -> Vec<u8> {
        serde_json::to_vec(&self.ids).expect("ids serialize")
    }

    /// Parse both files' contents. Unnormalized stores are normalized.
    pub fn decode(store_bytes: &[u8], ids_bytes: &[u8], expected_dim: Option<usize>) -> Result<Self, StoreError> {
        let header = Header::parse(store_bytes)?;
        if let Some(config) = expected_dim {
            if header.dim != config {
                return Err(StoreError::DimensionMismatch {
                    store: header.dim,
                    config,
                });
            }
        }
        let raw: Vec<String> = serde_json::from_slice(ids_bytes).map_err(|e| StoreError::IdsJson(e.to_string()))?;
        if raw.len() as u64 != header.rows {
            return Err(StoreError::IdCount {
                ids: raw.len(),
                rows: usize::try_from(header.rows).unwrap_or(usize::MAX),
            });
        }
        let ids = raw.iter().map(|s| ItemId::parse(s)).collect::<Result<Vec<_>, _>>()?;
        let vectors: Vec<f32> = store_bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if header.normalized {
            Self::new(header.dim, ids, vectors, true)
        } else {
            Self::from_unnormalized(header.dim, ids, vectors)
        }
    }
}

struct Header {
    rows: u64,
    dim: usize,
    normalized: bool,
}

impl Header {
    fn parse(bytes: &[u8]) -> Result<Self, StoreError> {
        let n = bytes.len().min(4);
        if bytes[..n] != MAGIC[..n] {
            let mut found = [0u8; 4];
            found[..n].copy_from_slice(&bytes[..n]);
            return Err(StoreError::BadMagic { found });
        }
        if bytes.len() < HEADER_LEN {
            return Err(StoreError::TruncatedHeader { len: bytes.len() });
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let dtype = u32_at(8);
        if dtype != DTYPE_F32 {
            return Err(StoreError::UnsupportedDtype(dtype));
        }
        let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let dim = u32_at(20) as usize;
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        let flags = u32_at(24);
        if flags & !FLAG_NORMALIZED != 0 {
            return Err(StoreError::UnknownFlags(flags));
        }
        let expected = HEADER_LEN as u128 + 4 * u128::from(rows) * dim as u128;
        if expected != bytes.len() as u128 {
            return Err(StoreError::PayloadLength {
                expected,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            rows,
            dim,
            normalized: flags & FLAG_NORMALIZED != 0,
        })
    }
}

fn check_rows(vectors: &[f32], dim: usize, first_row: usize, normalized: bool) -> Result<(), StoreError> {
    for (i, row) in vectors.chunks_exact(dim).enumerate() {
        let row_index = first_row + i;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite { row: row_index });
        }
        if normalized {
            let norm = row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt() as f32;
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(StoreError::NotNormalized { row: row_index, norm });
            }
        }
    }
    Ok(())
}

/// Write `embeddings.dce` and `item_ids.json` into `dir`, each atomically.
pub fn save_store(store: &EmbeddingStore, dir: &Path) -> Result<(), StoreError> {
    let io_err = |path: PathBuf| move |source| StoreError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io_err(dir.to_path_buf()))?;
    let ids_path = dir.join(IDS_FILE);
    let store_path = dir.join(STORE_FILE);
    write_atomic(&ids_path, &store.encode_ids()).map_err(io_err(ids_path))?;
    write_atomic(&store_path, &store.encode()).map_err(io_err(store_path))?;
    Ok(())
}

/// Load and validate a store. `expected_dim` is the configured
/// `embedding_dim`; a different stored dimension is an error.
pub fn load_store(dir: &Path, expected_dim: Option<usize>) -> Result<EmbeddingStore, StoreError> {
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                StoreError::MissingFile(path)
            } else {
                StoreError::Io { path, source }
            }
        })
    };
    let store_bytes = read(STORE_FILE)?;
    let ids_bytes = read(IDS_FILE)?;
    EmbeddingStore::decode(&store_bytes, &ids_bytes, expected_dim)
}

pub fn store_exists(dir: &Path) -> bool {
    dir.join(STORE_FILE).is_file() && dir.join(IDS_FILE).is_file()
}
