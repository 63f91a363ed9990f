//! Ingest ledger (`data/embeddings/manifest.json`) that drives resume.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Item id; for an unrenderable PDF, the file's path.
    pub id: String,
    pub source_path: String,
    /// FNV-1a-64 of the source file bytes, as 16 hex digits.
    #[serde(with = "hex_u64")]
    pub content_fingerprint: u64,
    pub status: EntryStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Provider that produced the `done` vectors; reuse requires a match.
    pub model_id: String,
    pub embedding_dim: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Option<Self>, IngestError> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| IngestError::Manifest(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(IngestError::io(path)(e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        dce_core::write_atomic(path, &bytes).map_err(IngestError::io(path))
    }

    /// Entries grouped by source file, in manifest order.
    pub fn by_source(&self) -> HashMap<&str, Vec<&ManifestEntry>> {
        let mut map: HashMap<&str, Vec<&ManifestEntry>> = HashMap::new();
        for entry in &self.entries {
            map.entry(entry.source_path.as_str()).or_default().push(entry);
        }
        map
    }
}

mod hex_u64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{value:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16).map_err(D::Error::custom)
    }
}
