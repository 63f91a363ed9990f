//! Optional per-item metadata (`metadata.json`).

use std::collections::HashMap;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::StoreError;
use crate::id::ItemId;

pub type Metadata = Map<String, Value>;

/// Item id → metadata object. Ids without an entry have empty metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetadataTable {
    entries: HashMap<ItemId, Metadata>,
}

impl MetadataTable {
    pub fn from_json_str(text: &str) -> Result<Self, StoreError> {
        let value: Value = serde_json::from_str(text).map_err(|e| StoreError::Metadata(e.to_string()))?;
        let Value::Object(object) = value else {
            return Err(StoreError::Metadata("top-level value must be a JSON object".into()));
        };
        let mut entries = HashMap::with_capacity(object.len());
        for (key, value) in object {
            let id = ItemId::parse(&key).map_err(|e| StoreError::Metadata(format!("key {key:?}: {e}")))?;
            let Value::Object(fields) = value else {
                return Err(StoreError::Metadata(format!("entry for {key:?} must be a JSON object")));
            };
            entries.insert(id, fields);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: &ItemId) -> Option<&Metadata> {
        self.entries.get(id)
    }

    pub fn get_or_empty(&self, id: &ItemId) -> Metadata {
        self.entries.get(id).cloned().unwrap_or_default()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: ItemId, metadata: Metadata) {
        self.entries.insert(id, metadata);
    }
}

/// Missing file → empty table.
pub fn load_metadata(path: &Path) -> Result<MetadataTable, StoreError> {
    match std::fs::read_to_string(path) {
        Ok(text) => MetadataTable::from_json_str(&text),
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => Ok(MetadataTable::default()),
        Err(source) => Err(StoreError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}
