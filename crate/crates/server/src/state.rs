use std::sync::{Arc, OnceLock};

use dce_core::{
    load_metadata, load_store, CollectionConfig, DataLayout, EmbeddingProvider, EmbeddingStore, MetadataTable,
    StoreError,
};

use crate::error::ApiError;

/// The searchable collection, immutable once loaded.
#[derive(Debug)]
pub struct Collection {
    pub store: EmbeddingStore,
    pub metadata: MetadataTable,
}

impl Collection {
    pub fn new(store: EmbeddingStore, metadata: MetadataTable) -> Self {
        Self { store, metadata }
    }

    /// Read the store and metadata named by `config`. A missing
    /// `metadata.json` yields an empty table.
    pub fn load(config: &CollectionConfig) -> Result<Self, StoreError> {
        let layout = config.layout();
        let store = load_store(&layout.embeddings_dir(), Some(config.embedding_dim))?;
        let metadata = load_metadata(&layout.metadata_path())?;
        Ok(Self { store, metadata })
    }
}

pub struct AppState {
    pub config: CollectionConfig,
    pub layout: DataLayout,
    pub provider: Arc<dyn EmbeddingProvider>,
    collection: OnceLock<Arc<Collection>>,
}

impl AppState {
    pub fn new(config: CollectionConfig, provider: Arc<dyn EmbeddingProvider>) -> Arc<Self> {
        let layout = config.layout();
        Arc::new(Self {
            config,
            layout,
            provider,
            collection: OnceLock::new(),
        })
    }

    /// Open the gate. Later calls are ignored.
    pub fn install(&self, collection: Collection) {
        if self.collection.set(Arc::new(collection)).is_err() {
            tracing::warn!("collection already installed; ignoring reload");
        }
    }

    pub fn is_ready(&self) -> bool {
        self.collection.get().is_some()
    }

    pub(crate) fn collection(&self) -> Result<Arc<Collection>, ApiError> {
        self.collection.get().cloned().ok_or_else(ApiError::starting)
    }
}
