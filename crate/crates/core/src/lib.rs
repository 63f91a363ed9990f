//! Core of the collection search engine: configuration, item ids, the
//! binary embedding store, exact top-k retrieval, and embedding providers.

pub mod config;
pub mod embed;
pub mod error;
pub mod fsutil;
pub mod hash;
pub mod id;
pub mod metadata;
pub mod search;
pub mod store;

pub use config::{load_config, CollectionConfig, CollectionType};
pub use embed::{EmbeddingProvider, ProviderSpec};
pub use error::{ConfigError, EmbedError, IdError, SearchError, StoreError};
pub use fsutil::write_atomic;
pub use id::{CollectionItem, DataLayout, ItemId, ItemKind};
pub use metadata::{load_metadata, Metadata, MetadataTable};
pub use search::{rank_all, score_pair, top_k, Modality, QueryVector, RankedHit, SearchPage};
pub use store::{load_store, save_store, EmbeddingStore};
