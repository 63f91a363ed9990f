//! Collection configuration (`config.json`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::id::DataLayout;

pub const DATA_DIR_ENV: &str = "DCE_DATA_DIR";
pub const DEFAULT_MODEL_ID: &str = "openai/clip-vit-base-patch32";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionType {
    Photographs,
    Maps,
    Documents,
}

impl CollectionType {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Photographs => "photographs",
            Self::Maps => "maps",
            Self::Documents => "documents",
        }
    }
}

impl std::fmt::Display for CollectionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CollectionType {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "photographs" => Ok(Self::Photographs),
            "maps" => Ok(Self::Maps),
            "documents" => Ok(Self::Documents),
            other => Err(ConfigError::Invalid {
                field: "collection_type",
                message: format!("unknown collection type {other:?}"),
            }),
        }
    }
}

/// Settings for one collection. Unknown keys in the file are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionConfig {
    pub collection_type: CollectionType,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    pub embedding_dim: usize,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_thumbnail_max_dim")]
    pub thumbnail_max_dim: u32,
    #[serde(default = "default_pdf_render_dpi")]
    pub pdf_render_dpi: u32,
    #[serde(default = "default_max_upload_bytes")]
    pub max_upload_bytes: usize,
    #[serde(default = "default_default_limit")]
    pub default_limit: usize,
    #[serde(default = "default_max_limit")]
    pub max_limit: usize,
    /// Items between store checkpoints during ingest.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Allowed CORS origins for the API. Empty means any origin.
    #[serde(default)]
    pub cors_origins: Vec<String>,
}

fn default_model_id() -> String {
    DEFAULT_MODEL_ID.to_owned()
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
const fn default_port() -> u16 {
    8000
}
const fn default_thumbnail_max_dim() -> u32 {
    512
}
const fn default_pdf_render_dpi() -> u32 {
    150
}
const fn default_max_upload_bytes() -> usize {
    10_485_760
}
const fn default_default_limit() -> usize {
    20
}
const fn default_max_limit() -> usize {
    100
}
const fn default_checkpoint_every() -> usize {
    1000
}

impl CollectionConfig {
    /// A config with every optional field at its default.
    pub fn new(collection_type: CollectionType, embedding_dim: usize) -> Self {
        Self {
            collection_type,
            model_id: default_model_id(),
            embedding_dim,
            data_dir: default_data_dir(),
            port: default_port(),
            thumbnail_max_dim: default_thumbnail_max_dim(),
            pdf_render_dpi: default_pdf_render_dpi(),
            max_upload_bytes: default_max_upload_bytes(),
            default_limit: default_default_limit(),
            max_limit: default_max_limit(),
            checkpoint_every: default_checkpoint_every(),
            cors_origins: Vec::new(),
        }
    }

    /// Parse and validate. Relative paths are left as written.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            let inner = err.into_inner();
            if inner.is_syntax() || inner.is_eof() {
                ConfigError::Json(inner.to_string())
            } else {
                ConfigError::Field {
                    field: path,
                    message: inner.to_string(),
                }
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, message: &str| {
            Err(ConfigError::Invalid {
                field,
                message: message.to_owned(),
            })
        };
        if self.embedding_dim == 0 {
            return invalid("embedding_dim", "must be at least 1");
        }
        if self.port == 0 {
            return invalid("port", "must be in 1..=65535");
        }
        if self.model_id.trim().is_empty() {
            return invalid("model_id", "must not be empty");
        }
        if self.data_dir.as_os_str().is_empty() {
            return invalid("data_dir", "must not be empty");
        }
        if self.thumbnail_max_dim == 0 {
            return invalid("thumbnail_max_dim", "must be at least 1");
        }
        if self.pdf_render_dpi == 0 {
            return invalid("pdf_render_dpi", "must be at least 1");
        }
        if self.max_upload_bytes == 0 {
            return invalid("max_upload_bytes", "must be at least 1");
        }
        if self.max_limit == 0 {
            return invalid("max_limit", "must be at least 1");
        }
        if self.default_limit == 0 || self.default_limit > self.max_limit {
            return invalid("default_limit", "must be in 1..=max_limit");
        }
        if self.checkpoint_every == 0 {
            return invalid("checkpoint_every", "must be at least 1");
        }
        Ok(())
    }

    /// Replace `data_dir` with an override, e.g. from [`DATA_DIR_ENV`].
    pub fn with_data_dir_override(mut self, data_dir: Option<&str>) -> Self {
        if let Some(dir) = data_dir.filter(|d| !d.is_empty()) {
            self.data_dir = PathBuf::from(dir);
        }
        self
    }

    pub fn layout(&self) -> DataLayout {
        DataLayout::new(&self.data_dir)
    }
}

/// Load `config.json`, resolving a relative `data_dir` against the file's
/// directory and honoring the `DCE_DATA_DIR` override.
pub fn load_config(path: &Path) -> Result<CollectionConfig, ConfigError> {
    let env = std::env::var(DATA_DIR_ENV).ok();
    load_config_with_override(path, env.as_deref())
}

pub fn load_config_with_override(
    path: &Path,
    data_dir_override: Option<&str>,
) -> Result<CollectionConfig, ConfigError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => return Err(ConfigError::Missing(path.to_path_buf())),
        Err(source) => {
            return Err(ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut config = CollectionConfig::from_json_str(&text)?;
    if config.data_dir.is_relative() {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            config.data_dir = parent.join(&config.data_dir);
        }
    }
    Ok(config.with_data_dir_override(data_dir_override))
}

/// Write a config atomically.
pub fn save_config(config: &CollectionConfig, path: &Path) -> Result<(), ConfigError> {
    crate::fsutil::write_atomic(path, config.to_json_string().as_bytes()).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}
