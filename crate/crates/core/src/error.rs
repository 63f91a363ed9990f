use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdError {
    #[error("item id must not be empty")]
    Empty,
    #[error("item id {0:?} contains a `.` or `..` segment")]
    Traversal(String),
    #[error("item id {0:?} is absolute")]
    Absolute(String),
    #[error("item id {0:?} contains an empty path segment")]
    EmptySegment(String),
    #[error("item id contains a NUL byte")]
    Nul,
    #[error("item id {0:?} contains a backslash")]
    Backslash(String),
    #[error("page numbers start at 1 (got 0 for {0:?})")]
    ZeroPage(String),
    #[error("item id {0:?} has a malformed `#page=` suffix")]
    BadPageSuffix(String),
    #[error("path {0:?} contains the reserved `#page=` marker")]
    ReservedMarker(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} not found")]
    Missing(PathBuf),
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config JSON: {0}")]
    Json(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing store file {0}")]
    MissingFile(PathBuf),
    #[error("bad magic {found:02x?} (expected \"DCEE\")")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("unknown flag bits {0:#x}")]
    UnknownFlags(u32),
    #[error("file too short for header: {len} bytes")]
    TruncatedHeader { len: usize },
    #[error("payload length mismatch: header implies {expected} bytes, file has {actual}")]
    PayloadLength { expected: u128, actual: usize },
    #[error("store dimension must be at least 1")]
    ZeroDimension,
    #[error("vector data length {len} is not a multiple of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("id count {ids} does not match row count {rows}")]
    IdCount { ids: usize, rows: usize },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("invalid item id: {0}")]
    InvalidId(#[from] IdError),
    #[error("store dimension {store} does not match configured embedding_dim {config}")]
    DimensionMismatch { store: usize, config: usize },
    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("row {row} is flagged normalized but has norm {norm}")]
    NotNormalized { row: usize, norm: f32 },
    #[error("malformed ids file: {0}")]
    IdsJson(String),
    #[error("malformed metadata: {0}")]
    Metadata(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("query dimension {query} does not match store dimension {store}")]
    DimensionMismatch { query: usize, store: usize },
    #[error("limit must be in 1..={max} (got {got})")]
    Limit { got: usize, max: usize },
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("query vector contains a non-finite value")]
    NonFiniteQuery,
    #[error("query vector is not unit length (norm {0})")]
    NotUnit(f32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("query text is empty")]
    EmptyText,
    #[error("image input is empty")]
    EmptyImage,
    #[error("embedding dimension must be at least 1")]
    ZeroDimension,
    #[error("generated vector has zero norm")]
    ZeroNorm,
    #[error("provider dimension {provider} does not match configured embedding_dim {expected}")]
    DimensionMismatch { provider: usize, expected: usize },
    #[error("provider returned a non-unit or non-finite vector")]
    BadVector,
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("provider protocol error: {message} (line: {line:?})")]
    Protocol { message: String, line: String },
    #[error("provider rejected input: {0}")]
    Rejected(String),
}

impl EmbedError {
    /// True when the failure lies with the input rather than the provider.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Self::EmptyText | Self::EmptyImage | Self::Rejected(_))
    }
}
