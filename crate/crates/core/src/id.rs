//! Item identifiers and the on-disk collection layout.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::IdError;

const PAGE_MARKER: &str = "#page=";

/// Identifier of one searchable unit.
///
/// A plain image is identified by its path relative to `data/raw`, with `/`
/// separators. A PDF page appends `#page=<n>` (1-based) to its file's path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ItemId(String);

impl ItemId {
    /// Build an id from a path relative to the raw directory.
    pub fn new(relative_path: &str, page: Option<u32>) -> Result<Self, IdError> {
        let normalized = relative_path.replace('\\', "/");
        if normalized.contains(PAGE_MARKER) {
            return Err(IdError::ReservedMarker(relative_path.to_owned()));
        }
        validate_path(&normalized)?;
        let value = match page {
            None => normalized,
            Some(0) => return Err(IdError::ZeroPage(relative_path.to_owned())),
            Some(n) => format!("{normalized}{PAGE_MARKER}{n}"),
        };
        Ok(Self(value))
    }

    /// Validate an id string produced elsewhere (ids file, URL, metadata key).
    pub fn parse(value: &str) -> Result<Self, IdError> {
        let (path, page) = split_page(value)?;
        if value.contains('\\') {
            return Err(IdError::Backslash(value.to_owned()));
        }
        if path.contains(PAGE_MARKER) {
            return Err(IdError::ReservedMarker(value.to_owned()));
        }
        validate_path(path)?;
        if page == Some(0) {
            return Err(IdError::ZeroPage(value.to_owned()));
        }
        Ok(Self(value.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The source file path, without any page suffix.
    pub fn relative_path(&self) -> &str {
        match self.0.rfind(PAGE_MARKER) {
            Some(pos) => &self.0[..pos],
            None => &self.0,
        }
    }

    pub fn page(&self) -> Option<u32> {
        self.0
            .rfind(PAGE_MARKER)
            .and_then(|pos| self.0[pos + PAGE_MARKER.len()..].parse().ok())
    }

    pub fn kind(&self) -> ItemKind {
        if self.page().is_some() {
            ItemKind::PdfPage
        } else {
            ItemKind::Image
        }
    }
}

fn split_page(value: &str) -> Result<(&str, Option<u32>), IdError> {
    let Some(pos) = value.rfind(PAGE_MARKER) else {
        return Ok((value, None));
    };
    let digits = &value[pos + PAGE_MARKER.len()..];
    let canonical = !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) && !digits.starts_with('0');
    let page = digits
        .parse::<u32>()
        .ok()
        .filter(|_| canonical)
        .ok_or_else(|| IdError::BadPageSuffix(value.to_owned()))?;
    Ok((&value[..pos], Some(page)))
}

fn validate_path(path: &str) -> Result<(), IdError> {
    if path.is_empty() {
        return Err(IdError::Empty);
    }
    if path.starts_with('/') {
        return Err(IdError::Absolute(path.to_owned()));
    }
    if path.contains('\0') {
        return Err(IdError::Nul);
    }
    if path.split('/').any(|seg| seg == ".." || seg == ".") {
        return Err(IdError::Traversal(path.to_owned()));
    }
    if path.split('/').any(str::is_empty) {
        return Err(IdError::EmptySegment(path.to_owned()));
    }
    Ok(())
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ItemId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ItemId {
    type Error = IdError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<ItemId> for String {
    fn from(id: ItemId) -> Self {
        id.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Image,
    PdfPage,
}

/// The `data/{raw,processed,thumbnails,embeddings}` directory contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataLayout {
    root: PathBuf,
}

impl DataLayout {
    pub const SUBDIRS: [&'static str; 4] = ["raw", "processed", "thumbnails", "embeddings"];

    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn raw_dir(&self) -> PathBuf {
        self.root.join("raw")
    }

    pub fn processed_dir(&self) -> PathBuf {
        self.root.join("processed")
    }

    pub fn thumbnails_dir(&self) -> PathBuf {
        self.root.join("thumbnails")
    }

    pub fn embeddings_dir(&self) -> PathBuf {
        self.root.join("embeddings")
    }

    pub fn metadata_path(&self) -> PathBuf {
        self.embeddings_dir().join("metadata.json")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.embeddings_dir().join("manifest.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.embeddings_dir().join("ingest_report.json")
    }

    pub fn source_path(&self, id: &ItemId) -> PathBuf {
        join_relative(&self.raw_dir(), id.relative_path())
    }

    /// Rendered page image for a PDF page id.
    pub fn page_image_path(&self, id: &ItemId) -> Option<PathBuf> {
        let page = id.page()?;
        let name = format!("{}__page_{page}.png", id.relative_path());
        Some(join_relative(&self.processed_dir(), &name))
    }

    pub fn thumbnail_path(&self, id: &ItemId) -> PathBuf {
        let name = match id.page() {
            Some(page) => format!("{}__page_{page}.jpg", id.relative_path()),
            None => format!("{}.jpg", id.relative_path()),
        };
        join_relative(&self.thumbnails_dir(), &name)
    }

    /// Full-resolution asset shown in the lightbox.
    pub fn display_path(&self, id: &ItemId) -> PathBuf {
        self.page_image_path(id).unwrap_or_else(|| self.source_path(id))
    }

    pub fn item(&self, id: ItemId, metadata: serde_json::Map<String, serde_json::Value>) -> CollectionItem {
        CollectionItem {
            source_path: self.source_path(&id),
            kind: id.kind(),
            page_number: id.page(),
            thumbnail_path: self.thumbnail_path(&id),
            display_path: self.display_path(&id),
            id,
            metadata,
        }
    }
}

fn join_relative(base: &Path, relative: &str) -> PathBuf {
    relative.split('/').fold(base.to_path_buf(), |acc, seg| acc.join(seg))
}

/// One searchable unit: an image, or one page of a PDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectionItem {
    pub id: ItemId,
    pub source_path: PathBuf,
    pub kind: ItemKind,
    pub page_number: Option<u32>,
    pub thumbnail_path: PathBuf,
    pub display_path: PathBuf,
    pub metadata: serde_json::Map<String, serde_json::Value>,
}
