//! Recursive discovery of collection files under `data/raw`.

use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::error::IngestError;

const SUPPORTED_EXTENSIONS: [&str; 6] = ["jpg", "jpeg", "png", "tif", "tiff", "pdf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Image,
    Pdf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    /// Path relative to the raw directory, `/`-separated.
    pub relative: String,
    pub path: PathBuf,
    pub kind: SourceKind,
}

fn is_hidden(name: &std::ffi::OsStr) -> bool {
    name.to_string_lossy().starts_with('.')
}

fn kind_of(path: &Path) -> Option<SourceKind> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !SUPPORTED_EXTENSIONS.contains(&ext.as_str()) {
        return None;
    }
    Some(if ext == "pdf" {
        SourceKind::Pdf
    } else {
        SourceKind::Image
    })
}

/// Supported files under `raw_dir`, sorted byte-wise by relative path.
/// Hidden files and directories are skipped.
pub fn scan_raw(raw_dir: &Path) -> Result<Vec<SourceFile>, IngestError> {
    if !raw_dir.is_dir() {
        return Err(IngestError::MissingRawDir(raw_dir.to_path_buf()));
    }
    let walker = WalkDir::new(raw_dir)
        .follow_links(true)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !is_hidden(e.file_name()));
    let mut files = Vec::new();
    for entry in walker {
        let entry = entry.map_err(|e| IngestError::Walk {
            path: e.path().unwrap_or(raw_dir).to_path_buf(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(kind) = kind_of(entry.path()) else {
            continue;
        };
        let rel = entry
            .path()
            .strip_prefix(raw_dir)
            .expect("walkdir yields paths under its root");
        let relative = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push(SourceFile {
            relative,
            path: entry.into_path(),
            kind,
        });
    }
    files.sort_by(|a, b| a.relative.as_bytes().cmp(b.relative.as_bytes()));
    Ok(files)
}
