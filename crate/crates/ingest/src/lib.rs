//! Collection ingest: discover files under `data/raw`, render PDF pages,
//! write thumbnails, embed every item and persist a resumable store.

pub mod decode;
pub mod error;
pub mod manifest;
pub mod pdf;
pub mod pipeline;
pub mod report;
pub mod scan;
pub mod thumbnail;

#[doc(hidden)]
pub mod fixtures;

pub use error::{IngestError, ItemError};
pub use manifest::{EntryStatus, Manifest, ManifestEntry};
pub use pipeline::{run_ingest, IngestOptions, DEFAULT_BATCH};
pub use report::{Failure, IngestReport, Stage, StageTimes};
pub use scan::{scan_raw, SourceFile, SourceKind};
