//! The ingest run: scan, render, thumbnail, embed, persist.

use std::collections::HashMap;
use std::io::Cursor;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use dce_core::hash::fnv1a64;
use dce_core::store::store_exists;
use dce_core::{
    load_store, save_store, write_atomic, CollectionConfig, DataLayout, EmbedError, EmbeddingProvider, EmbeddingStore,
    ItemId,
};
use image::{DynamicImage, ImageFormat};
use rayon::prelude::*;

use crate::decode::decode_image;
use crate::error::{IngestError, ItemError};
use crate::manifest::{EntryStatus, Manifest, ManifestEntry};
use crate::pdf;
use crate::report::{Failure, IngestReport, Stage, StageTimes};
use crate::scan::{scan_raw, SourceFile, SourceKind};
use crate::thumbnail::make_thumbnail;

pub const DEFAULT_BATCH: usize = 64;

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Worker threads for decode, render and thumbnail work. `None` uses
    /// the global rayon pool.
    pub workers: Option<usize>,
    /// Sources handed to the workers at once; 0 means [`DEFAULT_BATCH`].
    pub batch_size: usize,
    /// When set, the run stops at the next batch boundary, writes a
    /// checkpoint and reports `interrupted`.
    pub cancel: Option<Arc<AtomicBool>>,
}

struct Row {
    id: ItemId,
    vector: Vec<f32>,
}

enum Stop {
    Item(ItemError),
    /// The provider itself is gone; continuing would fail every item.
    Fatal(EmbedError),
}

impl From<ItemError> for Stop {
    fn from(e: ItemError) -> Self {
        Stop::Item(e)
    }
}

fn item_err(stage: Stage) -> impl FnOnce(String) -> Stop {
    move |message| Stop::Item(ItemError { stage, message })
}

#[derive(Default)]
struct Outcome {
    fingerprint: u64,
    rows: Vec<Row>,
    failure: Option<ItemError>,
    fatal: Option<EmbedError>,
    reused: bool,
    times: StageTimes,
}

/// Vectors and manifest from the last run, used to skip unchanged sources.
struct Previous {
    store: EmbeddingStore,
    by_source: HashMap<String, Vec<ManifestEntry>>,
}

struct Context<'a> {
    layout: DataLayout,
    config: &'a CollectionConfig,
    provider: &'a dyn EmbeddingProvider,
    previous: Option<Previous>,
}

impl Context<'_> {
    /// Rows carried over for `src` if nothing about it changed.
    fn reusable(&self, src: &SourceFile, fingerprint: Option<u64>) -> Option<Vec<Row>> {
        let prev = self.previous.as_ref()?;
        let entries = prev.by_source.get(&src.relative)?;
        if entries.is_empty() {
            return None;
        }
        let mut rows = Vec::with_capacity(entries.len());
        for entry in entries {
            if entry.status != EntryStatus::Done {
                return None;
            }
            if fingerprint.is_some_and(|f| f != entry.content_fingerprint) {
                return None;
            }
            let id = ItemId::parse(&entry.id).ok()?;
            let row = prev.store.row_of(&id)?;
            if !self.layout.thumbnail_path(&id).is_file() || !self.layout.display_path(&id).is_file() {
                return None;
            }
            rows.push(Row {
                id,
                vector: prev.store.row(row).to_vec(),
            });
        }
        Some(rows)
    }

    fn embed(&self, bytes: &[u8], times: &mut StageTimes) -> Result<Vec<f32>, Stop> {
        let start = Instant::now();
        let result = self.provider.embed_image(bytes);
        times.add(Stage::Embed, start.elapsed());
        result.map_err(|e| match e {
            EmbedError::Unavailable(_) | EmbedError::Timeout(_) => Stop::Fatal(e),
            other => Stop::Item(ItemError::new(Stage::Embed, other)),
        })
    }

    fn process(&self, src: &SourceFile) -> Outcome {
        let mut out = Outcome::default();
        let start = Instant::now();
        let bytes = match std::fs::read(&src.path) {
            Ok(bytes) => bytes,
            Err(e) => {
                out.times.add(Stage::Decode, start.elapsed());
                out.failure = Some(ItemError::new(Stage::Decode, format!("read failed: {e}")));
                return out;
            }
        };
        out.times.add(Stage::Decode, start.elapsed());
        out.fingerprint = fnv1a64(&bytes);
        if let Some(rows) = self.reusable(src, Some(out.fingerprint)) {
            out.rows = rows;
            out.reused = true;
            return out;
        }

        let mut times = StageTimes::default();
        let result = catch_unwind(AssertUnwindSafe(|| match src.kind {
            SourceKind::Image => self.process_image(src, &bytes, &mut times),
            SourceKind::Pdf => self.process_pdf(src, &bytes, &mut times),
        }));
        out.times.merge(&times);
        match result {
            Ok(Ok(rows)) => out.rows = rows,
            Ok(Err(Stop::Item(e))) => out.failure = Some(e),
            Ok(Err(Stop::Fatal(e))) => out.fatal = Some(e),
            Err(panic) => {
                let stage = match src.kind {
                    SourceKind::Image => Stage::Decode,
                    SourceKind::Pdf => Stage::PdfRender,
                };
                let detail = panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_default();
                out.failure = Some(ItemError::new(stage, format!("decoder panicked: {detail}")));
            }
        }
        out
    }

    fn process_image(&self, src: &SourceFile, bytes: &[u8], times: &mut StageTimes) -> Result<Vec<Row>, Stop> {
        let id = ItemId::new(&src.relative, None).map_err(|e| ItemError::new(Stage::Decode, e))?;

        let start = Instant::now();
        let decoded = decode_image(bytes);
        times.add(Stage::Decode, start.elapsed());
        let decoded = decoded.map_err(item_err(Stage::Decode))?;

        let start = Instant::now();
        let thumb = make_thumbnail(
            &decoded,
            self.config.thumbnail_max_dim,
            &self.layout.thumbnail_path(&id),
        );
        times.add(Stage::Thumbnail, start.elapsed());
        thumb.map_err(item_err(Stage::Thumbnail))?;
        drop(decoded);

        let vector = self.embed(bytes, times)?;
        Ok(vec![Row { id, vector }])
    }

    fn process_pdf(&self, src: &SourceFile, bytes: &[u8], times: &mut StageTimes) -> Result<Vec<Row>, Stop> {
        let mut rows = Vec::new();
        let mut mark = Instant::now();
        let rendered = pdf::render_pages(bytes, self.config.pdf_render_dpi, |page, rgb| {
            let id = ItemId::new(&src.relative, Some(page)).map_err(|e| ItemError::new(Stage::PdfRender, e))?;
            let page_image = DynamicImage::ImageRgb8(rgb);
            let mut png = Cursor::new(Vec::new());
            page_image
                .write_to(&mut png, ImageFormat::Png)
                .map_err(|e| ItemError::new(Stage::PdfRender, e))?;
            let png = png.into_inner();
            let page_path = self.layout.page_image_path(&id).expect("page ids have a page image");
            write_atomic(&page_path, &png)
                .map_err(|e| ItemError::new(Stage::PdfRender, format!("{}: {e}", page_path.display())))?;
            times.add(Stage::PdfRender, mark.elapsed());

            let start = Instant::now();
            let thumb = make_thumbnail(
                &page_image,
                self.config.thumbnail_max_dim,
                &self.layout.thumbnail_path(&id),
            );
            times.add(Stage::Thumbnail, start.elapsed());
            thumb.map_err(item_err(Stage::Thumbnail))?;
            drop(page_image);

            let vector = self.embed(&png, times)?;
            rows.push(Row { id, vector });
            mark = Instant::now();
            Ok::<(), Stop>(())
        });
        times.add(Stage::PdfRender, mark.elapsed());
        match rendered {
            Err(message) => Err(Stop::Item(ItemError::new(Stage::PdfRender, message))),
            Ok(Err(stop)) => Err(stop),
            Ok(Ok(())) => Ok(rows),
        }
    }
}

/// Single writer for the store, manifest and report.
struct Writer {
    store: EmbeddingStore,
    manifest: Manifest,
    report: IngestReport,
    since_checkpoint: usize,
}

impl Writer {
    fn accept(&mut self, src: &SourceFile, outcome: Outcome) -> Result<(), IngestError> {
        self.report.stage_seconds.merge(&outcome.times);
        let entry = |id: String, status| ManifestEntry {
            id,
            source_path: src.relative.clone(),
            content_fingerprint: outcome.fingerprint,
            status,
        };
        if let Some(failure) = outcome.failure {
            tracing::warn!(source = %src.relative, stage = %failure.stage, "{}", failure.message);
            self.manifest
                .entries
                .push(entry(src.relative.clone(), EntryStatus::Failed));
            self.report.items_discovered += 1;
            self.report.items_failed += 1;
            self.report.failures.push(Failure {
                source_path: src.relative.clone(),
                stage: failure.stage,
                message: failure.message,
            });
            self.since_checkpoint += 1;
            return Ok(());
        }
        let count = outcome.rows.len();
        self.report.items_discovered += count;
        self.report.items_embedded += count;
        if outcome.reused {
            self.report.items_reused += count;
        } else {
            self.since_checkpoint += count;
        }
        let mut ids = Vec::with_capacity(count);
        let mut flat = Vec::with_capacity(count * self.store.dim());
        for row in outcome.rows {
            self.manifest.entries.push(entry(row.id.to_string(), EntryStatus::Done));
            flat.extend_from_slice(&row.vector);
            ids.push(row.id);
        }
        self.store.push_rows(ids, &flat)?;
        Ok(())
    }

    /// Persist progress. Finished work from a previous run for sources not
    /// yet reached is carried along so an interrupted rerun loses nothing.
    fn checkpoint(&mut self, ctx: &Context, remaining: &[SourceFile]) -> Result<(), IngestError> {
        let mut carried_entries = Vec::new();
        let mut carried_ids = Vec::new();
        let mut carried_vectors = Vec::new();
        if let Some(prev) = &ctx.previous {
            for src in remaining {
                let Some(rows) = ctx.reusable(src, None) else {
                    continue;
                };
                carried_entries.extend(prev.by_source[&src.relative].iter().cloned());
                for row in rows {
                    carried_vectors.extend_from_slice(&row.vector);
                    carried_ids.push(row.id);
                }
            }
        }
        let dir = ctx.layout.embeddings_dir();
        if carried_ids.is_empty() {
            save_store(&self.store, &dir)?;
            self.manifest.save(&ctx.layout.manifest_path())?;
        } else {
            let store = self.store.clone().append_rows(carried_ids, &carried_vectors)?;
            save_store(&store, &dir)?;
            let mut manifest = self.manifest.clone();
            manifest.entries.extend(carried_entries);
            manifest.save(&ctx.layout.manifest_path())?;
        }
        self.report.checkpoints += 1;
        self.since_checkpoint = 0;
        Ok(())
    }
}

fn load_previous(layout: &DataLayout, provider: &dyn EmbeddingProvider) -> Option<Previous> {
    let manifest = match Manifest::load(&layout.manifest_path()) {
        Ok(Some(manifest)) => manifest,
        Ok(None) => return None,
        Err(e) => {
            tracing::warn!("ignoring previous manifest: {e}");
            return None;
        }
    };
    if manifest.model_id != provider.model_id() || manifest.embedding_dim != provider.dim() {
        tracing::info!(
            previous = %manifest.model_id,
            current = %provider.model_id(),
            "provider changed; recomputing all embeddings"
        );
        return None;
    }
    let dir = layout.embeddings_dir();
    if !store_exists(&dir) {
        return None;
    }
    let store = match load_store(&dir, Some(provider.dim())) {
        Ok(store) => store,
        Err(e) => {
            tracing::warn!("ignoring previous store: {e}");
            return None;
        }
    };
    let mut by_source: HashMap<String, Vec<ManifestEntry>> = HashMap::new();
    for entry in manifest.entries {
        by_source.entry(entry.source_path.clone()).or_default().push(entry);
    }
    Some(Previous { store, by_source })
}

/// Ingest everything under `data/raw` and write the store, manifest and
/// report under `data/embeddings`.
///
/// Rows follow the sorted scan order regardless of worker scheduling, so two
/// runs over the same tree with a deterministic provider produce identical
/// stores. Sources unchanged since the last run reuse their vectors.
pub fn run_ingest(
    config: &CollectionConfig,
    provider: &dyn EmbeddingProvider,
    options: &IngestOptions,
) -> Result<IngestReport, IngestError> {
    let started = Instant::now();
    if provider.dim() != config.embedding_dim {
        return Err(IngestError::DimensionMismatch {
            provider: provider.dim(),
            config: config.embedding_dim,
        });
    }
    let layout = config.layout();
    let sources = scan_raw(&layout.raw_dir())?;
    for dir in [layout.processed_dir(), layout.thumbnails_dir(), layout.embeddings_dir()] {
        std::fs::create_dir_all(&dir).map_err(IngestError::io(&dir))?;
    }

    let ctx = Context {
        previous: load_previous(&layout, provider),
        layout,
        config,
        provider,
    };
    let pool = match options.workers {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| IngestError::Io {
                    path: ctx.layout.root().to_path_buf(),
                    source: std::io::Error::other(e),
                })?,
        ),
        None => None,
    };
    let mut writer = Writer {
        store: EmbeddingStore::empty(config.embedding_dim)?,
        manifest: Manifest {
            model_id: provider.model_id().to_string(),
            embedding_dim: provider.dim(),
            entries: Vec::new(),
        },
        report: IngestReport {
            items_discovered: 0,
            items_embedded: 0,
            items_failed: 0,
            items_reused: 0,
            sources_scanned: sources.len(),
            failures: Vec::new(),
            stage_seconds: StageTimes::default(),
            wall_seconds: 0.0,
            checkpoints: 0,
            interrupted: false,
        },
        since_checkpoint: 0,
    };

    let batch = if options.batch_size == 0 {
        DEFAULT_BATCH
    } else {
        options.batch_size
    };
    let cancelled = || options.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));
    let mut next = 0;
    while next < sources.len() {
        if cancelled() {
            writer.report.interrupted = true;
            break;
        }
        let chunk = &sources[next..(next + batch).min(sources.len())];
        let work = || chunk.par_iter().map(|src| ctx.process(src)).collect::<Vec<_>>();
        let outcomes = match &pool {
            Some(pool) => pool.install(work),
            None => work(),
        };
        for (offset, (src, mut outcome)) in chunk.iter().zip(outcomes).enumerate() {
            if let Some(fatal) = outcome.fatal.take() {
                writer.checkpoint(&ctx, &sources[next + offset..])?;
                return Err(IngestError::Provider(fatal));
            }
            writer.accept(src, outcome)?;
        }
        next += chunk.len();
        if writer.since_checkpoint >= config.checkpoint_every && next < sources.len() {
            writer.checkpoint(&ctx, &sources[next..])?;
            tracing::info!(
                items = writer.report.items_discovered,
                sources = next,
                total_sources = sources.len(),
                "checkpoint written"
            );
        }
    }
    writer.checkpoint(&ctx, &sources[next..])?;

    let mut report = writer.report;
    report.wall_seconds = started.elapsed().as_secs_f64();
    let bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    let report_path = ctx.layout.report_path();
    write_atomic(&report_path, &bytes).map_err(IngestError::io(&report_path))?;
    Ok(report)
}
