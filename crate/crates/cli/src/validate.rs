use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dce_core::config::{load_config_with_override, DATA_DIR_ENV};
use dce_core::{load_metadata, load_store, ItemId};
use dce_ingest::{EntryStatus, Manifest};
use serde_json::json;

use crate::Output;

pub fn run(config_path: &Path, data_dir: Option<PathBuf>, out: Output) -> anyhow::Result<ExitCode> {
    let env = std::env::var(DATA_DIR_ENV).ok();
    let mut config = load_config_with_override(config_path, env.as_deref())?;
    if let Some(dir) = data_dir {
        config.data_dir = dir;
    }
    let layout = config.layout();
    let mut problems: Vec<String> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut items = 0;

    match load_store(&layout.embeddings_dir(), Some(config.embedding_dim)) {
        Err(e) => problems.push(format!("store: {e}")),
        Ok(store) => {
            items = store.len();
            for id in store.ids() {
                let thumb = layout.thumbnail_path(id);
                if !thumb.is_file() {
                    problems.push(format!("orphan {id}: missing thumbnail {}", thumb.display()));
                }
                let display = layout.display_path(id);
                if !display.is_file() {
                    problems.push(format!("orphan {id}: missing image {}", display.display()));
                }
            }
            match Manifest::load(&layout.manifest_path()) {
                Err(e) => problems.push(format!("manifest: {e}")),
                Ok(None) => warnings.push("no manifest.json; the next embed run recomputes everything".into()),
                Ok(Some(manifest)) => {
                    let done: HashSet<&str> = manifest
                        .entries
                        .iter()
                        .filter(|e| e.status == EntryStatus::Done)
                        .map(|e| e.id.as_str())
                        .collect();
                    for id in store.ids() {
                        if !done.contains(id.as_str()) {
                            problems.push(format!("{id} is in the store but not recorded as done in the manifest"));
                        }
                    }
                    for entry in done {
                        let present = ItemId::parse(entry).is_ok_and(|id| store.contains(&id));
                        if !present {
                            problems.push(format!("manifest lists {entry} as done but the store lacks it"));
                        }
                    }
                    if manifest.embedding_dim != store.dim() {
                        problems.push(format!(
                            "manifest embedding_dim {} differs from store dimension {}",
                            manifest.embedding_dim,
                            store.dim()
                        ));
                    }
                }
            }
            match load_metadata(&layout.metadata_path()) {
                Err(e) => problems.push(format!("metadata: {e}")),
                Ok(table) => {
                    let unknown = table.ids().filter(|id| !store.contains(id)).count();
                    if unknown > 0 {
                        warnings.push(format!("metadata.json has {unknown} entries for ids not in the store"));
                    }
                }
            }
        }
    }

    let ok = problems.is_empty();
    let summary = json!({
        "ok": ok,
        "data_dir": layout.root().display().to_string(),
        "items": items,
        "problems": problems,
        "warnings": warnings,
    });
    out.emit(&summary, || {
        let mut text = if ok {
            format!("{} is consistent: {items} items", layout.root().display())
        } else {
            format!("{} has {} problem(s):", layout.root().display(), problems.len())
        };
        for p in &problems {
            text.push_str(&format!("\n  {p}"));
        }
        for w in &warnings {
            text.push_str(&format!("\n  warning: {w}"));
        }
        text
    });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
