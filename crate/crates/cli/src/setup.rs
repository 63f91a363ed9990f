use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use dce_core::config::{load_config_with_override, save_config};
use dce_core::{CollectionConfig, CollectionType, DataLayout};
use serde_json::json;

use crate::Output;

fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    if path.is_absolute() {
        Ok(path.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

/// `data_dir` as it should be written into the config: relative to the
/// config file when it lives below it, absolute otherwise.
fn data_dir_for_config(config_path: &Path, data_dir: &Path) -> anyhow::Result<PathBuf> {
    let data_dir = absolute(data_dir)?;
    let base = absolute(config_path)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(match data_dir.strip_prefix(&base) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel.to_path_buf(),
        _ => data_dir,
    })
}

pub fn run(
    config_path: &Path,
    collection_type: CollectionType,
    data_dir: &Path,
    embedding_dim: usize,
    model_id: Option<String>,
    out: Output,
) -> anyhow::Result<ExitCode> {
    let created_config = if config_path.exists() {
        let existing = load_config_with_override(config_path, None)
            .with_context(|| format!("reading existing {}", config_path.display()))?;
        if existing.collection_type != collection_type {
            bail!(
                "{} already configures a {} collection; refusing to overwrite it with {}",
                config_path.display(),
                existing.collection_type,
                collection_type
            );
        }
        false
    } else {
        let mut config = CollectionConfig::new(collection_type, embedding_dim);
        if let Some(model_id) = model_id {
            config.model_id = model_id;
        }
        config.data_dir = data_dir_for_config(config_path, data_dir)?;
        config.validate()?;
        if let Some(parent) = config_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        save_config(&config, config_path)?;
        true
    };

    let config = load_config_with_override(config_path, None)?;
    let layout = config.layout();
    let mut created_dirs = Vec::new();
    for sub in DataLayout::SUBDIRS {
        let dir = layout.root().join(sub);
        if !dir.is_dir() {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            created_dirs.push(dir.display().to_string());
        }
    }

    let summary = json!({
        "ok": true,
        "config": config_path.display().to_string(),
        "collection_type": config.collection_type.to_string(),
        "data_dir": layout.root().display().to_string(),
        "created_config": created_config,
        "created_dirs": created_dirs,
    });
    out.emit(&summary, || {
        if created_config || !created_dirs.is_empty() {
            format!(
                "{} collection ready: config {} and data directory {}",
                config.collection_type,
                config_path.display(),
                layout.root().display()
            )
        } else {
            format!("{} is already set up; nothing to do", config_path.display())
        }
    });
    Ok(ExitCode::SUCCESS)
}
