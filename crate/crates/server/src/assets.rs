//! Thumbnail and full-resolution image serving.
//!
//! Files are located only through ids present in the store; the request path
//! is never joined onto the filesystem directly.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::header::{CACHE_CONTROL, CONTENT_TYPE};
use axum::response::{IntoResponse, Response};
use dce_core::ItemId;

use crate::error::ApiError;
use crate::state::AppState;

pub const CACHE_HEADER: &str = "public, max-age=86400, immutable";

#[derive(Debug, Clone, Copy)]
enum Asset {
    Thumbnail,
    Display,
}

pub fn content_type(path: &std::path::Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "tif" | "tiff" => "image/tiff",
        _ => "application/octet-stream",
    }
}

/// Resolve the file for `raw` or explain why not (always a 404 outward).
fn resolve(state: &AppState, raw: &str, asset: Asset) -> Result<PathBuf, ApiError> {
    let collection = state.collection()?;
    let id = ItemId::parse(raw).map_err(|_| ApiError::not_found())?;
    if !collection.store.contains(&id) {
        return Err(ApiError::not_found());
    }
    let path = match asset {
        Asset::Thumbnail => state.layout.thumbnail_path(&id),
        Asset::Display => state.layout.display_path(&id),
    };
    let root = std::fs::canonicalize(state.layout.root()).map_err(|_| ApiError::not_found())?;
    let real = std::fs::canonicalize(&path).map_err(|_| ApiError::not_found())?;
    if !real.starts_with(&root) || !real.is_file() {
        tracing::warn!(id = %id, path = %real.display(), "refusing to serve file outside the data directory");
        return Err(ApiError::not_found());
    }
    Ok(real)
}

async fn serve(state: Arc<AppState>, raw: String, asset: Asset) -> Result<Response, ApiError> {
    let path = resolve(&state, &raw, asset)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::not_found())?;
    let headers = [(CONTENT_TYPE, content_type(&path)), (CACHE_CONTROL, CACHE_HEADER)];
    Ok((headers, bytes).into_response())
}

pub async fn thumbnail(State(state): State<Arc<AppState>>, Path(raw): Path<String>) -> Result<Response, ApiError> {
    serve(state, raw, Asset::Thumbnail).await
}

pub async fn image(State(state): State<Arc<AppState>>, Path(raw): Path<String>) -> Result<Response, ApiError> {
    serve(state, raw, Asset::Display).await
}
