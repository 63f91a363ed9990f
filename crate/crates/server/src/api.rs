//! JSON endpoints under `/api`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use dce_core::{top_k, ItemId, ItemKind, Metadata, Modality, QueryVector};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Serialize;

use crate::error::ApiError;
use crate::state::{AppState, Collection};

/// Everything but unreserved characters and `/` is escaped, so the `#` of a
/// page suffix travels as `%23`.
const ID_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'/')
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~');

pub fn encode_id(id: &ItemId) -> String {
    utf8_percent_encode(id.as_str(), ID_SEGMENT).to_string()
}

pub fn thumbnail_url(id: &ItemId) -> String {
    format!("/thumbnails/{}", encode_id(id))
}

pub fn image_url(id: &ItemId) -> String {
    format!("/images/{}", encode_id(id))
}

#[derive(Debug, Serialize)]
pub struct SearchResult {
    pub id: ItemId,
    pub score: f32,
    pub metadata: Metadata,
    pub thumbnail_url: String,
    pub image_url: String,
}

#[derive(Debug, Serialize)]
pub struct SearchResponse {
    pub query_type: &'static str,
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub results: Vec<SearchResult>,
}

#[derive(Debug, Serialize)]
pub struct ItemDetail {
    pub id: ItemId,
    pub metadata: Metadata,
    pub thumbnail_url: String,
    pub image_url: String,
    pub kind: ItemKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub page_number: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct CollectionInfo {
    pub collection_type: String,
    pub item_count: usize,
    pub embedding_dim: usize,
    pub model_id: String,
}

type Params = Query<HashMap<String, String>>;

fn paging(state: &AppState, params: &HashMap<String, String>) -> Result<(usize, usize), ApiError> {
    let max = state.config.max_limit;
    let limit = match params.get("limit") {
        None => state.config.default_limit.min(max),
        Some(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if (1..=max).contains(&n) => n,
            _ => {
                return Err(ApiError::bad_param(
                    "limit",
                    format!("limit must be an integer in 1..={max}"),
                ))
            }
        },
    };
    let offset = match params.get("offset") {
        None => 0,
        Some(raw) => raw
            .trim()
            .parse::<usize>()
            .map_err(|_| ApiError::bad_param("offset", "offset must be a non-negative integer"))?,
    };
    Ok((limit, offset))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

async fn search(
    state: &AppState,
    collection: Arc<Collection>,
    vector: Vec<f32>,
    modality: Modality,
    limit: usize,
    offset: usize,
) -> Result<Json<SearchResponse>, ApiError> {
    let query = QueryVector::new(vector, modality)?;
    let max = state.config.max_limit;
    let searched = collection.clone();
    let page = blocking(move || top_k(&searched.store, &query, limit, offset, max)).await??;
    let results = page
        .hits
        .into_iter()
        .map(|hit| SearchResult {
            metadata: collection.metadata.get_or_empty(&hit.id),
            thumbnail_url: thumbnail_url(&hit.id),
            image_url: image_url(&hit.id),
            score: hit.score,
            id: hit.id,
        })
        .collect();
    Ok(Json(SearchResponse {
        query_type: modality.as_str(),
        total: page.total,
        limit: page.limit,
        offset: page.offset,
        results,
    }))
}

pub async fn search_text(
    State(state): State<Arc<AppState>>,
    Query(params): Params,
) -> Result<Json<SearchResponse>, ApiError> {
    let collection = state.collection()?;
    let q = params
        .get("q")
        .filter(|q| !q.trim().is_empty())
        .cloned()
        .ok_or_else(|| ApiError::bad_param("q", "query parameter q must be non-empty"))?;
    let (limit, offset) = paging(&state, &params)?;
    let provider = state.provider.clone();
    let vector = blocking(move || provider.embed_text(&q)).await??;
    search(&state, collection, vector, Modality::Text, limit, offset).await
}

pub async fn search_image(
    State(state): State<Arc<AppState>>,
    Query(params): Params,
    mut multipart: Multipart,
) -> Result<Json<SearchResponse>, ApiError> {
    let collection = state.collection()?;
    let (limit, offset) = paging(&state, &params)?;
    let cap = state.config.max_upload_bytes;
    let too_large = || ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, format!("upload exceeds {cap} bytes"));
    let malformed = |e: axum::extract::multipart::MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            too_large()
        } else {
            ApiError::bad_param("file", format!("malformed multipart body: {}", e.body_text()))
        }
    };

    let mut upload = None;
    while let Some(mut field) = multipart.next_field().await.map_err(malformed)? {
        if field.name() != Some("file") {
            continue;
        }
        let mut bytes = Vec::new();
        while let Some(chunk) = field.chunk().await.map_err(malformed)? {
            if bytes.len() + chunk.len() > cap {
                return Err(too_large());
            }
            bytes.extend_from_slice(&chunk);
        }
        upload = Some(bytes);
        break;
    }
    let bytes = upload.ok_or_else(|| ApiError::bad_param("file", "multipart field \"file\" is required"))?;
    if bytes.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "uploaded file is empty",
        ));
    }
    if image::guess_format(&bytes).is_err() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "uploaded file is not a recognized image",
        ));
    }
    let provider = state.provider.clone();
    let vector = blocking(move || provider.embed_image(&bytes)).await??;
    search(&state, collection, vector, Modality::Image, limit, offset).await
}

pub async fn item(State(state): State<Arc<AppState>>, Path(raw): Path<String>) -> Result<Json<ItemDetail>, ApiError> {
    let collection = state.collection()?;
    let id = ItemId::parse(&raw).map_err(|_| ApiError::not_found())?;
    if !collection.store.contains(&id) {
        return Err(ApiError::not_found());
    }
    Ok(Json(ItemDetail {
        metadata: collection.metadata.get_or_empty(&id),
        thumbnail_url: thumbnail_url(&id),
        image_url: image_url(&id),
        kind: id.kind(),
        page_number: id.page(),
        id,
    }))
}

pub async fn info(State(state): State<Arc<AppState>>) -> Result<Json<CollectionInfo>, ApiError> {
    let collection = state.collection()?;
    Ok(Json(CollectionInfo {
        collection_type: state.config.collection_type.to_string(),
        item_count: collection.store.len(),
        embedding_dim: collection.store.dim(),
        model_id: state.provider.model_id().to_string(),
    }))
}

pub async fn health(State(state): State<Arc<AppState>>) -> (StatusCode, Json<serde_json::Value>) {
    if state.is_ready() {
        (StatusCode::OK, Json(serde_json::json!({ "status": "ok" })))
    } else {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(serde_json::json!({ "status": "starting" })),
        )
    }
}
