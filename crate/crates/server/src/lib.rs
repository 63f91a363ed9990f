//! HTTP search API over an immutable, in-memory embedding store.

pub mod api;
pub mod assets;
mod error;
mod state;

use std::future::{Future, IntoFuture};
use std::path::Path;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};

pub use error::{ApiError, ServerError};
pub use state::{AppState, Collection};

/// Multipart framing allowance on top of the upload cap.
const MULTIPART_OVERHEAD: usize = 64 * 1024;

fn cors(origins: &[String]) -> CorsLayer {
    if origins.is_empty() {
        return CorsLayer::permissive();
    }
    let allowed: Vec<HeaderValue> = origins
        .iter()
        .filter_map(|o| match HeaderValue::from_str(o) {
            Ok(v) => Some(v),
            Err(_) => {
                tracing::warn!(origin = %o, "ignoring invalid CORS origin");
                None
            }
        })
        .collect();
    CorsLayer::new()
        .allow_origin(AllowOrigin::list(allowed))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
}

/// All routes. With `static_dir`, unmatched paths serve the built web UI,
/// falling back to its `index.html`.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let body_limit = state.config.max_upload_bytes.saturating_add(MULTIPART_OVERHEAD);
    let api = Router::new()
        .route("/api/search/text", get(api::search_text))
        .route(
            "/api/search/image",
            post(api::search_image).layer(DefaultBodyLimit::max(body_limit)),
        )
        .route("/api/items/{*id}", get(api::item))
        .route("/api/collection/info", get(api::info))
        .route("/api/health", get(api::health))
        .route("/thumbnails/{*id}", get(assets::thumbnail))
        .route("/images/{*id}", get(assets::image))
        .layer(cors(&state.config.cors_origins))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => api.fallback(|| async { ApiError::not_found() }),
    }
}

/// Serve on `listener` while the collection loads in the background.
///
/// Requests get 503 until loading finishes. A load failure stops the server
/// and is returned, so the caller can exit nonzero rather than linger half
/// alive. Returns `Ok` after `shutdown` resolves.
pub async fn run(
    listener: TcpListener,
    state: Arc<AppState>,
    static_dir: Option<&Path>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    let app = router(state.clone(), static_dir);
    let config = state.config.clone();
    let loader = tokio::task::spawn_blocking(move || Collection::load(&config));
    let server = axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .into_future();
    tokio::pin!(server);
    tokio::select! {
        loaded = loader => {
            let collection = loaded.map_err(|e| ServerError::Loader(e.to_string()))??;
            tracing::info!(items = collection.store.len(), dim = collection.store.dim(), "collection loaded");
            state.install(collection);
            (&mut server).await?;
        }
        served = &mut server => served?,
    }
    Ok(())
}
