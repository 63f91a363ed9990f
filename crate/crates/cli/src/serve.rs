use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use dce_core::embed::connect_provider;
use dce_core::{load_config, EmbeddingProvider, ProviderSpec};
use dce_server::AppState;
use serde_json::json;

use crate::Output;

async fn shutdown_signal() {
    let ctrl_c = async {
        if let Err(e) = tokio::signal::ctrl_c().await {
            tracing::error!("cannot listen for Ctrl-C: {e}");
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut sig) => {
                sig.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

pub fn run(
    config_path: &Path,
    port: Option<u16>,
    host: &str,
    static_dir: Option<PathBuf>,
    provider: &str,
    out: Output,
) -> anyhow::Result<ExitCode> {
    let mut config = load_config(config_path)?;
    if let Some(port) = port {
        config.port = port;
    }
    if let Some(dir) = &static_dir {
        if !dir.is_dir() {
            anyhow::bail!("static directory {} does not exist", dir.display());
        }
    }
    let spec: ProviderSpec = provider.parse().map_err(|e: String| anyhow!(e))?;
    let provider: Arc<dyn EmbeddingProvider> =
        Arc::from(connect_provider(&spec, config.embedding_dim).context("embedding provider")?);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")?;
    runtime.block_on(async move {
        let addr = format!("{host}:{}", config.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        let local = listener.local_addr()?;
        out.emit(&json!({ "ok": true, "listening": local.to_string() }), || {
            format!("API server listening on http://{local}")
        });
        let state = AppState::new(config, provider);
        dce_server::run(listener, state, static_dir.as_deref(), shutdown_signal()).await?;
        Ok(ExitCode::SUCCESS)
    })
}
