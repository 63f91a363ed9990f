use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use dce_core::embed::{connect_provider, serve_lines, DeterministicProvider};
use dce_core::{load_config, ProviderSpec};
use dce_ingest::{run_ingest, IngestOptions};

use crate::Output;

pub fn run(config_path: &Path, provider: &str, workers: Option<usize>, out: Output) -> anyhow::Result<ExitCode> {
    let config = load_config(config_path)?;
    let spec: ProviderSpec = provider.parse().map_err(|e: String| anyhow!(e))?;
    let provider = connect_provider(&spec, config.embedding_dim).context("embedding provider")?;

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            eprintln!("interrupted twice; exiting without a final checkpoint");
            std::process::exit(130);
        }
        eprintln!("interrupt received; finishing the current batch (press again to abort)");
    })
    .context("installing interrupt handler")?;

    let options = IngestOptions {
        workers,
        cancel: Some(cancel),
        ..Default::default()
    };
    let report = run_ingest(&config, provider.as_ref(), &options)?;
    let report_path = config.layout().report_path();

    let mut summary = serde_json::to_value(&report)?;
    summary["ok"] = (!report.interrupted).into();
    summary["report_path"] = report_path.display().to_string().into();
    out.emit(&summary, || {
        let mut text = format!(
            "embedded {} of {} items ({} reused, {} failed) in {:.1}s\nreport: {}",
            report.items_embedded,
            report.items_discovered,
            report.items_reused,
            report.items_failed,
            report.wall_seconds,
            report_path.display()
        );
        for failure in &report.failures {
            text.push_str(&format!(
                "\n  failed {} at {}: {}",
                failure.source_path, failure.stage, failure.message
            ));
        }
        if report.interrupted {
            text.push_str("\ninterrupted: progress saved, rerun to resume");
        }
        text
    });
    Ok(if report.interrupted {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

pub fn provider_stdio(dim: usize, model_id: Option<String>) -> anyhow::Result<ExitCode> {
    let provider = match model_id {
        Some(id) => DeterministicProvider::with_model_id(dim, &id)?,
        None => DeterministicProvider::new(dim)?,
    };
    serve_lines(&provider, std::io::stdin().lock(), std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}
