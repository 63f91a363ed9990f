mod embed;
mod serve;
mod setup;
mod validate;

use std::io::{IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dce_core::CollectionType;
use serde_json::Value;

/// Multimodal search over image and PDF collections.
#[derive(Debug, Parser)]
#[command(name = "dce", version, about)]
struct Cli {
    /// Collection config file.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TypeArg {
    Photographs,
    Maps,
    Documents,
}

impl From<TypeArg> for CollectionType {
    fn from(t: TypeArg) -> Self {
        match t {
            TypeArg::Photographs => CollectionType::Photographs,
            TypeArg::Maps => CollectionType::Maps,
            TypeArg::Documents => CollectionType::Documents,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create the data directory layout and write the config file.
    Setup {
        #[arg(long = "type", value_enum)]
        collection_type: TypeArg,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 512)]
        embedding_dim: usize,
        #[arg(long)]
        model_id: Option<String>,
    },
    /// Ingest everything under data/raw and build the embedding store.
    Embed {
        /// `test`, `command:<program and args>`, or `url:<http endpoint>`.
        #[arg(long, default_value = "test")]
        provider: String,
        /// Worker threads for decoding and rendering.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the HTTP API (and the web UI, with --static-dir).
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "0.0.0.0")]
        host: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Provider for query embeddings; same forms as `embed`.
        #[arg(long, default_value = "test")]
        provider: String,
    },
    /// Check that store, ids, thumbnails and manifest agree.
    Validate {
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Serve the deterministic provider over the stdio line protocol.
    #[command(hide = true)]
    ProviderStdio {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        model_id: Option<String>,
    },
}

/// Where results go: JSON on stdout, or a human summary.
#[derive(Debug, Clone, Copy)]
pub struct Output {
    json: bool,
}

impl Output {
    // A closed stdout (e.g. piped into `head`) must not turn into a panic.
    fn line(text: &str) {
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{text}").and_then(|_| stdout.flush());
    }

    pub fn emit(&self, value: &Value, human: impl FnOnce() -> String) {
        if self.json {
            Self::line(&value.to_string());
        } else {
            Self::line(&human());
        }
    }

    pub fn fail(&self, error: &anyhow::Error) {
        if self.json {
            Self::line(&serde_json::json!({ "ok": false, "error": format!("{error:#}") }).to_string());
        }
        eprintln!("error: {error:#}");
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Output { json: cli.json };
    if !matches!(cli.command, Command::ProviderStdio { .. }) {
        init_logging();
    }
    let result = match cli.command {
        Command::Setup {
            collection_type,
            data_dir,
            embedding_dim,
            model_id,
        } => setup::run(
            &cli.config,
            collection_type.into(),
            &data_dir,
            embedding_dim,
            model_id,
            out,
        ),
        Command::Embed { provider, workers } => embed::run(&cli.config, &provider, workers, out),
        Command::Serve {
            port,
            host,
            static_dir,
            provider,
        } => serve::run(&cli.config, port, &host, static_dir, &provider, out),
        Command::Validate { data_dir } => validate::run(&cli.config, data_dir, out),
        Command::ProviderStdio { dim, model_id } => embed::provider_stdio(dim, model_id),
    };
    match result {
        Ok(code) => code,
        Err(error) => {
            out.fail(&error);
            ExitCode::FAILURE
        }
    }
}
