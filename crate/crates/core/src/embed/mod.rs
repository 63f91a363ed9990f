//! Embedding providers: text and image bytes in, unit vectors out.

mod deterministic;
mod http;
mod serve;
mod sidecar;
pub mod wire;

use std::time::Duration;

pub use deterministic::{deterministic_vector, DeterministicProvider, IMAGE_PREFIX, TEXT_PREFIX};
pub use http::HttpProvider;
pub use serve::{respond, serve_lines};
pub use sidecar::SidecarProvider;

use crate::error::EmbedError;
use crate::store::NORM_TOLERANCE;

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

/// Turns queries and collection items into vectors of a fixed dimension.
///
/// Implementations return length-`dim()` unit vectors or a typed error, and
/// must be callable from many threads at once.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn model_id(&self) -> &str;

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError>;

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Vec<f32>, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed_text(text)
    }
    fn embed_image(&self, image_bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
        (**self).embed_image(image_bytes)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed_text(text)
    }
    fn embed_image(&self, image_bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
        (**self).embed_image(image_bytes)
    }
}

/// Where embeddings come from, as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    /// The built-in deterministic provider.
    Test,
    /// A sidecar process speaking the line protocol over stdio.
    Command(Vec<String>),
    /// An HTTP endpoint accepting the same JSON messages via POST.
    Url(String),
}

impl std::str::FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "test" {
            return Ok(Self::Test);
        }
        if let Some(argv) = s.strip_prefix("command:") {
            let argv: Vec<String> = argv.split_whitespace().map(str::to_owned).collect();
            if argv.is_empty() {
                return Err("command: provider needs a program".into());
            }
            return Ok(Self::Command(argv));
        }
        if let Some(url) = s.strip_prefix("url:") {
            if url.is_empty() {
                return Err("url: provider needs an address".into());
            }
            return Ok(Self::Url(url.to_owned()));
        }
        Err(format!(
            "unknown provider {s:?} (expected test, command:<argv>, or url:<addr>)"
        ))
    }
}

/// Build a provider and verify that it produces `expected_dim`-wide vectors.
pub fn connect_provider(spec: &ProviderSpec, expected_dim: usize) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
    Ok(match spec {
        ProviderSpec::Test => Box::new(DeterministicProvider::new(expected_dim)?),
        ProviderSpec::Command(argv) => Box::new(SidecarProvider::spawn(argv, expected_dim, DEFAULT_HANDSHAKE_TIMEOUT)?),
        ProviderSpec::Url(url) => Box::new(HttpProvider::connect(url, expected_dim, DEFAULT_HANDSHAKE_TIMEOUT)?),
    })
}

/// Reject vectors of the wrong width or off the unit sphere.
pub(crate) fn check_vector(vector: &[f32], dim: usize) -> Result<(), EmbedError> {
    if vector.len() != dim {
        return Err(EmbedError::DimensionMismatch {
            provider: vector.len(),
            expected: dim,
        });
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::BadVector);
    }
    let norm = vector.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > f64::from(NORM_TOLERANCE) {
        return Err(EmbedError::BadVector);
    }
    Ok(())
}

pub(crate) fn check_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        Err(EmbedError::EmptyText)
    } else {
        Ok(())
    }
}

pub(crate) fn check_image(bytes: &[u8]) -> Result<(), EmbedError> {
    if bytes.is_empty() {
        Err(EmbedError::EmptyImage)
    } else {
        Ok(())
    }
}
