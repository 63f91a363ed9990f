use crate::error::EmbedError;
use crate::hash::{fnv1a64, SplitMix64};

use super::{check_image, check_text, EmbeddingProvider};

/// Domain-separation prefix for text inputs.
pub const TEXT_PREFIX: u8 = 0x01;
/// Domain-separation prefix for image inputs.
pub const IMAGE_PREFIX: u8 = 0x02;

const MODEL_ID: &str = "dce/deterministic-test";

/// Unit vector derived from `seed_bytes`.
///
/// The seed is FNV-1a-64 of the bytes; `dim` SplitMix64 draws are mapped to
/// `[-1, 1)` and L2-normalized in f64, then rounded to f32.
pub fn deterministic_vector(seed_bytes: &[u8], dim: usize) -> Result<Vec<f32>, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::ZeroDimension);
    }
    let mut rng = SplitMix64::new(fnv1a64(seed_bytes));
    let draws: Vec<f64> = (0..dim).map(|_| rng.next_signed_unit()).collect();
    let norm = draws.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    Ok(draws.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Hash-based stand-in for a real model. Identical input bytes always give
/// identical vectors, on every platform.
#[derive(Debug, Clone)]
pub struct DeterministicProvider {
    dim: usize,
    model_id: String,
}

impl DeterministicProvider {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        Self::with_model_id(dim, MODEL_ID)
    }

    pub fn with_model_id(dim: usize, model_id: &str) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        Ok(Self {
            dim,
            model_id: model_id.to_owned(),
        })
    }

    fn prefixed(&self, prefix: u8, bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
        let mut seed = Vec::with_capacity(bytes.len() + 1);
        seed.push(prefix);
        seed.extend_from_slice(bytes);
        deterministic_vector(&seed, self.dim)
    }
}

impl EmbeddingProvider for DeterministicProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        check_text(text)?;
        self.prefixed(TEXT_PREFIX, text.as_bytes())
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
        check_image(image_bytes)?;
        self.prefixed(IMAGE_PREFIX, image_bytes)
    }
}
