//! Provider wire messages: one JSON object per line, one response per
//! request, in order.

use base64::Engine as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderOp {
    EmbedText,
    EmbedImage,
    Info,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub op: ProviderOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
}

impl ProviderRequest {
    pub fn info() -> Self {
        Self {
            op: ProviderOp::Info,
            text: None,
            image_b64: None,
        }
    }

    pub fn embed_text(text: &str) -> Self {
        Self {
            op: ProviderOp::EmbedText,
            text: Some(text.to_owned()),
            image_b64: None,
        }
    }

    pub fn embed_image(bytes: &[u8]) -> Self {
        Self {
            op: ProviderOp::EmbedImage,
            text: None,
            image_b64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
        }
    }

    /// Decoded image payload, if present and valid base64.
    pub fn image_bytes(&self) -> Option<Result<Vec<u8>, base64::DecodeError>> {
        self.image_b64
            .as_deref()
            .map(|b64| base64::engine::general_purpose::STANDARD.decode(b64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ProviderResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ProviderResponse {
    pub fn info(dim: usize, model_id: &str) -> Self {
        Self {
            ok: true,
            dim: Some(dim),
            model_id: Some(model_id.to_owned()),
            ..Self::default()
        }
    }

    pub fn vector(vector: Vec<f32>) -> Self {
        Self {
            ok: true,
            vector: Some(vector),
            ..Self::default()
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(message.into()),
            ..Self::default()
        }
    }
}
