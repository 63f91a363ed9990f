//! Client for a model runner reachable over HTTP. Each request is the wire
//! message POSTed as a JSON body; the reply body is the response message.

use std::time::Duration;

use crate::error::EmbedError;

use super::sidecar::vector_from;
use super::wire::{ProviderRequest, ProviderResponse};
use super::{check_image, check_text, EmbeddingProvider, DEFAULT_REQUEST_TIMEOUT};

#[derive(Debug)]
pub struct HttpProvider {
    url: String,
    dim: usize,
    model_id: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn connect(url: &str, expected_dim: usize, handshake_timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(DEFAULT_REQUEST_TIMEOUT)
            .build()
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        let info = post(&client, url, &ProviderRequest::info(), Some(handshake_timeout))?;
        if !info.ok {
            return Err(EmbedError::Unavailable(
                info.error.unwrap_or_else(|| "provider refused info request".into()),
            ));
        }
        let dim = info.dim.ok_or_else(|| EmbedError::Protocol {
            message: "info response lacks `dim`".into(),
            line: String::new(),
        })?;
        if dim != expected_dim {
            return Err(EmbedError::DimensionMismatch {
                provider: dim,
                expected: expected_dim,
            });
        }
        Ok(Self {
            url: url.to_owned(),
            dim,
            model_id: info.model_id.unwrap_or_else(|| "unknown".into()),
            client,
        })
    }

    fn request(&self, request: &ProviderRequest) -> Result<Vec<f32>, EmbedError> {
        vector_from(post(&self.client, &self.url, request, None)?, self.dim)
    }
}

fn post(
    client: &reqwest::blocking::Client,
    url: &str,
    request: &ProviderRequest,
    timeout: Option<Duration>,
) -> Result<ProviderResponse, EmbedError> {
    let mut builder = client.post(url).json(request);
    if let Some(timeout) = timeout {
        builder = builder.timeout(timeout);
    }
    let response = builder.send().map_err(|e| {
        if e.is_timeout() {
            EmbedError::Timeout(timeout.unwrap_or(DEFAULT_REQUEST_TIMEOUT))
        } else {
            EmbedError::Unavailable(e.to_string())
        }
    })?;
    let body = response.text().map_err(|e| EmbedError::Unavailable(e.to_string()))?;
    serde_json::from_str(&body).map_err(|e| EmbedError::Protocol {
        message: e.to_string(),
        line: body,
    })
}

impl EmbeddingProvider for HttpProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        check_text(text)?;
        self.request(&ProviderRequest::embed_text(text))
    }

    fn embed_image(&self, image_bytes: &[u8]) -> Result<Vec<f32>, EmbedError> {
        check_image(image_bytes)?;
        self.request(&ProviderRequest::embed_image(image_bytes))
    }
}
