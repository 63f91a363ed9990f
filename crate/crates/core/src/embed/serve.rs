use std::io::{self, BufRead, Write};

use super::wire::{ProviderOp, ProviderRequest, ProviderResponse};
use super::EmbeddingProvider;

/// Answer one request message with `provider`.
pub fn respond(provider: &dyn EmbeddingProvider, request: &ProviderRequest) -> ProviderResponse {
    let result = match request.op {
        ProviderOp::Info => return ProviderResponse::info(provider.dim(), provider.model_id()),
        ProviderOp::EmbedText => match &request.text {
            Some(text) => provider.embed_text(text),
            None => return ProviderResponse::error("embed_text requires `text`"),
        },
        ProviderOp::EmbedImage => match request.image_bytes() {
            Some(Ok(bytes)) => provider.embed_image(&bytes),
            Some(Err(e)) => return ProviderResponse::error(format!("invalid base64: {e}")),
            None => return ProviderResponse::error("embed_image requires `image_b64`"),
        },
    };
    match result {
        Ok(vector) => ProviderResponse::vector(vector),
        Err(e) => ProviderResponse::error(e.to_string()),
    }
}

/// Serve the line protocol until `input` reaches EOF.
pub fn serve_lines<R: BufRead, W: Write>(provider: &dyn EmbeddingProvider, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<ProviderRequest>(&line) {
            Ok(request) => respond(provider, &request),
            Err(e) => ProviderResponse::error(format!("malformed request: {e}")),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
