use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decode,
    PdfRender,
    Thumbnail,
    Embed,
}

impl Stage {
    pub const fn as_str(self) -> &'static str {
        match self {
            Stage::Decode => "decode",
            Stage::PdfRender => "pdf_render",
            Stage::Thumbnail => "thumbnail",
            Stage::Embed => "embed",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub source_path: String,
    pub stage: Stage,
    pub message: String,
}

/// Seconds spent per stage, summed over workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub decode: f64,
    pub pdf_render: f64,
    pub thumbnail: f64,
    pub embed: f64,
}

impl StageTimes {
    pub fn add(&mut self, stage: Stage, elapsed: Duration) {
        let slot = match stage {
            Stage::Decode => &mut self.decode,
            Stage::PdfRender => &mut self.pdf_render,
            Stage::Thumbnail => &mut self.thumbnail,
            Stage::Embed => &mut self.embed,
        };
        *slot += elapsed.as_secs_f64();
    }

    pub fn merge(&mut self, other: &Self) {
        self.decode += other.decode;
        self.pdf_render += other.pdf_render;
        self.thumbnail += other.thumbnail;
        self.embed += other.embed;
    }
}

/// Outcome of one ingest run, written to `data/embeddings/ingest_report.json`.
///
/// `items_discovered == items_embedded + items_failed` always holds. A PDF
/// that cannot be rendered counts as one failed item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub items_discovered: usize,
    /// Items in the final store, whether computed now or reused.
    pub items_embedded: usize,
    pub items_failed: usize,
    /// Items carried over from a previous run without recomputation.
    pub items_reused: usize,
    pub sources_scanned: usize,
    pub failures: Vec<Failure>,
    pub stage_seconds: StageTimes,
    pub wall_seconds: f64,
    pub checkpoints: usize,
    /// True when the run stopped early on request; rerun to resume.
    pub interrupted: bool,
}

impl IngestReport {
    pub fn failure_rate(&self) -> f64 {
        if self.items_discovered == 0 {
            0.0
        } else {
            self.items_failed as f64 / self.items_discovered as f64
        }
    }
}
