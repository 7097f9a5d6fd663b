//! Dense grid transcription benchmark toolkit.
//!
//! * [`grid`] and [`dataset`]: seeded N×N color grids, 512 px renderings and
//!   JSON-lines manifests.
//! * [`prompt`] and [`parser`]: the transcription prompt, token budget and a
//!   three-stage cascading parser for model replies.
//! * [`metrics`]: Exact Match, Cell Accuracy, pooled IoU and heatmap counts.
//! * [`geometry`]: cell-versus-patch boundary interaction types.
//! * [`probe`]: spatial probes trained on frozen-encoder feature maps.
//! * [`harness`]: zero-shot evaluation runs against HTTP or replay adapters.
//! * [`report`]: heatmap PNGs, summary tables and breakdown CSVs.

pub mod dataset;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod parser;
pub mod probe;
pub mod prompt;
pub mod report;
pub mod splitmix;

pub use grid::{GridInstance, GridSpec, Palette, RgbImage};
pub use matrix::{ColorMatrix, Matrix};
pub use parser::{parse_cascade, ParseOutcome};
