//! File-based orchestration of the stages behind the `keydecode` binary.

mod analyze;
pub mod config;
pub mod manifest;
pub mod stages;

pub use analyze::{ANALYSIS, CER_BY_TYPO, CER_BY_WORD_FREQUENCY, CLASS_FREQUENCY, DISTANCE_CONFUSION, TIMECOURSE, TIMECOURSE_CHAR};
pub use config::{Overrides, PipelineConfig, Stage};
pub use manifest::{file_sha256, manifest_path, Manifest};
pub use stages::{run_all, run_stage, Ctx, PredictionRow};
