//! Error rates, statistical tests and the behavioural analyses.

pub mod analysis;
pub mod cer;
pub mod kmeans;
pub mod report;
pub mod stats;

pub use cer::{cer, edits_per_target, her, levenshtein};
pub use report::{EvalReport, ReportEntry};
pub use stats::TestResult;
