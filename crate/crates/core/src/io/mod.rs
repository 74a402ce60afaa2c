//! File formats: marker traces, calibration profiles, command logs, trial
//! results and session reports.

pub mod commands;
pub mod profile;
pub mod report;
pub mod trace;

use thiserror::Error;

pub use commands::{read_command_log, write_command_log};
pub use profile::{read_profile, write_profile};
pub use report::{emit_report, read_results, write_results, ResultRow, SessionReport};
pub use trace::{read_trace, write_trace, MarkerTrace, TraceRecord, TRACE_RATE_HZ};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} does not follow {previous}")]
    NonMonotoneTimestamp { line: usize, t: f64, previous: f64 },
    #[error("no trial results to report")]
    EmptyReport,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
