//! Provably convergent alternating minimization for the dual-domain objective.

mod lama;
mod log;
mod params;

pub use lama::{bcd_safeguard, candidate_step, edc_check, run, smoothing_update, SafeguardStep};
pub use log::{Branch, IterRecord, IterateLog, LOG_COLUMNS};
pub use params::{RunMode, SolverParams, StepSizes, DEFAULT_PHASES};
