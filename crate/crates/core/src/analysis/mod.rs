//! Metrics and experiment drivers: step metrics, harmonic extraction,
//! L2 sensitivity, no-overshoot boundary, wind-up threshold and Bode data.

mod bode;
mod metrics;
mod sweeps;

pub use bode::{bode_data, log_grid, BodeRow};
pub use metrics::{extract_harmonic, l2_error_ratio, step_metrics, StepMetrics};
pub use sweeps::{
    no_overshoot_boundary, no_overshoot_ratio, step_overshoot, windup_threshold, windup_thresholds,
    BoundaryPoint, WindupResult,
    NO_OVERSHOOT_PCT,
};

use thiserror::Error;

use crate::sim::SimError;
use crate::tuning::TuningError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("output did not settle (final-window std {final_std:.3e})")]
    Unsettled { final_std: f64 },
    #[error("trace does not come from a nonzero step reference")]
    NotAStep,
    #[error("reference is not periodic")]
    NotPeriodic,
    #[error("analysis window too short: {have:.3} of {need} required")]
    WindowTooShort { have: f64, need: f64 },
    #[error("window of {periods:.6} samples is not a whole number of base periods")]
    NonIntegerPeriods { periods: f64 },
    #[error("ratio 64 still overshoots at PM {pm}° (n = {n})")]
    NotAchievable { pm: f64, n: u32 },
    #[error("saturation bracket [{low}, {high}] does not straddle instability ({reason})")]
    BracketInvalid { low: f64, high: f64, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
}
