use rayon::prelude::*;

use super::{step_metrics, AnalysisError, StepMetrics};
use crate::lti::LtiSystem;
use crate::sim::{run, LoopSpec, Signal, SimConfig, SimStatus};
use crate::tuning::{a_for_phase_margin, build_controller, ControllerSpec};

/// Overshoot at or below this percentage counts as "no overshoot".
pub const NO_OVERSHOOT_PCT: f64 = 0.5;

const RATIO_RANGE: (f64, f64) = (1.0, 64.0);
const RATIO_STEPS: usize = 8;
const WINDUP_STEPS: usize = 10;

/// Unit-step metrics of a loop; divergence is reported as an error.
pub fn step_overshoot(loop_spec: &LoopSpec, cfg: &SimConfig) -> Result<StepMetrics, AnalysisError> {
    let out = run(loop_spec, &Signal::unit_step(), cfg)?;
    if let SimStatus::Diverged { t } = out.status {
        return Err(crate::sim::SimError::Diverged { t }.into());
    }
    step_metrics(&out.trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub pm: f64,
    /// Differentiator band that realises `pm`.
    pub a: f64,
    /// Smallest `ω_c/ω_l` found with overshoot ≤ 0.5%.
    pub ratio: f64,
}

fn no_overshoot(spec: &ControllerSpec, plant: &LtiSystem, cfg: &SimConfig) -> Result<bool, AnalysisError> {
    let built = build_controller(spec, plant)?;
    match step_overshoot(&built.loop_spec, cfg) {
        Ok(m) => Ok(m.overshoot_pct <= NO_OVERSHOOT_PCT),
        Err(AnalysisError::Unsettled { .. }) | Err(AnalysisError::Sim(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Smallest ratio in `[1, 64]` giving a no-overshoot step at the given DF
/// phase margin. `a` is retuned to hit `pm`; the search is a geometric
/// bisection with 8 steps.
pub fn no_overshoot_ratio(
    template: &ControllerSpec,
    plant: &LtiSystem,
    pm: f64,
    cfg: &SimConfig,
) -> Result<BoundaryPoint, AnalysisError> {
    let a = a_for_phase_margin(template, plant, pm)?;
    let at = |ratio: f64| ControllerSpec {
        a,
        ratio,
        kp: None,
        ..template.clone()
    };
    let (mut lo, mut hi) = RATIO_RANGE;
    if !no_overshoot(&at(hi), plant, cfg)? {
        return Err(AnalysisError::NotAchievable { pm, n: template.n });
    }
    if no_overshoot(&at(lo), plant, cfg)? {
        return Ok(BoundaryPoint { pm, a, ratio: lo });
    }
    for _ in 0..RATIO_STEPS {
        let mid = (lo * hi).sqrt();
        if no_overshoot(&at(mid), plant, cfg)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(BoundaryPoint { pm, a, ratio: hi })
}

/// [`no_overshoot_ratio`] for each phase margin, evaluated in parallel.
pub fn no_overshoot_boundary(
    template: &ControllerSpec,
    plant: &LtiSystem,
    pm_list: &[f64],
    cfg: &SimConfig,
) -> Vec<Result<BoundaryPoint, AnalysisError>> {
    pm_list
        .par_iter()
        .map(|&pm| no_overshoot_ratio(template, plant, pm, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindupResult {
    /// Midpoint of the final bracket.
    pub threshold: f64,
    /// Highest level seen to diverge and lowest level seen to settle.
    pub bracket: (f64, f64),
}

fn diverges(loop_spec: &LoopSpec, level: f64, cfg: &SimConfig) -> Result<bool, AnalysisError> {
    let sat = if level.is_finite() { Some(level) } else { None };
    let l = loop_spec.clone().with_saturation(sat);
    let out = run(&l, &Signal::unit_step(), cfg)?;
    Ok(matches!(out.status, SimStatus::Diverged { .. }))
}

/// Saturation level below which the unit-step response of `loop_spec`
/// diverges. `low` must diverge and `high` must not; an infinite level
/// means no saturation. Ten geometric bisection steps.
pub fn windup_threshold(
    loop_spec: &LoopSpec,
    low: f64,
    high: f64,
    cfg: &SimConfig,
) -> Result<WindupResult, AnalysisError> {
    let invalid = |reason: &str| AnalysisError::BracketInvalid {
        low,
        high,
        reason: reason.to_string(),
    };
    if !(low > 0.0 && high >= low) {
        return Err(invalid("levels must satisfy 0 < low <= high"));
    }
    if !diverges(loop_spec, low, cfg)? {
        return Err(invalid("loop is stable at the low level"));
    }
    if diverges(loop_spec, high, cfg)? {
        return Err(invalid("loop diverges at the high level"));
    }
    if !high.is_finite() {
        return Err(invalid("the high level must be finite for bisection"));
    }
    let (mut lo, mut hi) = (low, high);
    for _ in 0..WINDUP_STEPS {
        let mid = (lo * hi).sqrt();
        if diverges(loop_spec, mid, cfg)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(WindupResult {
        threshold: 0.5 * (lo + hi),
        bracket: (lo, hi),
    })
}

/// [`windup_threshold`] for several loops in parallel.
pub fn windup_thresholds(
    loops: &[LoopSpec],
    low: f64,
    high: f64,
    cfg: &SimConfig,
) -> Vec<Result<WindupResult, AnalysisError>> {
    loops
        .par_iter()
        .map(|l| windup_threshold(l, low, high, cfg))
        .collect()
}
