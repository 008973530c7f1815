//! Loop-shaping tuner for PIⁿD and CR CgLp+PIⁿD controllers.
//!
//! Forward path (CR enabled):
//!
//! ```text
//! e → L(s) → ΣR(γ) → D(s) → R(s) → kp·(s/ω_d+1)/(s/ω_t+1) → (1+ω_i/s)ⁿ → u
//! ```
//!
//! with `ω_d = ω_c/a`, `ω_t = a·ω_c`, `ω_i = ω_c/10`, `ω_r = ω_c`,
//! `ω_f = 20ω_c`, `ω_l = ω_c/ratio` and `ω_h = 100ω_c` by default. `kp` makes
//! the first-harmonic open-loop gain exactly one at `ω_c`.

use num_complex::Complex64;
use thiserror::Error;

use crate::lti::{LtiError, LtiSystem};
use crate::reset::{CrChain, ResetElement, ResetError};
use crate::sim::{Block, LoopSpec, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuningError {
    #[error("invalid controller spec: {0}")]
    InvalidSpec(String),
    #[error("no gain crossover found on [{lo}, {hi}] rad/s")]
    CrossoverNotFound { lo: f64, hi: f64 },
    #[error("{count} gain crossovers on [{lo}, {hi}] rad/s")]
    MultipleCrossovers { count: usize, lo: f64, hi: f64 },
    #[error("phase margin {target}° is outside the reachable range [{min:.2}, {max:.2}]°")]
    PhaseMarginUnreachable { target: f64, min: f64, max: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reset(#[from] ResetError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Where α shifts a corner: on the reset lag (`ΣR = 1/(s/(αω_r)+1)`,
/// `D = (s/ω_r+1)/(s/ω_f+1)`) or on the lead (`ΣR = 1/(s/ω_r+1)`,
/// `D = (s/(αω_r)+1)/(s/ω_f+1)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaPlacement {
    ResetLag,
    #[default]
    Lead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    /// Crossover frequency, rad/s.
    pub omega_c: f64,
    /// Differentiator band: `ω_d = ω_c/a`, `ω_t = a ω_c`.
    pub a: f64,
    /// Number of stacked PI factors.
    pub n: u32,
    /// Proportional gain; `None` tunes it for unit DF gain at `ω_c`.
    pub kp: Option<f64>,
    pub cr_enabled: bool,
    /// `ω_c/ω_l`.
    pub ratio: f64,
    /// `ω_h/ω_c`.
    pub omega_h_mult: f64,
    pub gamma: f64,
    pub alpha: f64,
    /// `ω_f/ω_c`.
    pub omega_f_mult: f64,
    pub alpha_placement: AlphaPlacement,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            omega_c: 100.0,
            a: 3.0,
            n: 1,
            kp: None,
            cr_enabled: false,
            ratio: 3.0,
            omega_h_mult: 100.0,
            gamma: 0.0,
            alpha: 1.1,
            omega_f_mult: 20.0,
            alpha_placement: AlphaPlacement::default(),
        }
    }
}

impl ControllerSpec {
    /// Linear PIⁿD with default settings.
    pub fn pind(n: u32) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    /// CR CgLp+PIⁿD with default settings.
    pub fn cr_pind(n: u32) -> Self {
        Self {
            n,
            cr_enabled: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TuningError> {
        let bad = |m: String| Err(TuningError::InvalidSpec(m));
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return bad(format!("omega_c = {} must be positive", self.omega_c));
        }
        if !(self.a > 1.0 && self.a.is_finite()) {
            return bad(format!("a = {} must exceed 1", self.a));
        }
        if self.n < 1 {
            return bad("n must be at least 1".into());
        }
        if let Some(kp) = self.kp {
            if !(kp > 0.0 && kp.is_finite()) {
                return bad(format!("kp = {kp} must be positive"));
            }
        }
        if self.cr_enabled {
            if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
                return bad(format!("ratio = {} must be at least 1", self.ratio));
            }
            if !(self.omega_h_mult >= 100.0 && self.omega_h_mult.is_finite()) {
                return bad(format!("omega_h_mult = {} must be at least 100", self.omega_h_mult));
            }
            if !(self.gamma.abs() <= 1.0) {
                return bad(format!("gamma = {} outside [-1, 1]", self.gamma));
            }
            if !(self.alpha > 0.0 && self.alpha.is_finite()) {
                return bad(format!("alpha = {} must be positive", self.alpha));
            }
            if !(self.omega_f_mult > 1.0 && self.omega_f_mult.is_finite()) {
                return bad(format!("omega_f_mult = {} must exceed 1", self.omega_f_mult));
            }
        }
        Ok(())
    }

    pub fn omega_d(&self) -> f64 {
        self.omega_c / self.a
    }

    pub fn omega_t(&self) -> f64 {
        self.a * self.omega_c
    }

    pub fn omega_i(&self) -> f64 {
        self.omega_c / 10.0
    }

    pub fn omega_l(&self) -> f64 {
        self.omega_c / self.ratio
    }

    pub fn omega_h(&self) -> f64 {
        self.omega_h_mult * self.omega_c
    }

    pub fn omega_f(&self) -> f64 {
        self.omega_f_mult * self.omega_c
    }

    /// Corner of the reset lag.
    pub fn reset_corner(&self) -> f64 {
        match self.alpha_placement {
            AlphaPlacement::ResetLag => self.alpha * self.omega_c,
            AlphaPlacement::Lead => self.omega_c,
        }
    }

    /// Zero corner of the CgLp lead `D(s)`.
    pub fn lead_corner(&self) -> f64 {
        match self.alpha_placement {
            AlphaPlacement::ResetLag => self.omega_c,
            AlphaPlacement::Lead => self.alpha * self.omega_c,
        }
    }

    /// The CR chain `L → ΣR → D → R` described by this spec.
    pub fn cr_chain(&self) -> Result<CrChain, TuningError> {
        let element = ResetElement::fore(self.reset_corner(), self.gamma)?;
        let lead = LtiSystem::first_order(Some(self.lead_corner()), Some(self.omega_f()), 1.0)?;
        Ok(CrChain::new(self.omega_l(), self.omega_h(), element, lead)?)
    }
}

/// A built loop together with the gain that was used.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltController {
    pub loop_spec: LoopSpec,
    pub kp: f64,
}

/// Index of the tamed differentiator (which carries `kp`) in the forward path.
fn kp_block_index(spec: &ControllerSpec) -> usize {
    if spec.cr_enabled {
        4
    } else {
        0
    }
}

fn blocks_with_gain(spec: &ControllerSpec, kp: f64) -> Result<Vec<Block>, TuningError> {
    let mut blocks: Vec<Block> = Vec::new();
    if spec.cr_enabled {
        let chain = spec.cr_chain()?;
        blocks.push(chain.pre().clone().into());
        blocks.push(chain.element().clone().into());
        blocks.push(chain.post_lead().clone().into());
        blocks.push(chain.post_lag().clone().into());
    }
    blocks.push(LtiSystem::first_order(Some(spec.omega_d()), Some(spec.omega_t()), kp)?.into());
    let wi = spec.omega_i();
    for _ in 0..spec.n {
        blocks.push(LtiSystem::first_order(Some(wi), Some(0.0), wi)?.into());
    }
    debug_assert!(matches!(blocks[kp_block_index(spec)], Block::Linear(_)));
    Ok(blocks)
}

/// Build the forward path and close the loop around `plant`.
pub fn build_controller(
    spec: &ControllerSpec,
    plant: &LtiSystem,
) -> Result<BuiltController, TuningError> {
    spec.validate()?;
    let kp = match spec.kp {
        Some(kp) => kp,
        None => {
            let unit = LoopSpec::closed(blocks_with_gain(spec, 1.0)?, plant.clone())?;
            let g = unit.open_loop_df(spec.omega_c)?.norm();
            if !(g > 0.0 && g.is_finite()) {
                return Err(TuningError::CrossoverNotFound {
                    lo: spec.omega_c,
                    hi: spec.omega_c,
                });
            }
            1.0 / g
        }
    };
    let loop_spec = LoopSpec::closed(blocks_with_gain(spec, kp)?, plant.clone())?;
    Ok(BuiltController { loop_spec, kp })
}

/// Double-integrator plant `1/s²` (a unit mass).
pub fn mass_plant() -> LtiSystem {
    let i = LtiSystem::first_order(None, Some(0.0), 1.0).expect("integrator");
    LtiSystem::series(&i, &i).expect("SISO cascade")
}

const GRID_POINTS: usize = 4001;

/// Gain crossover of the first-harmonic open-loop DF on
/// `[ω_c/100, 100ω_c]`; exactly one crossing is required.
pub fn crossover_frequency(loop_spec: &LoopSpec, omega_c: f64) -> Result<f64, TuningError> {
    let (lo, hi) = (omega_c / 100.0, omega_c * 100.0);
    let log_gain = |w: f64| -> Result<f64, TuningError> { Ok(loop_spec.open_loop_df(w)?.norm().ln()) };
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| lo * (hi / lo).powf(k as f64 / (GRID_POINTS - 1) as f64))
        .collect();
    let vals = grid.iter().map(|&w| log_gain(w)).collect::<Result<Vec<_>, _>>()?;
    let mut brackets = Vec::new();
    for k in 0..GRID_POINTS - 1 {
        let (a, b) = (vals[k], vals[k + 1]);
        if a == 0.0 {
            brackets.push((grid[k], grid[k]));
        } else if a.signum() != b.signum() && b != 0.0 {
            brackets.push((grid[k], grid[k + 1]));
        }
    }
    if vals[GRID_POINTS - 1] == 0.0 {
        brackets.push((hi, hi));
    }
    match brackets.len() {
        0 => Err(TuningError::CrossoverNotFound { lo, hi }),
        1 => {
            let (mut a, mut b) = brackets[0];
            if a == b {
                return Ok(a);
            }
            let mut fa = log_gain(a)?;
            for _ in 0..80 {
                let m = (a * b).sqrt();
                let fm = log_gain(m)?;
                if fm == 0.0 {
                    return Ok(m);
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            Ok((a * b).sqrt())
        }
        count => Err(TuningError::MultipleCrossovers { count, lo, hi }),
    }
}

/// `180° + ∠G(jω_x)` at the DF gain crossover, wrapped to (−180°, 180°].
pub fn phase_margin_df(loop_spec: &LoopSpec, omega_c: f64) -> Result<f64, TuningError> {
    let wx = crossover_frequency(loop_spec, omega_c)?;
    let g = loop_spec.open_loop_df(wx)?;
    Ok(wrap_degrees(180.0 + g.arg().to_degrees()))
}

fn wrap_degrees(d: f64) -> f64 {
    let mut v = d % 360.0;
    if v <= -180.0 {
        v += 360.0;
    } else if v > 180.0 {
        v -= 360.0;
    }
    v
}

/// Phase of the tuned controller's open loop at `ω_c` (after tuning, `ω_c` is the
/// crossover by construction).
pub fn phase_at_crossover(spec: &ControllerSpec, plant: &LtiSystem) -> Result<f64, TuningError> {
    let built = build_controller(spec, plant)?;
    let g: Complex64 = built.loop_spec.open_loop_df(spec.omega_c)?;
    Ok(wrap_degrees(180.0 + g.arg().to_degrees()))
}

/// Differentiator band `a` giving the requested DF phase margin, found by
/// bisection (phase margin grows monotonically with `a`).
pub fn a_for_phase_margin(
    template: &ControllerSpec,
    plant: &LtiSystem,
    pm_deg: f64,
) -> Result<f64, TuningError> {
    let pm_of = |a: f64| -> Result<f64, TuningError> {
        let spec = ControllerSpec {
            a,
            kp: None,
            ..template.clone()
        };
        phase_at_crossover(&spec, plant)
    };
    let (mut lo, mut hi) = (1.0 + 1e-6, 1e4);
    let (pm_lo, pm_hi) = (pm_of(lo)?, pm_of(hi)?);
    if !(pm_lo <= pm_deg && pm_deg <= pm_hi) {
        return Err(TuningError::PhaseMarginUnreachable {
            target: pm_deg,
            min: pm_lo,
            max: pm_hi,
        });
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if pm_of(mid)? < pm_deg {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}
