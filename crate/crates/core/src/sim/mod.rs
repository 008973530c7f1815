//! Hybrid closed-loop simulation.
//!
//! The forward path `e → blocks → u → plant → y` is integrated with a
//! fixed-step classic RK4. Sign changes of the reset trigger inside a step
//! are localised by bisection, the reset element's states jump, and the
//! remainder of the step is re-integrated.

mod engine;
mod signal;

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::lti::{LtiError, LtiSystem};
use crate::reset::{ResetElement, ResetError};

pub use engine::{run, simulate, SimOutcome, SimStatus};
pub use signal::{Signal, Tone};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("loop contains {0} reset elements, at most one is supported")]
    MultipleResetElements(usize),
    #[error("block {0} is not SISO")]
    NotSiso(usize),
    #[error("plant feed-through closes an algebraic loop")]
    AlgebraicLoop,
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("reference signal is not finite")]
    InvalidReference,
    #[error("loop diverged at t = {t} s")]
    Diverged { t: f64 },
    #[error("more than {0} reset events")]
    EventStorm(usize),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Reset(#[from] ResetError),
}

/// A forward-path block.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Linear(LtiSystem),
    Reset(ResetElement),
}

impl Block {
    pub fn linear_part(&self) -> &LtiSystem {
        match self {
            Block::Linear(sys) => sys,
            Block::Reset(elem) => elem.base(),
        }
    }

    pub fn order(&self) -> usize {
        self.linear_part().order()
    }
}

impl From<LtiSystem> for Block {
    fn from(sys: LtiSystem) -> Self {
        Block::Linear(sys)
    }
}

impl From<ResetElement> for Block {
    fn from(elem: ResetElement) -> Self {
        Block::Reset(elem)
    }
}

/// Which signal's zero crossings fire the reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetTrigger {
    /// The reset element's own input (`x₁` in a CR chain).
    #[default]
    ElementInput,
    /// The loop error `e = r − y`.
    LoopError,
}

/// Forward path plus plant, closed with unit negative feedback unless
/// built with [`LoopSpec::open`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    blocks: Vec<Block>,
    plant: LtiSystem,
    saturation: Option<f64>,
    closed: bool,
    trigger: ResetTrigger,
}

impl LoopSpec {
    /// Unit negative feedback loop `e = r − y`.
    pub fn closed(blocks: Vec<Block>, plant: LtiSystem) -> Result<Self, SimError> {
        let spec = Self {
            blocks,
            plant,
            saturation: None,
            closed: true,
            trigger: ResetTrigger::ElementInput,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// No feedback: `e = r`, and `y` is the plant driven by `u`.
    pub fn open(blocks: Vec<Block>, plant: LtiSystem) -> Result<Self, SimError> {
        let spec = Self {
            blocks,
            plant,
            saturation: None,
            closed: false,
            trigger: ResetTrigger::ElementInput,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), SimError> {
        let resets = self.blocks.iter().filter(|b| matches!(b, Block::Reset(_))).count();
        if resets > 1 {
            return Err(SimError::MultipleResetElements(resets));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let sys = b.linear_part();
            if sys.inputs() != 1 || sys.outputs() != 1 {
                return Err(SimError::NotSiso(i));
            }
        }
        if self.plant.inputs() != 1 || self.plant.outputs() != 1 {
            return Err(SimError::NotSiso(self.blocks.len()));
        }
        if self.closed && self.plant.feedthrough() != 0.0 {
            return Err(SimError::AlgebraicLoop);
        }
        Ok(())
    }

    /// Symmetric actuator limit `±level` on `u`.
    pub fn with_saturation(mut self, level: Option<f64>) -> Self {
        self.saturation = level;
        self
    }

    pub fn with_trigger(mut self, trigger: ResetTrigger) -> Self {
        self.trigger = trigger;
        self
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn plant(&self) -> &LtiSystem {
        &self.plant
    }

    pub fn saturation(&self) -> Option<f64> {
        self.saturation
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn trigger(&self) -> ResetTrigger {
        self.trigger
    }

    pub fn reset_index(&self) -> Option<usize> {
        self.blocks.iter().position(|b| matches!(b, Block::Reset(_)))
    }

    pub fn reset_element(&self) -> Option<&ResetElement> {
        self.blocks.iter().find_map(|b| match b {
            Block::Reset(e) => Some(e),
            Block::Linear(_) => None,
        })
    }

    /// Same loop with the reset coefficients replaced.
    pub fn with_gammas(&self, gammas: Vec<f64>) -> Result<Self, SimError> {
        let mut out = self.clone();
        for b in &mut out.blocks {
            if let Block::Reset(e) = b {
                *e = e.with_gammas(gammas.clone())?;
            }
        }
        Ok(out)
    }

    /// Every block linear: the reset element replaced by its base system.
    pub fn base_linear(&self) -> Self {
        let mut out = self.clone();
        out.blocks = self
            .blocks
            .iter()
            .map(|b| Block::Linear(b.linear_part().clone()))
            .collect();
        out
    }

    /// Copy with the block at `index` removed.
    pub fn without_block(&self, index: usize) -> Result<Self, SimError> {
        let mut out = self.clone();
        out.blocks.remove(index);
        out.validate()?;
        Ok(out)
    }

    /// Total number of states (blocks then plant).
    pub fn order(&self) -> usize {
        self.blocks.iter().map(Block::order).sum::<usize>() + self.plant.order()
    }

    /// Open-loop n-th harmonic from `e` to `y`: blocks up to and including
    /// the reset element at ω, everything downstream of it at nω. For a
    /// purely linear path only `n = 1` is non-zero.
    pub fn hosidf(&self, omega: f64, n: u32) -> Result<Complex64, SimError> {
        if n == 0 {
            return Err(ResetError::ZeroHarmonic.into());
        }
        let split = match self.reset_index() {
            Some(i) => i,
            None if n == 1 => self.blocks.len(),
            None => return Ok(Complex64::new(0.0, 0.0)),
        };
        let mut h = Complex64::new(1.0, 0.0);
        for b in &self.blocks[..split] {
            h *= b.linear_part().frf(omega)?;
        }
        if let Some(Block::Reset(e)) = self.blocks.get(split) {
            h *= e.hosidf(omega, n)?;
            if h == Complex64::new(0.0, 0.0) {
                return Ok(h);
            }
        }
        let wn = n as f64 * omega;
        for b in self.blocks.iter().skip(split + 1) {
            h *= b.linear_part().frf(wn)?;
        }
        h *= self.plant.frf(wn)?;
        Ok(h)
    }

    /// First-harmonic describing function of the open loop.
    pub fn open_loop_df(&self, omega: f64) -> Result<Complex64, SimError> {
        self.hosidf(omega, 1)
    }
}

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt: f64,
    pub duration: f64,
    /// Bisection width for locating reset instants, seconds.
    pub event_tol: f64,
    /// |y| beyond this multiple of max|r| counts as divergence.
    pub instability_bound: f64,
    /// Keep every `record_stride`-th step in the trace.
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64) -> Self {
        Self {
            dt,
            duration,
            event_tol: dt * 1e-7,
            instability_bound: 100.0,
            record_stride: 1,
        }
    }

    /// `dt = 2π/(2000 ω_c)`, duration 200 crossover periods.
    pub fn for_crossover(omega_c: f64) -> Self {
        let period = 2.0 * PI / omega_c;
        Self::new(period / 2000.0, 200.0 * period)
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.event_tol = self.event_tol.min(dt * 1e-7);
        self.dt = dt;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.event_tol > 0.0 && self.event_tol < self.dt) {
            return bad("event_tol must lie in (0, dt)");
        }
        if !(self.duration >= 10.0 * self.dt && self.duration.is_finite()) {
            return bad("duration must be at least 10 dt");
        }
        if !(self.instability_bound > 0.0) {
            return bad("instability_bound must be positive");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        Ok(())
    }
}

/// Signals selectable from a [`Trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceSignal {
    R,
    E,
    U,
    Y,
    X1,
    X2,
}

/// Uniformly sampled simulation record. `x1`/`x2` are the reset element's
/// input and output (NaN for purely linear loops).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub reset_times: Vec<f64>,
    /// Trigger signal value at each reset instant, before the jump.
    pub reset_levels: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sample spacing.
    pub fn dt(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    pub fn signal(&self, which: TraceSignal) -> &[f64] {
        match which {
            TraceSignal::R => &self.r,
            TraceSignal::E => &self.e,
            TraceSignal::U => &self.u,
            TraceSignal::Y => &self.y,
            TraceSignal::X1 => &self.x1,
            TraceSignal::X2 => &self.x2,
        }
    }

    /// Bitwise equality, NaN-aware.
    pub fn bit_identical(&self, other: &Self) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        same(&self.t, &other.t)
            && same(&self.r, &other.r)
            && same(&self.e, &other.e)
            && same(&self.u, &other.u)
            && same(&self.y, &other.y)
            && same(&self.x1, &other.x1)
            && same(&self.x2, &other.x2)
            && same(&self.reset_times, &other.reset_times)
            && same(&self.reset_levels, &other.reset_levels)
    }
}
