//! Continuous-reset (CR) CgLp control toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`lti`] – SISO state-space blocks built from first-order factors.
//! * [`linalg`] – small dense helpers (matrix exponential, balancing).
//! * [`reset`] – reset elements, their jump map and higher-order sinusoidal
//!   input describing functions, plus the CR lead/lag wrapping.
//! * [`sim`] – fixed-step RK4 hybrid simulation of the feedback loop with
//!   zero-crossing reset events and actuator saturation.
//! * [`tuning`] – PIⁿD and CR CgLp+PIⁿD loop builders and DF phase margin.
//! * [`analysis`] – step metrics, harmonic extraction, sensitivity and
//!   sweep drivers.
//! * [`stability`] – Hβ quadratic-stability certificate search.

pub mod analysis;
pub mod linalg;
pub mod lti;
pub mod reset;
pub mod sim;
pub mod stability;
pub mod tuning;

pub use lti::LtiSystem;
pub use reset::{CrChain, ResetElement};
pub use sim::{Block, LoopSpec, ResetTrigger, Signal, SimConfig, Trace};
pub use tuning::ControllerSpec;
