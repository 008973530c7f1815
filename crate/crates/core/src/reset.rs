//! Reset elements and their higher-order sinusoidal input describing
//! functions (HOSIDF).
//!
//! A reset element flows as its base linear system `(Ar, Br, Cr, Dr)` and,
//! whenever its trigger signal crosses zero, jumps `x⁺ = Aρ x` with
//! `Aρ = diag(γ₁..γₙ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::linalg::expm;
use crate::lti::{LtiError, LtiSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResetError {
    #[error("reset coefficient {0} outside [-1, 1]")]
    GammaOutOfRange(f64),
    #[error("corner frequency must be non-negative, got {0}")]
    NegativeCorner(f64),
    #[error("reset matrix has {gammas} entries for {states} states")]
    ResetDimension { gammas: usize, states: usize },
    #[error("harmonic matrix {0} is singular at ω = {1} rad/s")]
    SingularHarmonicMatrix(&'static str, f64),
    #[error("describing function needs ω > 0, got {0}")]
    NonpositiveFrequency(f64),
    #[error("harmonic index must be positive")]
    ZeroHarmonic,
    #[error("CR chain needs 0 < ω_l < ω_h, got ω_l = {omega_l}, ω_h = {omega_h}")]
    LeadNotLeading { omega_l: f64, omega_h: f64 },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Base linear system plus diagonal reset matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetElement {
    base: LtiSystem,
    gammas: Vec<f64>,
}

impl ResetElement {
    pub fn new(base: LtiSystem, gammas: Vec<f64>) -> Result<Self, ResetError> {
        if base.inputs() != 1 || base.outputs() != 1 {
            return Err(ResetError::Lti(LtiError::DimensionMismatch(
                "reset elements are SISO".into(),
            )));
        }
        if gammas.len() != base.order() {
            return Err(ResetError::ResetDimension {
                gammas: gammas.len(),
                states: base.order(),
            });
        }
        if let Some(&g) = gammas.iter().find(|g| !(g.abs() <= 1.0)) {
            return Err(ResetError::GammaOutOfRange(g));
        }
        Ok(Self { base, gammas })
    }

    /// First-order reset element `1/(s/ω_rα + 1)` with reset coefficient γ.
    ///
    /// `omega_ralpha = 0` gives the Clegg integrator. Its gain convention is
    /// `Br = 1`, i.e. transfer `1/s` rather than the vanishing `ω_rα/s`.
    pub fn fore(omega_ralpha: f64, gamma: f64) -> Result<Self, ResetError> {
        if !(omega_ralpha >= 0.0) {
            return Err(ResetError::NegativeCorner(omega_ralpha));
        }
        if !(gamma.abs() <= 1.0) {
            return Err(ResetError::GammaOutOfRange(gamma));
        }
        let base = LtiSystem::first_order(None, Some(omega_ralpha), 1.0)?;
        Self::new(base, vec![gamma])
    }

    pub fn clegg() -> Self {
        Self::fore(0.0, 0.0).expect("Clegg integrator is well-formed")
    }

    pub fn base(&self) -> &LtiSystem {
        &self.base
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn reset_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.gammas))
    }

    /// The element with γ replaced, keeping the base linear system.
    pub fn with_gammas(&self, gammas: Vec<f64>) -> Result<Self, ResetError> {
        Self::new(self.base.clone(), gammas)
    }

    /// `x(t⁺) = Aρ x(t)`.
    pub fn jump(&self, state: &DVector<f64>) -> DVector<f64> {
        assert_eq!(state.len(), self.gammas.len(), "reset state dimension");
        state.component_mul(&DVector::from_column_slice(&self.gammas))
    }

    /// In-place jump on a state slice.
    pub fn jump_in_place(&self, state: &mut [f64]) {
        for (x, g) in state.iter_mut().zip(&self.gammas) {
            *x *= g;
        }
    }

    /// n-th harmonic describing function for input `sin(ωt)`, with resets
    /// at the input zero crossings.
    ///
    /// ```text
    /// H₁ = Cr (jωI − Ar)⁻¹ (I + jΘ) Br + Dr
    /// Hₙ = Cr (jnωI − Ar)⁻¹ jΘ Br          odd n ≥ 3
    /// Hₙ = 0                                even n
    /// Θ  = −(2ω²/π) Δ (Γ − Λ⁻¹)
    /// Λ  = ω²I + Ar²,  Δ = I + e^{πAr/ω},  Δρ = I + Aρ e^{πAr/ω}
    /// Γ  = Δρ⁻¹ Aρ Δ Λ⁻¹
    /// ```
    pub fn hosidf(&self, omega: f64, n: u32) -> Result<Complex64, ResetError> {
        if !(omega > 0.0) {
            return Err(ResetError::NonpositiveFrequency(omega));
        }
        if n == 0 {
            return Err(ResetError::ZeroHarmonic);
        }
        if n % 2 == 0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let theta = self.theta(omega)?;
        let ar = self.base.a();
        let br = self.base.b();
        let cr = self.base.c();
        let nr = self.order();

        let w = n as f64 * omega;
        let resolvent_arg = DMatrix::from_fn(nr, nr, |i, j| {
            let diag = if i == j { Complex64::new(0.0, w) } else { Complex64::new(0.0, 0.0) };
            diag - ar[(i, j)]
        });
        let jtheta_b = (&theta * br).map(|v| Complex64::new(0.0, v));
        let rhs = if n == 1 {
            br.map(|v| Complex64::new(v, 0.0)) + jtheta_b
        } else {
            jtheta_b
        };
        let x = resolvent_arg
            .lu()
            .solve(&rhs)
            .ok_or(ResetError::SingularHarmonicMatrix("jnωI - Ar", omega))?;
        let cr = cr.map(|v| Complex64::new(v, 0.0));
        let mut h = (cr * x)[(0, 0)];
        if n == 1 {
            h += self.base.feedthrough();
        }
        Ok(h)
    }

    fn theta(&self, omega: f64) -> Result<DMatrix<f64>, ResetError> {
        let nr = self.order();
        let ar = self.base.a();
        let eye = DMatrix::<f64>::identity(nr, nr);
        let arho = self.reset_matrix();

        let lambda = &eye * (omega * omega) + ar * ar;
        let lambda_inv = invert(&lambda).ok_or(ResetError::SingularHarmonicMatrix("Λ", omega))?;
        let e = expm(&(ar * (PI / omega)));
        let delta = &eye + &e;
        let delta_rho = &eye + &arho * &e;
        let delta_rho_inv =
            invert(&delta_rho).ok_or(ResetError::SingularHarmonicMatrix("Δρ", omega))?;
        // Γ − Λ⁻¹ = Δρ⁻¹(AρΔ − Δρ)Λ⁻¹ = Δρ⁻¹(Aρ − I)Λ⁻¹, exactly zero when Aρ = I.
        let gamma_minus = delta_rho_inv * (&arho - &eye) * &lambda_inv;
        Ok(delta * gamma_minus * (-2.0 * omega * omega / PI))
    }
}

fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    let lu = m.clone().lu();
    let u = lu.u();
    if (0..m.nrows()).any(|i| u[(i, i)].abs() <= 1e-13 * scale) {
        return None;
    }
    lu.try_inverse()
}

/// Reset element wrapped in the continuous-reset architecture:
/// `L(s) = (s/ω_l + 1)/(s/ω_h + 1)` before it, then the linear lead `D(s)`,
/// then `R(s) = 1/(s/ω_l + 1)`.
///
/// The element then resets on the zero crossings of `x₁ = L e`, which for
/// large `ω_h` is `ė/ω_l + e`, and its lagged output is continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct CrChain {
    pre: LtiSystem,
    element: ResetElement,
    post_lead: LtiSystem,
    post_lag: LtiSystem,
    omega_l: f64,
    omega_h: f64,
}

impl CrChain {
    pub fn new(
        omega_l: f64,
        omega_h: f64,
        element: ResetElement,
        post_lead: LtiSystem,
    ) -> Result<Self, ResetError> {
        if !(omega_l > 0.0 && omega_h > omega_l && omega_h.is_finite()) {
            return Err(ResetError::LeadNotLeading { omega_l, omega_h });
        }
        Ok(Self {
            pre: LtiSystem::first_order(Some(omega_l), Some(omega_h), 1.0)?,
            element,
            post_lead,
            post_lag: LtiSystem::first_order(None, Some(omega_l), 1.0)?,
            omega_l,
            omega_h,
        })
    }

    pub fn pre(&self) -> &LtiSystem {
        &self.pre
    }

    pub fn element(&self) -> &ResetElement {
        &self.element
    }

    pub fn post_lead(&self) -> &LtiSystem {
        &self.post_lead
    }

    pub fn post_lag(&self) -> &LtiSystem {
        &self.post_lag
    }

    pub fn omega_l(&self) -> f64 {
        self.omega_l
    }

    pub fn omega_h(&self) -> f64 {
        self.omega_h
    }

    /// n-th harmonic of the chain followed by `extra_post`. The pre-filter is
    /// evaluated at the input frequency and everything after the element at
    /// the n-th harmonic.
    pub fn hosidf(
        &self,
        extra_post: &LtiSystem,
        omega: f64,
        n: u32,
    ) -> Result<Complex64, ResetError> {
        let h = self.element.hosidf(omega, n)?;
        if h == Complex64::new(0.0, 0.0) {
            return Ok(h);
        }
        let wn = n as f64 * omega;
        Ok(self.pre.frf(omega)?
            * h
            * self.post_lead.frf(wn)?
            * self.post_lag.frf(wn)?
            * extra_post.frf(wn)?)
    }
}
