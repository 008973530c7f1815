//! Continuous-time LTI state-space blocks.
//!
//! Everything in this crate is SISO and frequencies are in rad/s. Blocks are
//! built from first-order factors and cascaded with [`LtiSystem::series`];
//! no balancing or minimisation is attempted since realizations stay small.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("improper factor: a zero corner needs a matching pole corner")]
    ImproperFactor,
    #[error("negative corner frequency {0} rad/s")]
    NegativeCorner(f64),
    #[error("factor has neither a zero nor a pole corner")]
    EmptyFactor,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("jωI - A is singular at ω = {0} rad/s")]
    SingularAtFrequency(f64),
}

/// State-space realization `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "A is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || c.ncols() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "A is {n}x{n}, B is {}x{}, C is {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::DimensionMismatch(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Static SISO gain with no states.
    pub fn gain(k: f64) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, 1),
            c: DMatrix::zeros(1, 0),
            d: DMatrix::from_element(1, 1, k),
        }
    }

    pub fn identity() -> Self {
        Self::gain(1.0)
    }

    /// `gain · N(s) / D(s)` where each of `N`, `D` is `s/ω + 1` for a
    /// positive corner, `s` for a zero corner, or `1` when absent.
    ///
    /// So `first_order(None, Some(0.0), 1.0)` is a pure integrator and the PI
    /// factor `1 + ω_i/s` is `first_order(Some(ω_i), Some(0.0), ω_i)`.
    /// Integrators are kept exact (`A = 0`).
    pub fn first_order(
        zero_corner: Option<f64>,
        pole_corner: Option<f64>,
        gain: f64,
    ) -> Result<Self, LtiError> {
        for w in [zero_corner, pole_corner].into_iter().flatten() {
            if w < 0.0 || w.is_nan() {
                return Err(LtiError::NegativeCorner(w));
            }
        }
        let scalar = |a: f64, b: f64, c: f64, d: f64| Self {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::from_element(1, 1, d),
        };
        match (zero_corner, pole_corner) {
            (None, None) => Err(LtiError::EmptyFactor),
            (Some(_), None) => Err(LtiError::ImproperFactor),
            // 1/(s/wp + 1) with x' = -wp x + wp u
            (None, Some(wp)) if wp > 0.0 => Ok(scalar(-wp, wp, gain, 0.0)),
            (None, Some(_)) => Ok(scalar(0.0, 1.0, gain, 0.0)),
            (Some(wz), Some(wp)) if wp > 0.0 => {
                if wz > 0.0 {
                    Ok(scalar(-wp, wp, gain * (1.0 - wp / wz), gain * wp / wz))
                } else {
                    // s/(s/wp + 1) = wp - wp^2/(s + wp)
                    Ok(scalar(-wp, wp, -gain * wp, gain * wp))
                }
            }
            (Some(wz), Some(_)) => {
                if wz > 0.0 {
                    // (s/wz + 1)/s = 1/wz + 1/s
                    Ok(scalar(0.0, 1.0, gain, gain / wz))
                } else {
                    // s/s
                    Ok(Self::gain(gain))
                }
            }
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Feed-through of a SISO block.
    pub fn feedthrough(&self) -> f64 {
        self.d[(0, 0)]
    }

    /// Output multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * k,
            d: &self.d * k,
        }
    }

    /// Cascade `first` then `second`; states of `first` come first.
    pub fn series(first: &Self, second: &Self) -> Result<Self, LtiError> {
        if first.outputs() != second.inputs() {
            return Err(LtiError::DimensionMismatch(format!(
                "first has {} outputs, second has {} inputs",
                first.outputs(),
                second.inputs()
            )));
        }
        let (n1, n2) = (first.order(), second.order());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
        a.view_mut((n1, 0), (n2, n1))
            .copy_from(&(&second.b * &first.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&second.a);

        let mut b = DMatrix::zeros(n, first.inputs());
        b.view_mut((0, 0), (n1, first.inputs())).copy_from(&first.b);
        b.view_mut((n1, 0), (n2, first.inputs()))
            .copy_from(&(&second.b * &first.d));

        let mut c = DMatrix::zeros(second.outputs(), n);
        c.view_mut((0, 0), (second.outputs(), n1))
            .copy_from(&(&second.d * &first.c));
        c.view_mut((0, n1), (second.outputs(), n2))
            .copy_from(&second.c);

        let d = &second.d * &first.d;
        Self::new(a, b, c, d)
    }

    /// Cascade of all blocks in order. An empty chain is the identity.
    pub fn chain<'a>(blocks: impl IntoIterator<Item = &'a Self>) -> Result<Self, LtiError> {
        blocks
            .into_iter()
            .try_fold(Self::identity(), |acc, blk| Self::series(&acc, blk))
    }

    /// `C (jωI - A)⁻¹ B + D` for a SISO system.
    pub fn frf(&self, omega: f64) -> Result<Complex64, LtiError> {
        let m = self.frf_matrix(omega)?;
        Ok(m[(0, 0)])
    }

    pub fn frf_matrix(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        let n = self.order();
        if n == 0 {
            return Ok(d);
        }
        let jw = Complex64::new(0.0, omega);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { jw } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let scale = self.a.abs().max().max(omega.abs()).max(1.0);
        let lu = m.lu();
        let u = lu.u();
        if (0..n).any(|i| u[(i, i)].norm() <= 1e-13 * scale) {
            return Err(LtiError::SingularAtFrequency(omega));
        }
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = lu
            .solve(&b)
            .ok_or(LtiError::SingularAtFrequency(omega))?;
        let c = self.c.map(|v| Complex64::new(v, 0.0));
        Ok(c * x + d)
    }

    /// Eigenvalues of `A`.
    pub fn poles(&self) -> Vec<Complex64> {
        if self.order() == 0 {
            return Vec::new();
        }
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect()
    }

    /// Zeros of a SISO system with non-zero feed-through: eigenvalues of
    /// `A - B C / D`.
    pub fn zeros(&self) -> Vec<Complex64> {
        let d = self.feedthrough();
        if self.order() == 0 || d == 0.0 {
            return Vec::new();
        }
        let m = &self.a - &self.b * &self.c / d;
        m.complex_eigenvalues().iter().copied().collect()
    }

    /// `A x + B u` for a SISO block.
    pub fn derivative(&self, x: &DVector<f64>, u: f64) -> DVector<f64> {
        &self.a * x + self.b.column(0) * u
    }
}
