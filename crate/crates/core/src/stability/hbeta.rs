use nalgebra::{DMatrix, DVector};

use super::{ClosedLoopMatrices, StabilityError};
use crate::linalg::{balance, spectral_norm, sym_eig_range};

/// Witness `(β, P_ρ, P)` for the Hβ condition with one reset state.
#[derive(Debug, Clone, PartialEq)]
pub struct HbetaCertificate {
    pub p: DMatrix<f64>,
    pub beta: f64,
    pub p_rho: f64,
    /// Largest eigenvalue of `AclᵀP + P Acl`.
    pub lyapunov_margin: f64,
    /// Smallest eigenvalue of `P`.
    pub p_min_eig: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HbetaOutcome {
    Certified(HbetaCertificate),
    /// No certificate found. `best_margin` is the smallest normalised
    /// `λ_max` reached by the search (`None` when `Acl` is not Hurwitz).
    NotCertified { best_margin: Option<f64> },
}

impl HbetaOutcome {
    pub fn certificate(&self) -> Option<&HbetaCertificate> {
        match self {
            HbetaOutcome::Certified(c) => Some(c),
            HbetaOutcome::NotCertified { .. } => None,
        }
    }
}

/// Result of re-checking a certificate by direct matrix arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub lyapunov_max_eig: f64,
    pub p_min_eig: f64,
    /// `‖B0ᵀP − C0‖∞`
    pub equality_residual: f64,
    /// `γ² P_ρ − P_ρ` (largest over reset states).
    pub reset_residual: f64,
    pub eps: f64,
    pub eps_margin: f64,
}

impl Verification {
    pub fn holds(&self) -> bool {
        self.lyapunov_max_eig < -self.eps_margin
            && self.p_min_eig > self.eps
            && self.equality_residual < 1e-8
            && self.reset_residual <= 0.0
    }
}

/// Check the four Hβ relations for `cert` directly on `m` and `gammas`.
pub fn verify_certificate(
    m: &ClosedLoopMatrices,
    gammas: &[f64],
    cert: &HbetaCertificate,
) -> Verification {
    let norm = spectral_norm(&m.acl);
    let p = (&cert.p + cert.p.transpose()) * 0.5;
    let lyap = m.acl.transpose() * &p + &p * &m.acl;
    let (_, lyap_max) = sym_eig_range(&lyap);
    let (p_min, _) = sym_eig_range(&p);
    let residual = m.b0().transpose() * &p - m.c0(cert.beta, cert.p_rho);
    let equality_residual = residual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let reset_residual = gammas
        .iter()
        .map(|g| g * g * cert.p_rho - cert.p_rho)
        .fold(f64::NEG_INFINITY, f64::max);
    Verification {
        lyapunov_max_eig: lyap_max,
        p_min_eig: p_min,
        equality_residual,
        reset_residual,
        eps: 1e-9 * norm,
        eps_margin: 1e-6 * norm,
    }
}

/// Search for an Hβ certificate.
///
/// The constraint `B0ᵀP = C0` fixes the last row of `P` to
/// `[β C_p, 0, P_ρ]`. With `P_ρ = 1` the remaining entries of `P` and `β`
/// are chosen to minimise `λ_max(AclᵀP + P Acl)` by a log-barrier Newton
/// method in diagonally balanced coordinates. Since the conditions are
/// homogeneous in `(P, β, P_ρ)`, a feasible point is then scaled by a power
/// of two until the absolute tolerances hold, and re-verified in the
/// original coordinates.
pub fn hbeta_check(m: &ClosedLoopMatrices, gammas: &[f64]) -> Result<HbetaOutcome, StabilityError> {
    if m.n_reset != 1 {
        return Err(StabilityError::UnsupportedResetDimension(m.n_reset));
    }
    if gammas.len() != 1 || !gammas.iter().all(|g| g.abs() <= 1.0) {
        return Err(StabilityError::InvalidGammas(gammas.to_vec()));
    }
    let max_re = m
        .acl
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_re < 0.0) {
        return Ok(HbetaOutcome::NotCertified { best_margin: None });
    }

    let problem = Barrier::new(m);
    let mut best = f64::INFINITY;
    let mut found = None;
    problem.solve(|z, margin| {
        best = best.min(margin);
        if margin >= 0.0 {
            return false;
        }
        if let Some(cert) = problem.certificate(m, gammas, z) {
            found = Some(cert);
            return true;
        }
        false
    });
    Ok(match found {
        Some(c) => HbetaOutcome::Certified(c),
        None => HbetaOutcome::NotCertified {
            best_margin: Some(best),
        },
    })
}

/// `P̃(x) = P0 + Σ x_k E_k` in balanced coordinates; the last variable is β.
struct Barrier {
    n: usize,
    scale: DVector<f64>,
    p0: DMatrix<f64>,
    basis: Vec<DMatrix<f64>>,
    m_basis: Vec<DMatrix<f64>>,
    m0: DMatrix<f64>,
    kappa: f64,
}

const OUTER_ITERS: usize = 40;
const INNER_ITERS: usize = 100;

impl Barrier {
    fn new(m: &ClosedLoopMatrices) -> Self {
        let n = m.order();
        let (ab, d) = balance(&m.acl);
        let a_hat = &ab / spectral_norm(&ab);
        let last = n - 1;
        let mut p0 = DMatrix::zeros(n, n);
        p0[(last, last)] = d[last] * d[last];
        let mut basis = Vec::new();
        for i in 0..last {
            for j in i..last {
                let mut e = DMatrix::zeros(n, n);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                basis.push(e);
            }
        }
        let mut eb = DMatrix::zeros(n, n);
        for j in 0..m.n_plant {
            let v = d[last] * d[j] * m.c_plant[j];
            eb[(last, j)] = v;
            eb[(j, last)] = v;
        }
        basis.push(eb);
        let lyap = |p: &DMatrix<f64>| a_hat.transpose() * p + p * &a_hat;
        let m_basis = basis.iter().map(lyap).collect();
        let m0 = lyap(&p0);
        Self {
            n,
            scale: d,
            p0,
            basis,
            m_basis,
            m0,
            kappa: 10.0 * n as f64,
        }
    }

    fn p_of(&self, x: &[f64]) -> DMatrix<f64> {
        let mut p = self.p0.clone();
        for (xk, e) in x.iter().zip(&self.basis) {
            if *xk != 0.0 {
                p += e * *xk;
            }
        }
        p
    }

    fn m_of(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.m0.clone();
        for (xk, e) in x.iter().zip(&self.m_basis) {
            if *xk != 0.0 {
                m += e * *xk;
            }
        }
        m
    }

    /// Barrier value, and gradient and Hessian when requested.
    fn eval(&self, z: &[f64], tt: f64, kappa: f64, derivs: bool) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let nv = z.len() - 1;
        let (x, mval) = (&z[..nv], z[nv]);
        let eye = DMatrix::<f64>::identity(self.n, self.n);
        let s1 = &eye * mval - self.m_of(x);
        let s2 = self.p_of(x);
        let s3 = kappa - s2.trace();
        if !(s3 > 0.0) {
            return None;
        }
        let c1 = s1.cholesky()?;
        let c2 = s2.cholesky()?;
        let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let f = tt * mval - logdet(&c1.l()) - logdet(&c2.l()) - s3.ln();
        if !f.is_finite() {
            return None;
        }
        if !derivs {
            return Some((f, DVector::zeros(0), DMatrix::zeros(0, 0)));
        }
        let i1 = c1.inverse();
        let i2 = c2.inverse();
        let nz = nv + 1;
        let mut a1: Vec<DMatrix<f64>> = self.m_basis.iter().map(|mb| -(&i1 * mb)).collect();
        a1.push(i1.clone());
        let a2: Vec<DMatrix<f64>> = self.basis.iter().map(|e| &i2 * e).collect();
        let mut d3: Vec<f64> = self.basis.iter().map(|e| -e.trace()).collect();
        d3.push(0.0);

        let tr_prod = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
            let mut s = 0.0;
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    s += a[(i, j)] * b[(j, i)];
                }
            }
            s
        };
        let mut g = DVector::zeros(nz);
        let mut h = DMatrix::zeros(nz, nz);
        for a in 0..nz {
            let t2a = if a < nv { a2[a].trace() } else { 0.0 };
            g[a] = -a1[a].trace() - t2a - d3[a] / s3;
            for b in a..nz {
                let mut v = tr_prod(&a1[a], &a1[b]) + d3[a] * d3[b] / (s3 * s3);
                if a < nv && b < nv {
                    v += tr_prod(&a2[a], &a2[b]);
                }
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        g[nv] += tt;
        Some((f, g, h))
    }

    /// Runs the path-following loop, calling `accept(z, m)` after each
    /// centring step; stops when it returns true.
    fn solve(&self, mut accept: impl FnMut(&[f64], f64) -> bool) {
        let nv = self.basis.len();
        let last = self.n - 1;
        let mut x = vec![0.0; nv];
        let mut k = 0;
        for i in 0..last {
            for j in i..last {
                if i == j {
                    x[k] = 1.0;
                }
                k += 1;
            }
        }
        let (_, mmax) = sym_eig_range(&self.m_of(&x));
        let kappa = self.kappa.max(2.0 * self.p_of(&x).trace());
        let mut z = x;
        z.push(mmax + 1.0);
        let barrier_terms = (2 * self.n + 1) as f64;
        let mut tt = 1.0;
        for _ in 0..OUTER_ITERS {
            for _ in 0..INNER_ITERS {
                let Some((f, g, h)) = self.eval(&z, tt, kappa, true) else {
                    return;
                };
                let Some(dz) = h.clone().cholesky().map(|c| c.solve(&(-&g))) else {
                    break;
                };
                let decrement = -g.dot(&dz);
                if decrement / 2.0 < 1e-10 {
                    break;
                }
                let mut step = 1.0;
                let mut moved = false;
                while step > 1e-12 {
                    let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + step * b).collect();
                    if let Some((f2, _, _)) = self.eval(&trial, tt, kappa, false) {
                        if f2 <= f - 0.25 * step * decrement {
                            z = trial;
                            moved = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            let margin = z[nv];
            if accept(&z, margin) {
                return;
            }
            // The centred point is within `terms/tt` of the optimum.
            if margin - barrier_terms / tt > 0.0 {
                return;
            }
            tt *= 4.0;
        }
    }

    fn certificate(&self, m: &ClosedLoopMatrices, gammas: &[f64], z: &[f64]) -> Option<HbetaCertificate> {
        let nv = self.basis.len();
        let p_bal = self.p_of(&z[..nv]);
        let n = self.n;
        let d = &self.scale;
        let mut p = DMatrix::from_fn(n, n, |i, j| p_bal[(i, j)] / (d[i] * d[j]));
        let beta = z[nv - 1];
        // Pin the constrained row exactly.
        let c0 = m.c0(beta, 1.0);
        for j in 0..n {
            p[(n - 1, j)] = c0[j];
            p[(j, n - 1)] = c0[j];
        }
        let mut cert = HbetaCertificate {
            p,
            beta,
            p_rho: 1.0,
            lyapunov_margin: 0.0,
            p_min_eig: 0.0,
        };
        let v = verify_certificate(m, gammas, &cert);
        if !(v.lyapunov_max_eig < 0.0 && v.p_min_eig > 0.0) {
            return None;
        }
        let need = (v.eps / v.p_min_eig).max(v.eps_margin / -v.lyapunov_max_eig);
        let factor = if need > 1.0 { 2f64.powi(need.log2().ceil() as i32 + 1) } else { 1.0 };
        cert.p *= factor;
        cert.beta *= factor;
        cert.p_rho *= factor;
        let v = verify_certificate(m, gammas, &cert);
        cert.lyapunov_margin = v.lyapunov_max_eig;
        cert.p_min_eig = v.p_min_eig;
        v.holds().then_some(cert)
    }
}
