//! Hβ quadratic-stability certificate for a reset feedback loop.
//!
//! States are ordered (plant, non-resetting controller, resetting). A
//! certificate is a symmetric `P ≻ 0` with `AclᵀP + P Acl ≺ 0` whose last
//! row equals `[β C_p, 0, P_ρ]`, plus `γ² P_ρ ≤ P_ρ`. Failure to find one
//! means "not certified", never "unstable".

mod assemble;
mod hbeta;

pub use assemble::{assemble_closed_loop, assemble_from_blocks, ClosedLoopMatrices};
pub use hbeta::{hbeta_check, verify_certificate, HbetaCertificate, HbetaOutcome, Verification};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("{0} reset elements in the loop; at most one is supported")]
    MultipleResetElements(usize),
    #[error("only a single reset state is supported (got {0})")]
    UnsupportedResetDimension(usize),
    #[error("reset coefficients {0:?} must be one value in [-1, 1]")]
    InvalidGammas(Vec<f64>),
    #[error("loop is not closed")]
    OpenLoop,
    #[error("plant has direct feedthrough")]
    PlantFeedthrough,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuning::{build_controller, mass_plant, ControllerSpec};

    #[test]
    fn linear_loop_has_no_reset_state() {
        let built = build_controller(&ControllerSpec::pind(1), &mass_plant()).unwrap();
        let m = assemble_closed_loop(&built.loop_spec).unwrap();
        assert!(matches!(
            hbeta_check(&m, &[0.0]),
            Err(StabilityError::UnsupportedResetDimension(0))
        ));
    }

    #[test]
    fn baseline_cr_pid_is_certified() {
        let built = build_controller(&ControllerSpec::cr_pind(1), &mass_plant()).unwrap();
        let m = assemble_closed_loop(&built.loop_spec).unwrap();
        let out = hbeta_check(&m, &[0.0]).unwrap();
        let cert = out.certificate().expect("certificate");
        let v = verify_certificate(&m, &[0.0], cert);
        assert!(v.holds(), "{v:?}");
    }

    #[test]
    fn unit_reset_residual_is_zero() {
        let built = build_controller(&ControllerSpec::cr_pind(1), &mass_plant()).unwrap();
        let m = assemble_closed_loop(&built.loop_spec).unwrap();
        let cert = HbetaCertificate {
            p: nalgebra::DMatrix::identity(m.order(), m.order()),
            beta: 0.0,
            p_rho: 3.7,
            lyapunov_margin: 0.0,
            p_min_eig: 1.0,
        };
        for g in [1.0, -1.0] {
            assert_eq!(verify_certificate(&m, &[g], &cert).reset_residual, 0.0);
        }
    }
}
