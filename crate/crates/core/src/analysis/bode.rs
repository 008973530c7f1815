use num_complex::Complex64;

use super::AnalysisError;
use crate::sim::LoopSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodeRow {
    pub omega: f64,
    pub n: u32,
    pub value: Complex64,
}

/// Open-loop describing function of `loop_spec` on `omega_grid` for each
/// requested harmonic. Rows are ordered by frequency, then harmonic.
pub fn bode_data(
    loop_spec: &LoopSpec,
    omega_grid: &[f64],
    harmonics: &[u32],
) -> Result<Vec<BodeRow>, AnalysisError> {
    if omega_grid.iter().any(|w| !(*w > 0.0)) || omega_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(AnalysisError::InvalidArgument(
            "frequency grid must be positive and strictly increasing".into(),
        ));
    }
    let mut rows = Vec::with_capacity(omega_grid.len() * harmonics.len());
    for &omega in omega_grid {
        for &n in harmonics {
            rows.push(BodeRow {
                omega,
                n,
                value: loop_spec.hosidf(omega, n)?,
            });
        }
    }
    Ok(rows)
}

/// Logarithmically spaced grid with `points` samples on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    (0..points)
        .map(|k| lo * (hi / lo).powf(k as f64 / (points - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuning::{build_controller, mass_plant, ControllerSpec};

    #[test]
    fn linear_rows() {
        let built = build_controller(&ControllerSpec::pind(2), &mass_plant()).unwrap();
        let grid = log_grid(1.0, 1e4, 9);
        let rows = bode_data(&built.loop_spec, &grid, &[1, 3]).unwrap();
        assert_eq!(rows.len(), 18);
        for r in &rows {
            if r.n == 3 {
                assert_eq!(r.value, Complex64::new(0.0, 0.0));
            } else {
                let mut prod = Complex64::new(1.0, 0.0);
                for b in built.loop_spec.blocks() {
                    prod *= b.linear_part().frf(r.omega).unwrap();
                }
                prod *= built.loop_spec.plant().frf(r.omega).unwrap();
                assert!((prod - r.value).norm() <= 1e-10 * prod.norm());
            }
        }
    }

    #[test]
    fn bad_grid() {
        let built = build_controller(&ControllerSpec::pind(1), &mass_plant()).unwrap();
        assert!(bode_data(&built.loop_spec, &[10.0, 5.0], &[1]).is_err());
    }
}
