use nalgebra::{DMatrix, RowDVector};

use super::StabilityError;
use crate::lti::LtiSystem;
use crate::sim::{Block, LoopSpec};

/// Flow matrix of the unit negative feedback loop with states ordered as
/// (plant, non-resetting controller, resetting).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMatrices {
    pub acl: DMatrix<f64>,
    pub n_plant: usize,
    pub n_nonreset: usize,
    pub n_reset: usize,
    /// Plant output row, `1 × n_plant`.
    pub c_plant: RowDVector<f64>,
}

impl ClosedLoopMatrices {
    pub fn order(&self) -> usize {
        self.n_plant + self.n_nonreset + self.n_reset
    }

    /// `B0 = [0; 0; I]`, `N × n_r`.
    pub fn b0(&self) -> DMatrix<f64> {
        let n = self.order();
        let mut b = DMatrix::zeros(n, self.n_reset);
        for k in 0..self.n_reset {
            b[(n - self.n_reset + k, k)] = 1.0;
        }
        b
    }

    /// `C0 = [β C_p, 0, P_ρ]` for a single reset state.
    pub fn c0(&self, beta: f64, p_rho: f64) -> RowDVector<f64> {
        let mut row = RowDVector::zeros(self.order());
        for j in 0..self.n_plant {
            row[j] = beta * self.c_plant[j];
        }
        if self.n_reset > 0 {
            row[self.order() - 1] = p_rho;
        }
        row
    }
}

/// Closed-loop flow matrix of `loop_spec` (reset states last).
pub fn assemble_closed_loop(loop_spec: &LoopSpec) -> Result<ClosedLoopMatrices, StabilityError> {
    if !loop_spec.is_closed() {
        return Err(StabilityError::OpenLoop);
    }
    assemble_from_blocks(loop_spec.blocks(), loop_spec.plant())
}

/// Same as [`assemble_closed_loop`] for a raw forward path.
pub fn assemble_from_blocks(
    blocks: &[Block],
    plant: &LtiSystem,
) -> Result<ClosedLoopMatrices, StabilityError> {
    let resets = blocks.iter().filter(|b| matches!(b, Block::Reset(_))).count();
    if resets > 1 {
        return Err(StabilityError::MultipleResetElements(resets));
    }
    if plant.feedthrough() != 0.0 {
        return Err(StabilityError::PlantFeedthrough);
    }

    // Natural order: blocks in forward order, then the plant.
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut total = 0;
    for b in blocks {
        offsets.push(total);
        total += b.order();
    }
    let plant_off = total;
    let np = plant.order();
    total += np;

    let mut a = DMatrix::<f64>::zeros(total, total);
    // e = -C_p x_p
    let mut input = RowDVector::<f64>::zeros(total);
    for j in 0..np {
        input[plant_off + j] = -plant.c()[(0, j)];
    }
    for (b, &off) in blocks.iter().zip(&offsets) {
        let sys = b.linear_part();
        let n = sys.order();
        for i in 0..n {
            for j in 0..n {
                a[(off + i, off + j)] += sys.a()[(i, j)];
            }
            for j in 0..total {
                a[(off + i, j)] += sys.b()[(i, 0)] * input[j];
            }
        }
        let mut out = input.clone() * sys.feedthrough();
        for j in 0..n {
            out[off + j] += sys.c()[(0, j)];
        }
        input = out;
    }
    for i in 0..np {
        for j in 0..np {
            a[(plant_off + i, plant_off + j)] += plant.a()[(i, j)];
        }
        for j in 0..total {
            a[(plant_off + i, j)] += plant.b()[(i, 0)] * input[j];
        }
    }

    let mut order: Vec<usize> = (plant_off..plant_off + np).collect();
    let mut reset_states = Vec::new();
    for (b, &off) in blocks.iter().zip(&offsets) {
        let idx = off..off + b.order();
        match b {
            Block::Reset(_) => reset_states.extend(idx),
            Block::Linear(_) => order.extend(idx),
        }
    }
    let n_reset = reset_states.len();
    order.extend(reset_states);

    let acl = DMatrix::from_fn(total, total, |p, q| a[(order[p], order[q])]);
    let c_plant = RowDVector::from_fn(np, |_, j| plant.c()[(0, j)]);
    Ok(ClosedLoopMatrices {
        acl,
        n_plant: np,
        n_nonreset: total - np - n_reset,
        n_reset,
        c_plant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reset::ResetElement;
    use crate::tuning::{build_controller, mass_plant, ControllerSpec};

    #[test]
    fn dimensions_for_cr_pid() {
        let built = build_controller(&ControllerSpec::cr_pind(1), &mass_plant()).unwrap();
        let m = assemble_closed_loop(&built.loop_spec).unwrap();
        assert_eq!(m.n_plant, 2);
        assert_eq!(m.n_reset, 1);
        // L, D, R, tamed differentiator, one PI
        assert_eq!(m.n_nonreset, 5);
        assert_eq!(m.acl.nrows(), 8);
        assert_eq!(m.b0().column(0).iter().sum::<f64>(), 1.0);
        assert_eq!(m.b0()[(7, 0)], 1.0);
    }

    #[test]
    fn two_resets_rejected() {
        let blocks = vec![
            Block::Reset(ResetElement::clegg()),
            Block::Reset(ResetElement::clegg()),
        ];
        assert!(matches!(
            assemble_from_blocks(&blocks, &mass_plant()),
            Err(StabilityError::MultipleResetElements(2))
        ));
    }

    #[test]
    fn scalar_loop() {
        // k/(s+1) around 1/(s+2): x1' = -x1 - k x2 ... reordered plant first
        let ctrl = LtiSystem::first_order(None, Some(1.0), 3.0).unwrap();
        let plant = LtiSystem::first_order(None, Some(2.0), 1.0).unwrap();
        let m = assemble_from_blocks(&[Block::Linear(ctrl)], &plant).unwrap();
        // plant: x_p' = -2 x_p + 2 x_c ; ctrl: x_c' = -x_c + 1·(-x_p), output 3 x_c
        let want = DMatrix::from_row_slice(2, 2, &[-2.0, 6.0, -1.0, -1.0]);
        assert_eq!(m.acl, want);
    }
}
