//! Residual report for a candidate solution, computed from the problem data alone.

use serde::{Deserialize, Serialize};

use crate::linalg::min_eig;
use crate::relax::{SdpProblem, SdpSolution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub label: String,
    pub dim: usize,
    /// Smallest eigenvalue of `S_k(y)`.
    pub slack_min_eig: f64,
    /// Smallest eigenvalue of `X_k` (NaN when no dual matrix is present).
    pub dual_min_eig: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub objective: f64,
    pub dual_objective: f64,
    /// `|objective - dual_objective| / (1 + |objective| + |dual_objective|)`.
    pub relative_gap: f64,
    /// `max_k max(0, -lambda_min(S_k))`.
    pub primal_violation: f64,
    /// `||A(X) - c|| / (1 + ||c||)`, NaN without dual matrices.
    pub dual_residual: f64,
    pub blocks: Vec<BlockCheck>,
    /// Label of the block with the most negative slack eigenvalue.
    pub worst_block: Option<String>,
}

impl VerifyReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.primal_violation <= tol && self.relative_gap <= tol && !(self.dual_residual > tol)
    }
}

pub fn verify(problem: &SdpProblem, solution: &SdpSolution) -> VerifyReport {
    let y = &solution.y;
    let has_x = solution.x.len() == problem.blocks.len();
    let mut blocks = Vec::with_capacity(problem.blocks.len());
    let mut ax = vec![0.0; problem.n_y];
    let mut dobj = problem.offset;
    let mut worst: Option<(f64, String)> = None;
    for (k, blk) in problem.blocks.iter().enumerate() {
        let e = min_eig(&blk.evaluate(y));
        let mut dual_min = f64::NAN;
        if has_x {
            let x = &solution.x[k];
            dual_min = min_eig(x);
            dobj -= blk.constant.inner(x);
            for (i, c) in &blk.coeffs {
                ax[*i] += c.inner(x);
            }
        }
        if worst.as_ref().map_or(true, |w| e < w.0) {
            worst = Some((e, blk.label.clone()));
        }
        blocks.push(BlockCheck {
            label: blk.label.clone(),
            dim: blk.dim,
            slack_min_eig: e,
            dual_min_eig: dual_min,
        });
    }
    let objective = problem.objective_value(y);
    let (dual_objective, dual_residual) = if has_x {
        let c_norm = problem.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = ax
            .iter()
            .zip(&problem.objective)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        (dobj, r / (1.0 + c_norm))
    } else {
        (f64::NAN, f64::NAN)
    };
    let primal_violation = blocks.iter().fold(0.0f64, |a, b| a.max(-b.slack_min_eig));
    VerifyReport {
        objective,
        dual_objective,
        relative_gap: (objective - dual_objective).abs() / (1.0 + objective.abs() + dual_objective.abs()),
        primal_violation,
        dual_residual,
        blocks,
        worst_block: worst.filter(|w| w.0 < 0.0).map(|w| w.1),
    }
}
