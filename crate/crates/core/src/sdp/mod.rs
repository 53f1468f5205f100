//! Primal-dual interior-point solver for block SDPs of the form
//! `min c^T y s.t. B_0^k + sum_i y_i B_i^k >= 0`, SDPA file exchange, and an
//! independent residual check for returned solutions.

mod ipm;
pub mod sdpa;
pub mod verify;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::relax::{SdpProblem, SdpSolution};

pub use sdpa::{export_sdpa, import_sdpa, read_sdpa, write_sdpa};
pub use verify::{verify, BlockCheck, VerifyReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target for relative gap and both infeasibilities.
    pub tol: f64,
    /// Accepted as `OptimalInaccurate` when `tol` cannot be reached.
    pub loose_tol: f64,
    pub max_iter: usize,
    /// Lower bound on the fraction of the step to the boundary.
    pub step_factor: f64,
    /// Per-iteration log on stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            loose_tol: 1e-6,
            max_iter: 100,
            step_factor: 0.9,
            verbose: false,
        }
    }
}

/// Solves `problem`. Non-convergence is reported through the solution status,
/// with the best iterate found; malformed problems are errors.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    ipm::solve(problem, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relax::{AffineBlock, SolveStatus, SymSparse};

    fn block(dim: usize, constant: Vec<(u32, u32, f64)>, coeffs: Vec<(usize, Vec<(u32, u32, f64)>)>) -> AffineBlock {
        AffineBlock {
            label: "b".into(),
            dim,
            constant: SymSparse { entries: constant },
            coeffs: coeffs
                .into_iter()
                .map(|(i, e)| (i, SymSparse { entries: e }))
                .collect(),
        }
    }

    fn problem(n_y: usize, objective: Vec<f64>, blocks: Vec<AffineBlock>) -> SdpProblem {
        SdpProblem {
            n_y,
            objective,
            offset: 0.0,
            blocks,
            n_vars: None,
            order: None,
        }
    }

    #[test]
    fn two_by_two_toy() {
        // min y s.t. [[1, y], [y, 1]] >= 0  has optimum -1
        let p = problem(1, vec![1.0], vec![block(2, vec![(0, 0, 1.0), (1, 1, 1.0)], vec![(0, vec![(0, 1, 1.0)])])]);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-7, "{}", s.objective);
        assert!((s.dual_objective + 1.0).abs() < 1e-7);
    }

    #[test]
    fn lp_as_diagonal_blocks() {
        // min -y1 - y2 s.t. y1 >= 0, y2 >= 0, 1 - y1 - y2 >= 0, y1 <= 0.3
        let p = problem(
            2,
            vec![-1.0, -2.0],
            vec![
                block(1, vec![], vec![(0, vec![(0, 0, 1.0)])]),
                block(1, vec![], vec![(1, vec![(0, 0, 1.0)])]),
                block(1, vec![(0, 0, 1.0)], vec![(0, vec![(0, 0, -1.0)]), (1, vec![(0, 0, -1.0)])]),
                block(1, vec![(0, 0, 0.3)], vec![(0, vec![(0, 0, -1.0)])]),
            ],
        );
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 2.0).abs() < 1e-7);
        assert!(s.y[0].abs() < 1e-6 && (s.y[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // [[y, 1], [1, -y]] has negative determinant for every y
        let p = problem(1, vec![1.0], vec![block(2, vec![(0, 1, 1.0)], vec![(0, vec![(0, 0, 1.0), (1, 1, -1.0)])])]);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);

        // min y s.t. -y >= 0
        let p = problem(1, vec![1.0], vec![block(1, vec![], vec![(0, vec![(0, 0, -1.0)])])]);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic() {
        let p = problem(
            2,
            vec![1.0, 0.5],
            vec![block(
                3,
                vec![(0, 0, 2.0), (1, 1, 1.0), (2, 2, 1.0)],
                vec![(0, vec![(0, 1, 1.0), (2, 2, 0.5)]), (1, vec![(0, 2, 1.0), (1, 2, -0.3)])],
            )],
        );
        let a = solve(&p, &SolverOptions::default()).unwrap();
        let b = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
