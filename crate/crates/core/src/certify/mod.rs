//! Hierarchy driver: lower bounds from the relaxations, feasible upper bounds
//! from first-order moments, the epsilon gap, flatness and rank-one extraction.

mod report;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{self, BoxBounds, ScaledProblem, ScalingResult, DELTA_TOL};
use crate::error::{Error, Result};
use crate::fem::{AssembledStiffness, FrameModel};
use crate::relax::{self, BlockSizes, MomentIndexMap, RelaxOptions, SdpSolution, SolveStatus};
use crate::sdp::{self, SolverOptions};

pub use report::{to_csv, to_markdown, to_svg, timings_json};

/// Relative singular-value threshold for numerical ranks.
pub const RANK_TOL: f64 = 1e-4;
/// Largest accepted `|y_ij - y_i y_j|` for a rank-one extraction.
pub const EXTRACTION_TOL: f64 = 1e-5;
/// Default gap target relative to `w-bar`.
pub const EPS_REL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flatness {
    pub rank: usize,
    pub rank_prev: usize,
    pub flat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Extraction {
    Extracted {
        design: Vec<f64>,
        weight: f64,
        /// `max |y_ij - y_i y_j|` over second-order moments (scaled variables).
        residual: f64,
    },
    Unavailable {
        reason: String,
    },
}

impl Extraction {
    pub fn design(&self) -> Option<&[f64]> {
        match self {
            Extraction::Extracted { design, .. } => Some(design),
            Extraction::Unavailable { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub order: usize,
    pub sizes: BlockSizes,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    /// Relaxation optimum `f^(r)`.
    pub lower_bound: f64,
    /// Dual objective of the same solve.
    pub dual_bound: f64,
    /// First-order moments in scaled variables.
    pub first_moments: Vec<f64>,
    /// Recovered area ratios `a~`.
    pub ratios: Vec<f64>,
    pub delta: f64,
    /// Feasible design `delta* a~`.
    pub upper_design: Vec<f64>,
    pub upper_bound: f64,
    /// Compliance per load case at the upper-bound design.
    pub compliances: Vec<f64>,
    /// `UB - LB`.
    pub gap: f64,
    /// Gap from the closed form in the recovered parametrization.
    pub epsilon: f64,
    pub flatness: Flatness,
    pub extraction: Extraction,
    /// `gap <= eps_target`.
    pub certified: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapReached,
    Flat,
    MaxOrder,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub n_vars: usize,
    /// Scaling at the initial ratios; its weight is `w-bar`.
    pub initial: ScalingResult,
    pub bounds: BoxBounds,
    pub eps_target: f64,
    pub certificates: Vec<Certificate>,
    /// Best feasible design over all stages and its weight.
    pub final_design: Vec<f64>,
    pub final_weight: f64,
    pub termination: Termination,
    /// Lower bounds non-decreasing in the order (to solver tolerance).
    pub lower_bounds_monotone: bool,
    /// Message of the stage that failed, if any.
    pub failure: Option<String>,
    /// Wall-clock per stage; kept out of the serialized report.
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

impl HierarchyReport {
    pub fn last(&self) -> Option<&Certificate> {
        self.certificates.last()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyOptions {
    /// First order solved; defaults to the smallest admissible one.
    pub r_min: Option<usize>,
    pub r_max: usize,
    /// Absolute gap target; `None` means `EPS_REL * w-bar`. A non-finite
    /// value disables early stopping, so every order up to `r_max` runs.
    pub eps_target: Option<f64>,
    pub rank_tol: f64,
    pub extraction_tol: f64,
    pub bisect_tol: f64,
    /// Starting ratios; all ones by default.
    pub initial_ratios: Option<Vec<f64>>,
    pub solver: SolverOptions,
    pub relax: RelaxOptions,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            r_min: None,
            r_max: 2,
            eps_target: None,
            rank_tol: RANK_TOL,
            extraction_tol: EXTRACTION_TOL,
            bisect_tol: DELTA_TOL,
            initial_ratios: None,
            solver: SolverOptions::default(),
            relax: RelaxOptions::default(),
        }
    }
}

/// `a~_g = (y_g + 1) / 2 * u_g`, clamped to `[0, u_g]`.
pub fn recover_ratios(first_moments: &[f64], bounds: &BoxBounds) -> Vec<f64> {
    first_moments
        .iter()
        .zip(&bounds.upper)
        .map(|(y, u)| ((y + 1.0) * 0.5 * u).clamp(0.0, *u))
        .collect()
}

/// Numerical ranks of `M_r(y)` and `M_{r-1}(y)`.
pub fn flatness_check(map: &MomentIndexMap, y: &[f64], rank_tol: f64) -> Flatness {
    let r = map.order();
    let rank = numerical_rank(&map.moment_matrix(y, r), rank_tol);
    let rank_prev = numerical_rank(&map.moment_matrix(y, r - 1), rank_tol);
    Flatness {
        rank,
        rank_prev,
        flat: rank == rank_prev,
    }
}

fn numerical_rank(m: &nalgebra::DMatrix<f64>, rank_tol: f64) -> usize {
    let sv = m.singular_values();
    let smax = sv.max();
    if !(smax > 0.0) {
        return 0;
    }
    sv.iter().filter(|s| **s > rank_tol * smax).count()
}

/// Point of a flat rank-one moment vector, in scaled variables, with the
/// largest second-order inconsistency.
pub fn extract_point(map: &MomentIndexMap, y: &[f64], flat: &Flatness, tol: f64) -> std::result::Result<(Vec<f64>, f64), String> {
    if !flat.flat {
        return Err(format!("not flat: ranks {} and {}", flat.rank, flat.rank_prev));
    }
    if flat.rank != 1 {
        return Err(format!("flat with rank {}; only rank one is extracted", flat.rank));
    }
    let x = map.first_order(y);
    let m1 = map.moment_matrix(y, 1);
    let n = x.len();
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            residual = residual.max((m1[(i + 1, j + 1)] - x[i] * x[j]).abs());
        }
    }
    if residual > tol {
        return Err(format!("second-order residual {residual:.3e} above {tol:.1e}"));
    }
    Ok((x, residual))
}

/// Rank-one minimizer unscaled to areas, or the reason it is unavailable.
pub fn extract_minimizer(
    asm: &AssembledStiffness,
    scaled: &ScaledProblem,
    map: &MomentIndexMap,
    y: &[f64],
    flat: &Flatness,
    tol: f64,
) -> Extraction {
    match extract_point(map, y, flat, tol) {
        Ok((x, residual)) => {
            let design = recover_ratios(&x, &scaled.bounds);
            Extraction::Extracted {
                weight: asm.weight(&design),
                design,
                residual,
            }
        }
        Err(reason) => Extraction::Unavailable { reason },
    }
}

/// `(delta* - 1) * w-bar / 2 * (n + sum y)`, with `y` the first moments
/// implied by the clamped ratios.
pub fn epsilon_gap(delta: f64, upper_weight: f64, ratios: &[f64], bounds: &BoxBounds) -> f64 {
    let s: f64 = ratios.iter().zip(&bounds.upper).map(|(a, u)| 2.0 * a / u - 1.0).sum();
    (delta - 1.0) * 0.5 * upper_weight * (ratios.len() as f64 + s)
}

/// Upper bound from the first-order moments of a relaxation solution.
pub fn upper_bound_from_relaxation(
    asm: &AssembledStiffness,
    scaled: &ScaledProblem,
    map: &MomentIndexMap,
    solution: &SdpSolution,
    bisect_tol: f64,
) -> Result<(Vec<f64>, Vec<f64>, ScalingResult)> {
    if !solution.status.is_optimal() {
        return Err(Error::Solver(format!("relaxation not solved: {:?}", solution.status)));
    }
    let y1 = map.first_order(&solution.y);
    let ratios = recover_ratios(&y1, &scaled.bounds);
    let scaling = bounds::scale_bisect(asm, &ratios, bisect_tol)?;
    Ok((y1, ratios, scaling))
}

/// Solves, bounds and checks one order of the hierarchy.
pub fn certify_order(
    asm: &AssembledStiffness,
    scaled: &ScaledProblem,
    r: usize,
    eps_target: f64,
    opts: &HierarchyOptions,
    timings: &mut Vec<StageTiming>,
) -> Result<Certificate> {
    let t = Instant::now();
    let rel = relax::build_relaxation(scaled, r, opts.relax)?;
    lap(timings, format!("build r={r}"), t);
    let t = Instant::now();
    let sol = sdp::solve(&rel.problem, &opts.solver)?;
    lap(timings, format!("solve r={r}"), t);
    let t = Instant::now();
    let (y1, ratios, scaling) = upper_bound_from_relaxation(asm, scaled, &rel.map, &sol, opts.bisect_tol)?;
    let flatness = flatness_check(&rel.map, &sol.y, opts.rank_tol);
    let extraction = extract_minimizer(asm, scaled, &rel.map, &sol.y, &flatness, opts.extraction_tol);
    let lower_bound = sol.objective;
    let upper_bound = scaling.upper_weight;
    let gap = upper_bound - lower_bound;
    let cert = Certificate {
        order: r,
        sizes: rel.sizes,
        solver_status: sol.status,
        iterations: sol.iterations,
        lower_bound,
        dual_bound: sol.dual_objective,
        first_moments: y1,
        epsilon: epsilon_gap(scaling.delta, scaled.bounds.upper_weight, &ratios, &scaled.bounds),
        ratios,
        delta: scaling.delta,
        upper_design: scaling.design,
        upper_bound,
        compliances: scaling.compliances,
        gap,
        flatness,
        extraction,
        certified: gap <= eps_target,
    };
    lap(timings, format!("certify r={r}"), t);
    Ok(cert)
}

fn lap(timings: &mut Vec<StageTiming>, stage: String, t: Instant) {
    timings.push(StageTiming {
        stage,
        seconds: t.elapsed().as_secs_f64(),
    });
}

/// Runs orders `r_min..=r_max`, stopping early once the gap target is met or
/// the moment matrix is flat. Failures after the initial scaling end the run
/// with a partial report.
pub fn run_hierarchy(model: &FrameModel, opts: &HierarchyOptions) -> Result<HierarchyReport> {
    let mut timings = Vec::new();
    let t = Instant::now();
    let asm = model.assemble()?;
    let ratios = opts.initial_ratios.clone().unwrap_or_else(|| vec![1.0; asm.n_vars()]);
    let initial = bounds::scale_bisect(&asm, &ratios, opts.bisect_tol)?;
    let wbar = initial.upper_weight;
    if wbar == 0.0 {
        // the fixed elements alone satisfy every bound
        lap(&mut timings, "scaling".into(), t);
        return Ok(HierarchyReport {
            n_vars: asm.n_vars(),
            final_design: initial.design.clone(),
            final_weight: 0.0,
            bounds: BoxBounds {
                upper_weight: 0.0,
                upper: vec![0.0; asm.n_vars()],
            },
            initial,
            eps_target: opts.eps_target.unwrap_or(0.0),
            certificates: Vec::new(),
            termination: Termination::GapReached,
            lower_bounds_monotone: true,
            failure: None,
            timings,
        });
    }
    let bb = bounds::box_bounds(asm.group_weights(), wbar);
    let scaled = bounds::scale_model(&asm, &bb)?;
    lap(&mut timings, "scaling".into(), t);
    let eps_target = opts.eps_target.unwrap_or(EPS_REL * wbar);
    let r_min = opts.r_min.unwrap_or_else(|| relax::min_order(&scaled));

    let mut report = HierarchyReport {
        n_vars: asm.n_vars(),
        final_design: initial.design.clone(),
        final_weight: wbar,
        initial,
        bounds: bb,
        eps_target,
        certificates: Vec::new(),
        termination: Termination::MaxOrder,
        lower_bounds_monotone: true,
        failure: None,
        timings: Vec::new(),
    };
    for r in r_min..=opts.r_max.max(r_min) {
        let cert = match certify_order(&asm, &scaled, r, eps_target, opts, &mut timings) {
            Ok(c) => c,
            Err(e) => {
                report.termination = Termination::Failed;
                report.failure = Some(format!("order {r}: {e}"));
                break;
            }
        };
        if let Some(prev) = report.certificates.last() {
            let slack = opts.solver.loose_tol * (1.0 + prev.lower_bound.abs());
            if cert.lower_bound < prev.lower_bound - slack {
                report.lower_bounds_monotone = false;
            }
        }
        if cert.upper_bound < report.final_weight {
            report.final_weight = cert.upper_bound;
            report.final_design = cert.upper_design.clone();
        }
        let stop = if !eps_target.is_finite() {
            None
        } else if cert.certified {
            Some(Termination::GapReached)
        } else if cert.flatness.flat {
            Some(Termination::Flat)
        } else {
            None
        };
        report.certificates.push(cert);
        if let Some(t) = stop {
            report.termination = t;
            break;
        }
    }
    report.timings = timings;
    Ok(report)
}
