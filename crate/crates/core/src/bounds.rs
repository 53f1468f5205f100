//! Feasible designs by uniform scaling, box bounds from an upper-bound weight,
//! and the `[-1, 1]` rescaled problem handed to the relaxations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, PartitionedSystem};
use crate::error::{Error, Result};
use crate::fem::AssembledStiffness;
use crate::poly::{AffineMap, MatrixPolynomial, MultiIndex, Polynomial};

/// Default relative tolerance on the scaling factor.
pub const DELTA_TOL: f64 = 1e-9;
/// Doublings (or halvings) tried while bracketing the scaling factor.
pub const MAX_DOUBLINGS: u32 = 60;
/// Relative slack when re-checking compliance feasibility.
pub const FEASIBILITY_REL: f64 = 1e-8;
/// Relative distance to the bound under which a constraint counts as active.
pub const ACTIVE_REL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    /// Smallest feasible factor `delta*`.
    pub delta: f64,
    /// Compliance per load case at `delta* a~`.
    pub compliances: Vec<f64>,
    /// Load-case indices whose constraint is active.
    pub active: Vec<usize>,
    /// Weight of the feasible design, `w-bar`.
    pub upper_weight: f64,
    /// Feasible design `delta* a~`.
    pub design: Vec<f64>,
}

/// Compliance along the ray `delta a~` for one load case.
struct Ray {
    part: PartitionedSystem,
    fixed: f64,
    cbar: f64,
    j: usize,
}

impl Ray {
    fn compliance(&self, asm: &AssembledStiffness, a: &[f64]) -> Result<f64> {
        if self.part.kb_positive() {
            Ok(self.fixed + self.part.schur_compliance(a)?)
        } else {
            analysis::compliance(asm, self.j, a)
        }
    }
}

/// Smallest `delta` with `c_j(delta a~) <= cbar_j` for all load cases.
pub fn scale_bisect(asm: &AssembledStiffness, a_tilde: &[f64], tol: f64) -> Result<ScalingResult> {
    if a_tilde.len() != asm.n_vars() {
        return Err(Error::Dimension(format!(
            "{} ratios for {} groups",
            a_tilde.len(),
            asm.n_vars()
        )));
    }
    if a_tilde.iter().any(|v| !(*v >= 0.0)) || a_tilde.iter().all(|v| *v == 0.0) {
        return Err(Error::Dimension("scaling direction must be non-negative and nonzero".into()));
    }
    let mut rays = Vec::with_capacity(asm.n_load_cases());
    for j in 0..asm.n_load_cases() {
        let part = analysis::partition(asm, j, a_tilde);
        let inf = analysis::compliance_infimum(&part)?;
        if inf >= asm.cbar(j) {
            return Err(Error::InfeasibleDirection {
                load_case: asm.case_id(j).to_string(),
                infimum: inf,
                cbar: asm.cbar(j),
            });
        }
        rays.push(Ray {
            fixed: inf,
            part,
            cbar: asm.cbar(j),
            j,
        });
    }
    let at = |delta: f64| -> Vec<f64> { a_tilde.iter().map(|v| delta * v).collect() };
    let feasible = |delta: f64| -> Result<bool> {
        let a = at(delta);
        for r in &rays {
            if r.compliance(asm, &a)? > r.cbar {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let (mut lo, mut hi);
    if feasible(1.0)? {
        hi = 1.0;
        lo = 0.5;
        let mut n = 0;
        while feasible(lo)? {
            n += 1;
            if n > MAX_DOUBLINGS {
                return finish(asm, &rays, a_tilde, 0.0);
            }
            hi = lo;
            lo *= 0.5;
        }
    } else {
        lo = 1.0;
        hi = 2.0;
        let mut n = 1;
        while !feasible(hi)? {
            n += 1;
            if n > MAX_DOUBLINGS {
                return Err(Error::DegenerateDirection);
            }
            lo = hi;
            hi *= 2.0;
        }
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    finish(asm, &rays, a_tilde, hi)
}

fn finish(asm: &AssembledStiffness, rays: &[Ray], a_tilde: &[f64], delta: f64) -> Result<ScalingResult> {
    let design: Vec<f64> = a_tilde.iter().map(|v| delta * v).collect();
    let compliances = if delta == 0.0 {
        (0..asm.n_load_cases())
            .map(|j| analysis::compliance(asm, j, &design))
            .collect::<Result<Vec<_>>>()?
    } else {
        rays.iter()
            .map(|r| r.compliance(asm, &design))
            .collect::<Result<Vec<_>>>()?
    };
    let active = compliances
        .iter()
        .enumerate()
        .filter(|(j, c)| **c >= asm.cbar(*j) * (1.0 - ACTIVE_REL))
        .map(|(j, _)| j)
        .collect();
    Ok(ScalingResult {
        delta,
        compliances,
        active,
        upper_weight: asm.weight(&design),
        design,
    })
}

/// Per-group box `0 <= a_g <= u_g` with `u_g = w-bar / (sum rho l)_g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub upper_weight: f64,
    pub upper: Vec<f64>,
}

pub fn box_bounds(group_weights: &[f64], upper_weight: f64) -> BoxBounds {
    BoxBounds {
        upper_weight,
        upper: group_weights.iter().map(|w| upper_weight / w).collect(),
    }
}

/// Bordered compliance constraint `[[cbar, -f^T], [-f, K]] >= 0` in the scaled
/// variables, optionally with its constant rows eliminated.
#[derive(Clone, Debug)]
pub struct ComplianceLmi {
    pub load_case: String,
    pub cbar: f64,
    pub full: MatrixPolynomial,
    pub reduced: Option<ReducedLmi>,
}

/// `K_A(a) - B C^-1 B^T` with `C = [[cbar, -f_B^T], [-f_B, K_B]]` and
/// `B = [-f_A, K_AB]`, equivalent to the bordered constraint whenever `C > 0`.
#[derive(Clone, Debug)]
pub struct ReducedLmi {
    pub matrix: MatrixPolynomial,
    /// Number of eliminated rows (the compliance row plus the kernel rows).
    pub eliminated: usize,
}

impl ComplianceLmi {
    /// The reduced form when requested and available, else the bordered one.
    pub fn matrix(&self, reduce: bool) -> &MatrixPolynomial {
        match (&self.reduced, reduce) {
            (Some(r), true) => &r.matrix,
            _ => &self.full,
        }
    }
}

/// Weight minimization in `a_s in [-1, 1]^n` with `a_g = (a_s,g + 1) u_g / 2`.
#[derive(Clone, Debug)]
pub struct ScaledProblem {
    pub bounds: BoxBounds,
    pub group_weights: Vec<f64>,
    pub maps: Vec<AffineMap>,
    pub objective: Polynomial,
    /// `1 - a_s,g^2 >= 0` per group.
    pub box_constraints: Vec<Polynomial>,
    pub lmis: Vec<ComplianceLmi>,
}

impl ScaledProblem {
    pub fn n_vars(&self) -> usize {
        self.maps.len()
    }

    pub fn unscale(&self, a_s: &[f64]) -> Vec<f64> {
        self.maps.iter().zip(a_s).map(|(m, x)| m.scale * x + m.shift).collect()
    }

    pub fn scale(&self, a: &[f64]) -> Vec<f64> {
        self.maps.iter().zip(a).map(|(m, x)| (x - m.shift) / m.scale).collect()
    }

    /// Highest degree among the compliance constraints.
    pub fn lmi_degree(&self) -> u32 {
        self.lmis.iter().map(|l| l.full.degree()).max().unwrap_or(0)
    }
}

/// Applies the `[-1, 1]` scaling to objective and stiffness polynomials.
pub fn scale_model(asm: &AssembledStiffness, bounds: &BoxBounds) -> Result<ScaledProblem> {
    let n = asm.n_vars();
    if bounds.upper.len() != n || bounds.upper.iter().any(|u| !(*u > 0.0)) {
        return Err(Error::Dimension("box bounds must be positive, one per group".into()));
    }
    let maps: Vec<AffineMap> = bounds
        .upper
        .iter()
        .map(|u| AffineMap {
            scale: 0.5 * u,
            shift: 0.5 * u,
        })
        .collect();
    let gw = asm.group_weights();
    let mut objective = Polynomial::zero(n);
    for g in 0..n {
        let c = 0.5 * bounds.upper[g] * gw[g];
        objective.add_term(MultiIndex::zero(n), c);
        objective.add_term(MultiIndex::unit(n, g), c);
    }
    let box_constraints = (0..n)
        .map(|g| {
            let mut sq = vec![0; n];
            sq[g] = 2;
            Polynomial::from_terms(n, [(MultiIndex::zero(n), 1.0), (MultiIndex::new(sq), -1.0)])
        })
        .collect();
    let lmis = (0..asm.n_load_cases())
        .map(|j| ComplianceLmi {
            load_case: asm.case_id(j).to_string(),
            cbar: asm.cbar(j),
            full: bordered(asm, j).substitute_affine(&maps),
            reduced: reduced(asm, j, &bounds.upper).map(|r| ReducedLmi {
                matrix: r.matrix.substitute_affine(&maps),
                eliminated: r.eliminated,
            }),
        })
        .collect();
    Ok(ScaledProblem {
        bounds: bounds.clone(),
        group_weights: gw.to_vec(),
        maps,
        objective,
        box_constraints,
        lmis,
    })
}

/// `[[cbar, -f^T], [-f, K(a)]]` in the unscaled areas.
pub fn bordered(asm: &AssembledStiffness, j: usize) -> MatrixPolynomial {
    let n = asm.n_vars();
    let m = asm.n_dof() + 1;
    let k = asm.matrix_polynomial(j);
    let mut out = MatrixPolynomial::zero(n, m);
    let f = asm.force(j);
    let mut c = DMatrix::zeros(m, m);
    c[(0, 0)] = asm.cbar(j);
    for i in 0..f.len() {
        c[(0, i + 1)] = -f[i];
        c[(i + 1, 0)] = -f[i];
    }
    if let Some(k0) = k.coeff(&MultiIndex::zero(n)) {
        c.view_mut((1, 1), (m - 1, m - 1)).copy_from(k0);
    }
    out.add_term(MultiIndex::zero(n), &c);
    for (mi, kc) in k.terms() {
        if mi.degree() == 0 {
            continue;
        }
        let mut big = DMatrix::zeros(m, m);
        big.view_mut((1, 1), (m - 1, m - 1)).copy_from(kc);
        out.add_term(mi.clone(), &big);
    }
    out
}

/// Constant-row elimination in the unscaled areas; `None` when the design part
/// has full rank or the constant block is not positive definite.
pub fn reduced(asm: &AssembledStiffness, j: usize, a_ref: &[f64]) -> Option<ReducedLmi> {
    let p = analysis::partition(asm, j, a_ref);
    let (r, nk) = (p.n_image(), p.n_kernel());
    if nk == 0 || !asm.has_fixed_part() {
        return None;
    }
    let mut c = DMatrix::zeros(nk + 1, nk + 1);
    c[(0, 0)] = asm.cbar(j);
    for i in 0..nk {
        c[(0, i + 1)] = -p.f_b()[i];
        c[(i + 1, 0)] = -p.f_b()[i];
    }
    c.view_mut((1, 1), (nk, nk)).copy_from(p.k_b());
    let chol = c.cholesky()?;
    let mut b = DMatrix::zeros(r, nk + 1);
    b.set_column(0, &(-p.f_a()));
    b.view_mut((0, 1), (r, nk)).copy_from(p.k_ab());
    let cinv_bt = chol.solve(&b.transpose());
    let constant = p.k_a0() - &b * cinv_bt;
    let constant = (&constant + constant.transpose()) * 0.5;
    let n = asm.n_vars();
    let mut out = MatrixPolynomial::zero(n, r);
    out.add_term(MultiIndex::zero(n), &constant);
    for g in 0..n {
        for power in 1..=3 {
            if let Some(k) = p.design_coeff(g, power) {
                let mut e = vec![0; n];
                e[g] = power as u32;
                out.add_term(MultiIndex::new(e), &((k + k.transpose()) * 0.5));
            }
        }
    }
    Some(ReducedLmi {
        matrix: out,
        eliminated: nk + 1,
    })
}

/// Worst relative compliance excess `max_j (c_j / cbar_j - 1)`; non-positive when feasible.
pub fn feasibility_excess(asm: &AssembledStiffness, a: &[f64]) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for j in 0..asm.n_load_cases() {
        worst = worst.max(analysis::compliance(asm, j, a)? / asm.cbar(j) - 1.0);
    }
    Ok(worst)
}
