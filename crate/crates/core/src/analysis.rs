//! Compliance `c = f^T K(a)^+ f` and its structure.
//!
//! The free dofs are split into the image (`U_R`) and kernel (`U_N`) of the
//! design-dependent stiffness at a reference design. In that basis only the
//! `K_A` block depends on the areas, which yields the Schur-condensed form
//! `c = f_B^T K_B^-1 f_B + f_sch^T K_sch(a)^-1 f_sch` used for evaluation, for
//! the infimum/supremum over all designs, and for the constant-row reduction of
//! the relaxations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::AssembledStiffness;
use crate::linalg::Spectral;

/// Relative tolerance for `f` lying in the range of a stiffness matrix.
pub const RANGE_REL: f64 = 1e-8;

/// Stiffness in the `[U_R U_N]` basis at a reference design.
#[derive(Clone, Debug)]
pub struct PartitionedSystem {
    load_case: usize,
    case_id: String,
    reference: Vec<f64>,
    u_r: DMatrix<f64>,
    u_n: DMatrix<f64>,
    /// `U_R^T K_g^(i) U_R` per group and power.
    design: Vec<[Option<DMatrix<f64>>; 3]>,
    k_a0: DMatrix<f64>,
    /// `U_R^T K_0 U_N`.
    k_ab: DMatrix<f64>,
    k_b: DMatrix<f64>,
    f_a: DVector<f64>,
    f_b: DVector<f64>,
    f_norm: f64,
    k0_scale: f64,
    k_b_spec: Spectral,
}

/// Infimum and supremum of the compliance over all designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplianceRange {
    pub load_case: String,
    pub infimum: f64,
    /// `None` when the compliance is unbounded.
    pub supremum: Option<f64>,
}

/// Splits the free dofs at the reference design `a_ref >= 0`.
pub fn partition(asm: &AssembledStiffness, j: usize, a_ref: &[f64]) -> PartitionedSystem {
    let top = a_ref.iter().fold(0.0f64, |m, v| m.max(*v));
    let normalized: Vec<f64> = if top > 0.0 {
        a_ref.iter().map(|v| v / top).collect()
    } else {
        a_ref.to_vec()
    };
    let split = Spectral::new(&asm.design_part(j, &normalized));
    let u_r = split.range();
    let u_n = split.kernel();
    let k0 = asm.k0(j);
    let f = asm.force(j);
    let design = (0..asm.n_vars())
        .map(|g| {
            [1, 2, 3].map(|p| {
                asm.coeff(j, g, p)
                    .map(|k| u_r.transpose() * k * &u_r)
            })
        })
        .collect();
    let k_b = u_n.transpose() * k0 * &u_n;
    let k0_scale = k0.norm();
    PartitionedSystem {
        load_case: j,
        case_id: asm.case_id(j).to_string(),
        reference: a_ref.to_vec(),
        design,
        k_a0: u_r.transpose() * k0 * &u_r,
        k_ab: u_r.transpose() * k0 * &u_n,
        k_b_spec: Spectral::with_reference(&k_b, k0_scale),
        k_b,
        f_a: u_r.transpose() * f,
        f_b: u_n.transpose() * f,
        f_norm: f.norm(),
        k0_scale,
        u_r,
        u_n,
    }
}

impl PartitionedSystem {
    pub fn load_case(&self) -> usize {
        self.load_case
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn u_r(&self) -> &DMatrix<f64> {
        &self.u_r
    }

    pub fn u_n(&self) -> &DMatrix<f64> {
        &self.u_n
    }

    pub fn k_a0(&self) -> &DMatrix<f64> {
        &self.k_a0
    }

    /// Coupling block `U_R^T K_0 U_N` (rows in the image, columns in the kernel).
    pub fn k_ab(&self) -> &DMatrix<f64> {
        &self.k_ab
    }

    pub fn k_b(&self) -> &DMatrix<f64> {
        &self.k_b
    }

    pub fn f_a(&self) -> &DVector<f64> {
        &self.f_a
    }

    pub fn f_b(&self) -> &DVector<f64> {
        &self.f_b
    }

    /// Projected coefficient `U_R^T K_g^(power) U_R`.
    pub fn design_coeff(&self, g: usize, power: usize) -> Option<&DMatrix<f64>> {
        self.design[g][power - 1].as_ref()
    }

    pub fn n_image(&self) -> usize {
        self.u_r.ncols()
    }

    pub fn n_kernel(&self) -> usize {
        self.u_n.ncols()
    }

    /// `K_B` is positive definite (always true for an empty kernel).
    pub fn kb_positive(&self) -> bool {
        self.k_b_spec.nullity == 0
    }

    /// `K_A(a) = U_R^T K(a) U_R`.
    pub fn k_a(&self, a: &[f64]) -> DMatrix<f64> {
        let mut k = self.k_a0.clone();
        for (g, terms) in self.design.iter().enumerate() {
            for (i, t) in terms.iter().enumerate() {
                if let Some(t) = t {
                    k += t * a[g].powi(i as i32 + 1);
                }
            }
        }
        k
    }

    /// `K(a)` rebuilt from the blocks in the original dof basis.
    pub fn reconstruct(&self, a: &[f64]) -> DMatrix<f64> {
        let (r, n) = (self.n_image(), self.n_kernel());
        let mut blocks = DMatrix::zeros(r + n, r + n);
        blocks.view_mut((0, 0), (r, r)).copy_from(&self.k_a(a));
        blocks.view_mut((0, r), (r, n)).copy_from(&self.k_ab);
        blocks.view_mut((r, 0), (n, r)).copy_from(&self.k_ab.transpose());
        blocks.view_mut((r, r), (n, n)).copy_from(&self.k_b);
        let mut u = DMatrix::zeros(r + n, r + n);
        u.view_mut((0, 0), (r + n, r)).copy_from(&self.u_r);
        u.view_mut((0, r), (r + n, n)).copy_from(&self.u_n);
        &u * blocks * u.transpose()
    }

    fn kb_pinv(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            out.set_column(c, &self.k_b_spec.pinv_apply(&m.column(c).into_owned()));
        }
        out
    }

    /// `f_sch = f_A - K_AB K_B^+ f_B`.
    pub fn schur_force(&self) -> DVector<f64> {
        &self.f_a - &self.k_ab * self.k_b_spec.pinv_apply(&self.f_b)
    }

    /// Design-independent part of the condensed stiffness, `K_A0 - K_AB K_B^+ K_AB^T`.
    pub fn schur_constant(&self) -> DMatrix<f64> {
        let t = self.kb_pinv(&self.k_ab.transpose());
        let m = &self.k_a0 - &self.k_ab * t;
        (&m + m.transpose()) * 0.5
    }

    /// `K_sch(a) = K_A(a) - K_AB K_B^+ K_AB^T`.
    pub fn schur_stiffness(&self, a: &[f64]) -> DMatrix<f64> {
        let t = self.kb_pinv(&self.k_ab.transpose());
        let m = self.k_a(a) - &self.k_ab * t;
        (&m + m.transpose()) * 0.5
    }

    /// Condensed compliance `f_sch^T K_sch(a)^+ f_sch`.
    pub fn schur_compliance(&self, a: &[f64]) -> Result<f64> {
        if self.n_image() == 0 {
            return Ok(0.0);
        }
        let k = self.schur_stiffness(a);
        let f = self.schur_force();
        if let Some(ch) = k.clone().cholesky() {
            return Ok(f.dot(&ch.solve(&f)));
        }
        let s = Spectral::new(&k);
        let res = s.range_residual(&f);
        if res > RANGE_REL * self.f_norm {
            return Err(Error::RangeFailure {
                load_case: self.case_id.clone(),
                residual: res / self.f_norm,
            });
        }
        Ok(f.dot(&s.pinv_apply(&f)))
    }

    /// `f_B^T K_B^+ f_B`, the compliance carried by the fixed part alone.
    pub fn fixed_compliance(&self) -> Result<f64> {
        if self.n_kernel() == 0 {
            return Ok(0.0);
        }
        let res = self.k_b_spec.range_residual(&self.f_b);
        if res > RANGE_REL * self.f_norm {
            return Err(Error::FixedPathFailure {
                load_case: self.case_id.clone(),
            });
        }
        Ok(self.f_b.dot(&self.k_b_spec.pinv_apply(&self.f_b)))
    }

    /// Solution of `K(a) u = f` through the condensed system; needs `K_B > 0`.
    fn displacement(&self, a: &[f64]) -> Option<DVector<f64>> {
        if !self.kb_positive() {
            return None;
        }
        let u_a = if self.n_image() == 0 {
            DVector::zeros(0)
        } else {
            self.schur_stiffness(a).cholesky()?.solve(&self.schur_force())
        };
        let rhs = &self.f_b - self.k_ab.transpose() * &u_a;
        let u_b = self.k_b_spec.pinv_apply(&rhs);
        Some(&self.u_r * u_a + &self.u_n * u_b)
    }
}

fn pinv_displacement(asm: &AssembledStiffness, j: usize, a: &[f64]) -> Result<DVector<f64>> {
    let k = asm.stiffness_at(j, a);
    let f = asm.force(j);
    let s = Spectral::new(&k);
    let res = s.range_residual(f);
    if res > RANGE_REL * f.norm() {
        return Err(Error::RangeFailure {
            load_case: asm.case_id(j).to_string(),
            residual: res / f.norm(),
        });
    }
    Ok(s.pinv_apply(f))
}

/// Displacements `u = K(a)^+ f`, through the factorized condensed system when
/// possible and the eigendecomposition otherwise.
pub fn displacement(asm: &AssembledStiffness, j: usize, a: &[f64]) -> Result<DVector<f64>> {
    let p = partition(asm, j, a);
    match p.displacement(a) {
        Some(u) => Ok(u),
        None => pinv_displacement(asm, j, a),
    }
}

/// Compliance `f^T K(a)^+ f`.
///
/// The fixed-part and condensed contributions are evaluated separately, which
/// keeps the result accurate for very large areas where `K(a)` itself is badly
/// conditioned.
pub fn compliance(asm: &AssembledStiffness, j: usize, a: &[f64]) -> Result<f64> {
    let p = partition(asm, j, a);
    if p.kb_positive() {
        let fixed = p.fixed_compliance()?;
        if p.n_image() == 0 {
            return Ok(fixed);
        }
        if let Some(ch) = p.schur_stiffness(a).cholesky() {
            let f = p.schur_force();
            return Ok(fixed + f.dot(&ch.solve(&f)));
        }
    }
    compliance_pinv(asm, j, a)
}

/// Compliance through the eigendecomposition of the full stiffness matrix.
pub fn compliance_pinv(asm: &AssembledStiffness, j: usize, a: &[f64]) -> Result<f64> {
    let u = pinv_displacement(asm, j, a)?;
    Ok(asm.force(j).dot(&u))
}

/// `dc/da_g = -u^T (dK/da_g) u`, evaluated as `-sum_i i a_g^(i-1) |F_(g,i) u|^2`
/// so that every component is non-positive by construction.
pub fn compliance_gradient(asm: &AssembledStiffness, j: usize, a: &[f64]) -> Result<DVector<f64>> {
    let u = displacement(asm, j, a)?;
    Ok(DVector::from_fn(asm.n_vars(), |g, _| {
        let mut d = 0.0;
        for p in 1..=3 {
            if let Some(f) = asm.factor(j, g, p) {
                d -= p as f64 * a[g].powi(p as i32 - 1) * (f * &u).norm_squared();
            }
        }
        d
    }))
}

/// `inf_a c = f_B^T K_B^-1 f_B`; zero when the kernel is empty.
///
/// Errors when the kernel part of the load cannot be carried by the fixed
/// elements, in which case scaling along the reference design cannot reach the
/// global infimum.
pub fn compliance_infimum(p: &PartitionedSystem) -> Result<f64> {
    p.fixed_compliance()
}

/// `sup_a c`, the compliance at `a = 0`; `None` when the fixed part cannot
/// carry the condensed load.
pub fn compliance_supremum(p: &PartitionedSystem) -> Result<Option<f64>> {
    let inf = p.fixed_compliance()?;
    if p.n_image() == 0 {
        return Ok(Some(inf));
    }
    let m = p.schur_constant();
    let f = p.schur_force();
    let s = Spectral::with_reference(&m, p.k0_scale);
    if s.rank() == 0 || s.range_residual(&f) > RANGE_REL * p.f_norm {
        return Ok(None);
    }
    Ok(Some(inf + f.dot(&s.pinv_apply(&f))))
}

/// Infimum and supremum for load case `j`, partitioned at `a_ref`.
pub fn compliance_range(asm: &AssembledStiffness, j: usize, a_ref: &[f64]) -> Result<ComplianceRange> {
    let p = partition(asm, j, a_ref);
    Ok(ComplianceRange {
        load_case: asm.case_id(j).to_string(),
        infimum: compliance_infimum(&p)?,
        supremum: compliance_supremum(&p)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FrameModel;

    const BAR: &str = r#"{
        "nodes": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 1, "y": 0}],
        "elements": [{"id": 1, "n1": 1, "n2": 2, "E": 1, "rho": 1, "law": "bar", "group": "g"}],
        "supports": [{"node": 1, "ux": true, "uy": true, "rot": true},
                     {"node": 2, "uy": true, "rot": true}],
        "loadcases": [{"id": 1, "cbar": 1, "loads": [{"node": 2, "fx": 1}]}]
    }"#;

    fn bar() -> AssembledStiffness {
        FrameModel::from_json_str(BAR).unwrap().assemble().unwrap()
    }

    #[test]
    fn bar_compliance_and_gradient() {
        let asm = bar();
        assert!((compliance(&asm, 0, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((compliance(&asm, 0, &[2.0]).unwrap() - 0.5).abs() < 1e-15);
        let g = compliance_gradient(&asm, 0, &[1.0]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
        assert!(matches!(compliance(&asm, 0, &[0.0]), Err(Error::RangeFailure { .. })));
        let r = compliance_range(&asm, 0, &[1.0]).unwrap();
        assert_eq!((r.infimum, r.supremum), (0.0, None));
    }

    #[test]
    fn fully_optimized_partition() {
        let m = FrameModel::bundled("frame24").unwrap();
        let asm = m.assemble().unwrap();
        let p = partition(&asm, 0, &[1.0; 9]);
        assert_eq!((p.n_image(), p.n_kernel()), (36, 0));
        assert_eq!(compliance_infimum(&p).unwrap(), 0.0);
        assert_eq!(compliance_supremum(&p).unwrap(), None);
    }

    #[test]
    fn part20_partition() {
        let m = FrameModel::bundled("part20").unwrap();
        let asm = m.assemble().unwrap();
        let a: Vec<f64> = (0..13).map(|g| 0.5 + 0.1 * g as f64).collect();
        let p = partition(&asm, 0, &a);
        assert_eq!((p.n_image(), p.n_kernel()), (19, 4));
        assert!(p.kb_positive());
        let mut u = DMatrix::zeros(23, 23);
        u.view_mut((0, 0), (23, 19)).copy_from(p.u_r());
        u.view_mut((0, 19), (23, 4)).copy_from(p.u_n());
        assert!((u.transpose() * &u - DMatrix::identity(23, 23)).norm() <= 1e-10);
        let k = asm.stiffness_at(0, &a);
        assert!((p.reconstruct(&a) - &k).amax() <= 1e-10 * k.amax());
        assert!(crate::linalg::min_eig(&(p.k_a(&a) - p.k_a0())) > 0.0);
        let inf = compliance_infimum(&p).unwrap();
        assert!((inf - 578.9).abs() < 0.5, "{inf}");
        // the optimized members are needed to carry the loads at j and k
        assert_eq!(compliance_supremum(&p).unwrap(), None);
    }

    #[test]
    fn factorized_matches_eigen_route() {
        for name in ["frame24", "part20"] {
            let m = FrameModel::bundled(name).unwrap();
            let asm = m.assemble().unwrap();
            let a: Vec<f64> = (0..m.n_vars()).map(|g| 0.02 + 0.003 * g as f64).collect();
            let c1 = compliance(&asm, 0, &a).unwrap();
            let c2 = compliance_pinv(&asm, 0, &a).unwrap();
            assert!((c1 - c2).abs() <= 1e-9 * c2, "{name}: {c1} vs {c2}");
        }
    }

    #[test]
    fn unloaded_zero_group_has_zero_gradient() {
        // the second bar hangs off its own support and carries nothing
        let src = r#"{
            "nodes": [{"id": 1, "x": 0, "y": 0}, {"id": 2, "x": 1, "y": 0},
                      {"id": 3, "x": 0, "y": 1}, {"id": 4, "x": 1, "y": 1}],
            "elements": [
                {"id": 1, "n1": 1, "n2": 2, "E": 1, "rho": 1, "law": "bar", "group": "a"},
                {"id": 2, "n1": 3, "n2": 4, "E": 1, "rho": 1, "law": "bar", "group": "b"}],
            "supports": [{"node": 1, "ux": true, "uy": true, "rot": true},
                         {"node": 2, "uy": true, "rot": true},
                         {"node": 3, "ux": true, "uy": true, "rot": true},
                         {"node": 4, "uy": true, "rot": true}],
            "loadcases": [{"id": 1, "cbar": 1, "loads": [{"node": 2, "fx": 1}]}]
        }"#;
        let asm = FrameModel::from_json_str(src).unwrap().assemble().unwrap();
        let g = compliance_gradient(&asm, 0, &[1.0, 0.0]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-14);
        assert_eq!(g[1], 0.0);
        assert!((compliance(&asm, 0, &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-14);
    }
}
