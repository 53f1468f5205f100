//! Moment relaxations of the scaled weight-minimization problem.
//!
//! Moments are indexed by the graded-lex basis `b_2r`; the constant moment is
//! pinned to one and eliminated, so the decision vector `y` has `|b_2r| - 1`
//! entries and `y[k]` is the moment of basis entry `k + 1`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::ScaledProblem;
use crate::error::{Error, Result};
use crate::poly::{basis, MatrixPolynomial, MonomialBasis, MultiIndex, Polynomial};

/// Bijection between `b_2r` and moment positions (position 0 is the constant).
#[derive(Clone, Debug)]
pub struct MomentIndexMap {
    order: usize,
    basis: MonomialBasis,
    index: HashMap<Vec<u32>, usize>,
}

impl MomentIndexMap {
    pub fn new(n_vars: usize, order: usize) -> Self {
        let basis = basis(n_vars, 2 * order as u32);
        let index = basis
            .entries()
            .iter()
            .enumerate()
            .map(|(k, m)| (m.exponents().to_vec(), k))
            .collect();
        Self {
            order,
            basis,
            index,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.basis.n_vars()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    /// Dimension of `y`, `|b_2r| - 1`.
    pub fn n_y(&self) -> usize {
        self.basis.len() - 1
    }

    /// `|b_k|` for `k <= 2r`.
    pub fn basis_len(&self, k: usize) -> usize {
        self.basis.prefix_len(k as u32)
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.index.get(m.exponents()).copied()
    }

    fn position_of(&self, e: &[u32]) -> Option<usize> {
        self.index.get(e).copied()
    }

    /// Moment at basis position `pos` (1 for the constant).
    pub fn moment(&self, y: &[f64], pos: usize) -> f64 {
        if pos == 0 {
            1.0
        } else {
            y[pos - 1]
        }
    }

    /// Moments of the Dirac measure at `x`.
    pub fn dirac(&self, x: &[f64]) -> Vec<f64> {
        self.basis.entries()[1..].iter().map(|m| m.eval(x)).collect()
    }

    /// First-order moments `y_{e_g}`.
    pub fn first_order(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n_vars();
        (0..n)
            .map(|g| y[self.position(&MultiIndex::unit(n, g)).expect("degree-one moment") - 1])
            .collect()
    }

    /// Moment matrix `M_k(y)` of order `k <= r` as a dense matrix.
    pub fn moment_matrix(&self, y: &[f64], k: usize) -> DMatrix<f64> {
        let side = self.basis_len(k);
        let e = self.basis.entries();
        DMatrix::from_fn(side, side, |a, b| {
            let pos = self.position(&e[a].add(&e[b])).expect("moment in b_2r");
            self.moment(y, pos)
        })
    }
}

/// Symmetric sparse matrix stored by its upper triangle (`row <= col`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymSparse {
    pub entries: Vec<(u32, u32, f64)>,
}

impl SymSparse {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        self.add_to(&mut m, 1.0);
        m
    }

    /// `m += s * self`.
    pub fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    /// `<self, m>` for symmetric `m`.
    pub fn inner(&self, m: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                let w = if i == j { 1.0 } else { 2.0 };
                w * v * m[(i as usize, j as usize)]
            })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, e| a.max(e.2.abs()))
    }

    fn from_map(map: HashMap<(u32, u32), f64>) -> Self {
        let mut entries: Vec<_> = map
            .into_iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        entries.sort_by_key(|e| (e.0, e.1));
        Self { entries }
    }
}

/// `S(y) = B_0 + sum_i y_i B_i`, required positive semidefinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineBlock {
    pub label: String,
    pub dim: usize,
    pub constant: SymSparse,
    /// `(i, B_i)` sorted by `i`, nonzero coefficients only.
    pub coeffs: Vec<(usize, SymSparse)>,
}

impl AffineBlock {
    pub fn evaluate(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.to_dense(self.dim);
        for (i, b) in &self.coeffs {
            b.add_to(&mut m, y[*i]);
        }
        m
    }
}

/// `min offset + c^T y` subject to every block being positive semidefinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub n_y: usize,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub blocks: Vec<AffineBlock>,
    #[serde(default)]
    pub n_vars: Option<usize>,
    #[serde(default)]
    pub order: Option<usize>,
}

impl SdpProblem {
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn block_sides(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Converged only to the loosened tolerance.
    OptimalInaccurate,
    /// No `y` makes every block PSD.
    Infeasible,
    /// The objective is unbounded below.
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_optimal(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::OptimalInaccurate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    /// `offset + c^T y`.
    pub objective: f64,
    /// `offset - <B_0, X>`.
    pub dual_objective: f64,
    /// Dual matrices `X_k`, one per block.
    #[serde(skip)]
    pub x: Vec<DMatrix<f64>>,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
}

struct BlockBuilder {
    dim: usize,
    parts: BTreeMap<usize, HashMap<(u32, u32), f64>>,
}

impl BlockBuilder {
    fn new(dim: usize) -> Self {
        Self {
            dim,
            parts: BTreeMap::new(),
        }
    }

    /// Adds `v * moment(pos)` at `(row, col)`, `row <= col`.
    fn add(&mut self, pos: usize, row: usize, col: usize, v: f64) {
        debug_assert!(row <= col);
        *self
            .parts
            .entry(pos)
            .or_default()
            .entry((row as u32, col as u32))
            .or_insert(0.0) += v;
    }

    fn finish(mut self, label: String) -> AffineBlock {
        let constant = SymSparse::from_map(self.parts.remove(&0).unwrap_or_default());
        let coeffs = self
            .parts
            .into_iter()
            .map(|(pos, m)| (pos - 1, SymSparse::from_map(m)))
            .filter(|(_, s)| s.nnz() > 0)
            .collect();
        AffineBlock {
            label,
            dim: self.dim,
            constant,
            coeffs,
        }
    }
}

fn sum_exponents(a: &MultiIndex, b: &MultiIndex, c: &MultiIndex) -> Vec<u32> {
    a.exponents()
        .iter()
        .zip(b.exponents())
        .zip(c.exponents())
        .map(|((x, y), z)| x + y + z)
        .collect()
}

fn half_ceil(d: u32) -> usize {
    d.div_ceil(2) as usize
}

/// `M_r(y)`: side `|b_r|`, entry `(a, b)` reads `y_{a+b}`.
pub fn moment_matrix_structure(map: &MomentIndexMap, label: &str) -> AffineBlock {
    let r = map.order();
    let side = map.basis_len(r);
    let e = map.basis().entries();
    let zero = MultiIndex::zero(map.n_vars());
    let mut bb = BlockBuilder::new(side);
    for a in 0..side {
        for b in a..side {
            let pos = map.position_of(&sum_exponents(&e[a], &e[b], &zero)).expect("in b_2r");
            bb.add(pos, a, b, 1.0);
        }
    }
    bb.finish(label.to_string())
}

/// Scalar localizing matrix of `g >= 0`: side `|b_(r - ceil(deg g / 2))|`.
pub fn localizing_scalar(map: &MomentIndexMap, g: &Polynomial, label: &str) -> Result<AffineBlock> {
    let r = map.order();
    let d = half_ceil(g.degree());
    if d > r {
        return Err(Error::OrderTooSmall {
            order: r,
            degree: g.degree() as usize,
        });
    }
    let side = map.basis_len(r - d);
    let e = map.basis().entries();
    let mut bb = BlockBuilder::new(side);
    for a in 0..side {
        for b in a..side {
            for (gm, gc) in g.terms() {
                let pos = map.position_of(&sum_exponents(&e[a], &e[b], gm)).expect("in b_2r");
                bb.add(pos, a, b, *gc);
            }
        }
    }
    Ok(bb.finish(label.to_string()))
}

/// Localizing matrix of the matrix inequality `G >= 0`, monomial-major: row
/// `a * m + i` pairs basis entry `a` of `b_(r - ceil(d/2))` with row `i` of `G`.
pub fn localizing_pmi(map: &MomentIndexMap, g: &MatrixPolynomial, label: &str) -> Result<AffineBlock> {
    let r = map.order();
    let d = half_ceil(g.degree());
    if d > r {
        return Err(Error::OrderTooSmall {
            order: r,
            degree: g.degree() as usize,
        });
    }
    let m = g.dim();
    let nb = map.basis_len(r - d);
    let e = map.basis().entries();
    // nonzeros per coefficient: full pattern and upper triangle
    let terms: Vec<(&MultiIndex, Vec<(usize, usize, f64)>)> = g
        .terms()
        .iter()
        .map(|(mi, c)| {
            let mut nz = Vec::new();
            for j in 0..m {
                for i in 0..m {
                    if c[(i, j)] != 0.0 {
                        nz.push((i, j, c[(i, j)]));
                    }
                }
            }
            (mi, nz)
        })
        .collect();
    let mut bb = BlockBuilder::new(m * nb);
    for a in 0..nb {
        for b in a..nb {
            for (gm, nz) in &terms {
                let pos = map.position_of(&sum_exponents(&e[a], &e[b], gm)).expect("in b_2r");
                for &(i, j, v) in nz {
                    if a == b && i > j {
                        continue;
                    }
                    bb.add(pos, a * m + i, b * m + j, v);
                }
            }
        }
    }
    Ok(bb.finish(label.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelaxOptions {
    /// Eliminate constant rows of the compliance constraints when possible.
    pub schur_reduce: bool,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        Self { schur_reduce: true }
    }
}

/// Block accounting of a relaxation: moment side, box sides, constraint sides.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSizes {
    pub moment: usize,
    pub boxes: Vec<usize>,
    pub lmis: Vec<usize>,
    pub n_y: usize,
}

impl std::fmt::Display for BlockSizes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let boxes = match self.boxes.first() {
            Some(s) if self.boxes.iter().all(|b| b == s) => format!("{}x{}", self.boxes.len(), s),
            _ => self.boxes.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("+"),
        };
        let lmis = self.lmis.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("+");
        write!(f, "{}, {}, {}", self.moment, boxes, lmis)
    }
}

#[derive(Clone, Debug)]
pub struct Relaxation {
    pub problem: SdpProblem,
    pub map: MomentIndexMap,
    pub sizes: BlockSizes,
    /// Whether each compliance constraint was built in reduced form.
    pub reduced: Vec<bool>,
}

/// Smallest admissible order for the constraint degrees of `scaled`.
pub fn min_order(scaled: &ScaledProblem) -> usize {
    half_ceil(scaled.lmi_degree()).max(1)
}

/// Order-`r` moment relaxation: one moment matrix, one localizer per box
/// constraint and one per compliance constraint.
pub fn build_relaxation(scaled: &ScaledProblem, r: usize, opts: RelaxOptions) -> Result<Relaxation> {
    let r_min = min_order(scaled);
    if r < r_min {
        return Err(Error::OrderTooSmall {
            order: r,
            degree: scaled.lmi_degree() as usize,
        });
    }
    let n = scaled.n_vars();
    let map = MomentIndexMap::new(n, r);
    let mut objective = vec![0.0; map.n_y()];
    let mut offset = 0.0;
    for (m, c) in scaled.objective.terms() {
        match map.position(m).expect("objective degree within 2r") {
            0 => offset += c,
            p => objective[p - 1] += c,
        }
    }
    let mut blocks = vec![moment_matrix_structure(&map, "moment")];
    for (g, p) in scaled.box_constraints.iter().enumerate() {
        blocks.push(localizing_scalar(&map, p, &format!("box[{g}]"))?);
    }
    let mut reduced = Vec::new();
    for lmi in &scaled.lmis {
        let use_reduced = opts.schur_reduce && lmi.reduced.is_some();
        reduced.push(use_reduced);
        blocks.push(localizing_pmi(
            &map,
            lmi.matrix(use_reduced),
            &format!("compliance[{}]", lmi.load_case),
        )?);
    }
    let sizes = BlockSizes {
        moment: blocks[0].dim,
        boxes: blocks[1..=n].iter().map(|b| b.dim).collect(),
        lmis: blocks[n + 1..].iter().map(|b| b.dim).collect(),
        n_y: map.n_y(),
    };
    let problem = SdpProblem {
        n_y: map.n_y(),
        objective,
        offset,
        blocks,
        n_vars: Some(n),
        order: Some(r),
    };
    Ok(Relaxation {
        problem,
        map,
        sizes,
        reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eig;

    #[test]
    fn univariate_moment_matrix() {
        let map = MomentIndexMap::new(1, 1);
        assert_eq!(map.n_y(), 2);
        let blk = moment_matrix_structure(&map, "m");
        let y = [0.3, 0.7];
        let m = blk.evaluate(&y);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.7]));
    }

    #[test]
    fn scalar_localizer() {
        let map = MomentIndexMap::new(1, 1);
        let g = Polynomial::from_terms(
            1,
            [(MultiIndex::new(vec![0]), 1.0), (MultiIndex::new(vec![2]), -1.0)],
        );
        let blk = localizing_scalar(&map, &g, "box").unwrap();
        assert_eq!(blk.dim, 1);
        assert_eq!(blk.evaluate(&[0.0, 0.25])[(0, 0)], 0.75);
        let cubic = Polynomial::from_terms(1, [(MultiIndex::new(vec![3]), 1.0)]);
        assert!(matches!(
            localizing_scalar(&map, &cubic, "x"),
            Err(Error::OrderTooSmall { .. })
        ));
    }

    #[test]
    fn sizes_from_formulas() {
        for (n, r, m, side) in [(9, 2, 55, 10), (13, 2, 105, 14), (9, 3, 220, 55)] {
            let map = MomentIndexMap::new(n, r);
            assert_eq!(map.basis_len(r), m);
            assert_eq!(map.basis_len(r - 1), side);
        }
        assert_eq!(MomentIndexMap::new(9, 1).n_y(), 54);
        assert_eq!(MomentIndexMap::new(9, 2).n_y(), 714);
        assert_eq!(MomentIndexMap::new(9, 3).n_y(), 5004);
        assert_eq!(MomentIndexMap::new(13, 2).n_y(), 2379);
    }

    #[test]
    fn dirac_moments_give_rank_one() {
        let map = MomentIndexMap::new(3, 2);
        let x = [0.3, -0.7, 0.5];
        let y = map.dirac(&x);
        let m = moment_matrix_structure(&map, "m").evaluate(&y);
        let b = DMatrix::from_column_slice(10, 1, &map.basis().eval(&x)[..10]);
        assert!((&m - &b * b.transpose()).amax() < 1e-15);
        let sv = m.singular_values();
        assert!(sv.iter().filter(|s| **s > 1e-12 * sv.max()).count() == 1);
        assert_eq!(map.first_order(&y), x.to_vec());
    }

    #[test]
    fn pmi_first_order_is_literal() {
        let map = MomentIndexMap::new(2, 1);
        let mut g = MatrixPolynomial::zero(2, 2);
        g.add_term(MultiIndex::zero(2), &DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 0.0]));
        g.add_term(MultiIndex::new(vec![1, 0]), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        g.add_term(MultiIndex::new(vec![1, 1]), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 3.0]));
        let blk = localizing_pmi(&map, &g, "g").unwrap();
        let y = [0.1, 0.2, 0.3, 0.4, 0.5];
        // y-positions: x1, x2, x1^2, x1x2, x2^2
        let want = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 0.1 + 3.0 * 0.4]);
        assert!((blk.evaluate(&y) - want).amax() < 1e-15);
    }

    #[test]
    fn pmi_localizer_at_dirac_is_kronecker() {
        let map = MomentIndexMap::new(2, 2);
        let mut g = MatrixPolynomial::zero(2, 2);
        g.add_term(MultiIndex::zero(2), &DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]));
        g.add_term(MultiIndex::new(vec![2, 0]), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let x = [0.4, -0.2];
        let blk = localizing_pmi(&map, &g, "g").unwrap();
        assert_eq!(blk.dim, 6);
        let got = blk.evaluate(&map.dirac(&x));
        let b = DMatrix::from_column_slice(3, 1, &map.basis().eval(&x)[..3]);
        let want = (&b * b.transpose()).kronecker(&g.evaluate(&x));
        assert!((got - want).amax() < 1e-15);
        assert!(min_eig(&blk.evaluate(&map.dirac(&x))) > -1e-12);
    }
}
