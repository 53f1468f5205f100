//! Infeasible primal-dual interior-point method with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Solves `min c^T y s.t. S = B_0 + sum_i y_i B_i >= 0` together with
//! `max -<B_0, X> s.t. <B_i, X> = c_i, X >= 0`. Each block is equilibrated by a
//! diagonal congruence before solving; dual matrices are mapped back afterwards.

use nalgebra::{DMatrix, DVector};

use super::SolverOptions;
use crate::error::{Error, Result};
use crate::linalg::sym_eig;
use crate::relax::{SdpProblem, SdpSolution, SolveStatus};

struct Coef {
    var: usize,
    /// Upper-triangle entries in block coordinates.
    entries: Vec<(usize, usize, f64)>,
    /// Rows touched by the coefficient (sorted).
    rows: Vec<usize>,
}

impl Coef {
    fn inner(&self, m: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(p, q, v)| if p == q { v * m[(p, q)] } else { 2.0 * v * m[(p, q)] })
            .sum()
    }

    fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(p, q, v) in &self.entries {
            m[(p, q)] += s * v;
            if p != q {
                m[(q, p)] += s * v;
            }
        }
    }
}

struct Block {
    m: usize,
    b0: DMatrix<f64>,
    coefs: Vec<Coef>,
    /// Congruence `D` with working data `D B D`.
    d: DVector<f64>,
}

/// NT scaling of one block: `G^-1 X G^-T = G^T S G = diag(lambda)`, `W = G G^T`.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn prepare(problem: &SdpProblem) -> Result<Vec<Block>> {
    let mut blocks = Vec::with_capacity(problem.blocks.len());
    for blk in &problem.blocks {
        let m = blk.dim;
        let mut diag = vec![0.0f64; m];
        let mut note = |p: u32, q: u32, v: f64| {
            if p == q {
                diag[p as usize] = diag[p as usize].max(v.abs());
            }
        };
        for &(p, q, v) in &blk.constant.entries {
            note(p, q, v);
        }
        for (i, c) in &blk.coeffs {
            if *i >= problem.n_y {
                return Err(Error::Dimension(format!(
                    "block {:?} references y[{i}] but n_y = {}",
                    blk.label, problem.n_y
                )));
            }
            for &(p, q, v) in &c.entries {
                note(p, q, v);
            }
        }
        let d = DVector::from_iterator(m, diag.iter().map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 1.0 }));
        let check = |p: u32, q: u32| -> Result<()> {
            if p > q || q as usize >= m {
                return Err(Error::Dimension(format!(
                    "block {:?}: entry ({p}, {q}) outside the upper triangle of side {m}",
                    blk.label
                )));
            }
            Ok(())
        };
        let mut b0 = DMatrix::zeros(m, m);
        for &(p, q, v) in &blk.constant.entries {
            check(p, q)?;
            let (p, q) = (p as usize, q as usize);
            let s = v * d[p] * d[q];
            b0[(p, q)] += s;
            if p != q {
                b0[(q, p)] += s;
            }
        }
        let mut coefs = Vec::with_capacity(blk.coeffs.len());
        for (i, c) in &blk.coeffs {
            let mut entries = Vec::with_capacity(c.entries.len());
            let mut rows = Vec::new();
            for &(p, q, v) in &c.entries {
                check(p, q)?;
                let (p, q) = (p as usize, q as usize);
                entries.push((p, q, v * d[p] * d[q]));
                rows.push(p);
                rows.push(q);
            }
            rows.sort_unstable();
            rows.dedup();
            if !entries.is_empty() {
                coefs.push(Coef {
                    var: *i,
                    entries,
                    rows,
                });
            }
        }
        coefs.sort_by_key(|c| c.var);
        blocks.push(Block { m, b0, coefs, d });
    }
    Ok(blocks)
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let l = x.clone().cholesky()?.l();
    let mut t = l.transpose() * s * &l;
    symmetrize(&mut t);
    let (d, v) = sym_eig(&t);
    if d.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let lambda = d.map(f64::sqrt);
    let m = x.nrows();
    let l_inv = l.solve_lower_triangular(&DMatrix::identity(m, m))?;
    let mut g = &l * &v;
    let mut g_inv = v.transpose() * l_inv;
    for k in 0..m {
        let r = lambda[k].sqrt();
        g.column_mut(k).scale_mut(1.0 / r);
        g_inv.row_mut(k).scale_mut(r);
    }
    let mut w = &g * g.transpose();
    symmetrize(&mut w);
    Some(Scaling { g, g_inv, w, lambda })
}

/// Largest `alpha` with `diag(lambda) + alpha * d >= 0` (`d` in scaled space).
fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let m = lambda.len();
    let mut t = DMatrix::from_fn(m, m, |i, j| d[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    symmetrize(&mut t);
    let e = t.symmetric_eigenvalues().min();
    if e < 0.0 {
        -1.0 / e
    } else {
        f64::INFINITY
    }
}

struct State {
    y: DVector<f64>,
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
}

struct Residuals {
    /// `B_0 + B(y) - S` per block.
    rp: Vec<DMatrix<f64>>,
    /// `c - A(X)`.
    rd: DVector<f64>,
    pobj: f64,
    dobj: f64,
    rel_gap: f64,
    pinf: f64,
    dinf: f64,
    mu: f64,
}

struct Solver<'a> {
    blocks: Vec<Block>,
    c: &'a [f64],
    n: usize,
    nu: f64,
    b0_norm: f64,
    c_norm: f64,
}

impl<'a> Solver<'a> {
    fn apply_b(&self, y: &DVector<f64>, k: usize) -> DMatrix<f64> {
        let blk = &self.blocks[k];
        let mut out = DMatrix::zeros(blk.m, blk.m);
        for c in &blk.coefs {
            let v = y[c.var];
            if v != 0.0 {
                c.add_to(&mut out, v);
            }
        }
        out
    }

    fn apply_a(&self, mats: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (blk, m) in self.blocks.iter().zip(mats) {
            for c in &blk.coefs {
                out[c.var] += c.inner(m);
            }
        }
        out
    }

    fn residuals(&self, st: &State) -> Residuals {
        let mut rp = Vec::with_capacity(self.blocks.len());
        let mut pinf2 = 0.0;
        let mut dobj = 0.0;
        let mut xs = 0.0;
        for (k, blk) in self.blocks.iter().enumerate() {
            let r = &blk.b0 + self.apply_b(&st.y, k) - &st.s[k];
            pinf2 += r.norm_squared();
            rp.push(r);
            dobj -= blk.b0.dot(&st.x[k]);
            xs += st.x[k].dot(&st.s[k]);
        }
        let ax = self.apply_a(&st.x);
        let rd = DVector::from_fn(self.n, |i, _| self.c[i] - ax[i]);
        let pobj: f64 = self.c.iter().zip(st.y.iter()).map(|(c, y)| c * y).sum();
        let gap = pobj - dobj;
        Residuals {
            rel_gap: gap.abs().max(xs.abs()) / (1.0 + pobj.abs() + dobj.abs()),
            pinf: pinf2.sqrt() / (1.0 + self.b0_norm),
            dinf: rd.norm() / (1.0 + self.c_norm),
            mu: xs / self.nu,
            rp,
            rd,
            pobj,
            dobj,
        }
    }

    /// `M_ij = <B_i, W B_j W>` summed over blocks.
    fn schur(&self, sc: &[Scaling]) -> DMatrix<f64> {
        let mut mm = DMatrix::zeros(self.n, self.n);
        for (blk, s) in self.blocks.iter().zip(sc) {
            let m = blk.m;
            let w = &s.w;
            let mut q = DMatrix::zeros(m, m);
            let mut local = vec![usize::MAX; m];
            for (ii, ci) in blk.coefs.iter().enumerate() {
                let nr = ci.rows.len();
                for (k, &r) in ci.rows.iter().enumerate() {
                    local[r] = k;
                }
                // Tt = (B_i[R, :] W)^T, Q = Tt W[:, R]^T = W B_i W (symmetric)
                let mut tt = DMatrix::zeros(m, nr);
                for &(p, qq, v) in &ci.entries {
                    tt.column_mut(local[p]).axpy(v, &w.column(qq), 1.0);
                    if p != qq {
                        tt.column_mut(local[qq]).axpy(v, &w.column(p), 1.0);
                    }
                }
                let wr = w.select_rows(ci.rows.iter());
                q.gemm(1.0, &tt, &wr, 0.0);
                for cj in &blk.coefs[ii..] {
                    mm[(ci.var, cj.var)] += cj.inner(&q);
                }
                for &r in &ci.rows {
                    local[r] = usize::MAX;
                }
            }
        }
        for j in 0..self.n {
            for i in 0..j {
                let v = mm[(i, j)] + mm[(j, i)];
                mm[(i, j)] = v;
                mm[(j, i)] = v;
            }
        }
        mm
    }

    /// Directions for complementarity right-hand sides `rc` (`dX + W dS W = rc`).
    fn direction(
        &self,
        chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        sc: &[Scaling],
        res: &Residuals,
        rc: &[DMatrix<f64>],
    ) -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut tmp = Vec::with_capacity(self.blocks.len());
        for (k, s) in sc.iter().enumerate() {
            tmp.push(&rc[k] - &s.w * &res.rp[k] * &s.w);
        }
        let rhs = self.apply_a(&tmp) - &res.rd;
        let dy = chol.solve(&rhs);
        let mut ds = Vec::with_capacity(self.blocks.len());
        let mut dx = Vec::with_capacity(self.blocks.len());
        for (k, s) in sc.iter().enumerate() {
            let mut dsk = &res.rp[k] + self.apply_b(&dy, k);
            symmetrize(&mut dsk);
            let mut dxk = &rc[k] - &s.w * &dsk * &s.w;
            symmetrize(&mut dxk);
            ds.push(dsk);
            dx.push(dxk);
        }
        (dy, dx, ds)
    }

    fn steps(&self, sc: &[Scaling], dx: &[DMatrix<f64>], ds: &[DMatrix<f64>]) -> (f64, f64, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        let mut dxs = Vec::with_capacity(sc.len());
        let mut dss = Vec::with_capacity(sc.len());
        for (k, s) in sc.iter().enumerate() {
            let mut tx = &s.g_inv * &dx[k] * s.g_inv.transpose();
            let mut ts = s.g.transpose() * &ds[k] * &s.g;
            symmetrize(&mut tx);
            symmetrize(&mut ts);
            ap = ap.min(max_step(&s.lambda, &tx));
            ad = ad.min(max_step(&s.lambda, &ts));
            dxs.push(tx);
            dss.push(ts);
        }
        (ap, ad, dxs, dss)
    }
}

fn factor(mut m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = (0..m.nrows()).fold(0.0f64, |a, i| a.max(m[(i, i)].abs())).max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..8 {
        if let Some(c) = m.clone().cholesky() {
            return Some(c);
        }
        let next = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        for i in 0..m.nrows() {
            m[(i, i)] += next - reg;
        }
        reg = next;
    }
    None
}

pub(super) fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    if problem.objective.len() != problem.n_y {
        return Err(Error::Dimension("objective length differs from n_y".into()));
    }
    let blocks = prepare(problem)?;
    let n = problem.n_y;
    let nu: f64 = blocks.iter().map(|b| b.m as f64).sum();
    let b0_norm = blocks.iter().map(|b| b.b0.norm_squared()).sum::<f64>().sqrt();
    let c_norm = problem.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    let solver = Solver {
        blocks,
        c: &problem.objective,
        n,
        nu,
        b0_norm,
        c_norm,
    };

    // identity-scaled infeasible start
    let mut coef_norm = vec![0.0f64; n];
    for b in &solver.blocks {
        for c in &b.coefs {
            coef_norm[c.var] += c.entries.iter().map(|e| if e.0 == e.1 { e.2 * e.2 } else { 2.0 * e.2 * e.2 }).sum::<f64>();
        }
    }
    let mut st = State {
        y: DVector::zeros(n),
        x: Vec::new(),
        s: Vec::new(),
    };
    for b in &solver.blocks {
        let m = b.m as f64;
        let mut xi: f64 = 10f64.max(m.sqrt());
        let mut eta: f64 = 10f64.max(m.sqrt()).max(b.b0.norm());
        for c in &b.coefs {
            let nrm = coef_norm[c.var].sqrt();
            xi = xi.max(m * (1.0 + problem.objective[c.var].abs()) / (1.0 + nrm));
            eta = eta.max(nrm);
        }
        st.x.push(DMatrix::identity(b.m, b.m) * xi);
        st.s.push(DMatrix::identity(b.m, b.m) * eta);
    }

    let merit = |r: &Residuals| r.rel_gap.max(r.pinf).max(r.dinf);
    let mut best: Option<(f64, DVector<f64>, Vec<DMatrix<f64>>, usize)> = None;
    let mut status = SolveStatus::MaxIterations;
    let mut stall = 0;
    let mut iterations = 0;
    let mut tiny_steps = 0;
    for it in 0..=opts.max_iter {
        iterations = it;
        let res = solver.residuals(&st);
        let mr = merit(&res);
        if best.as_ref().map_or(true, |b| mr < b.0) {
            best = Some((mr, st.y.clone(), st.x.clone(), it));
            stall = 0;
        } else {
            stall += 1;
        }
        if opts.verbose {
            eprintln!(
                "{it:3} pobj {:+.9e} dobj {:+.9e} gap {:.2e} pinf {:.2e} dinf {:.2e} mu {:.2e}",
                res.pobj + problem.offset,
                res.dobj + problem.offset,
                res.rel_gap,
                res.pinf,
                res.dinf,
                res.mu
            );
        }
        if mr <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        // infeasibility and unboundedness heuristics on diverging iterates
        let xtr: f64 = st.x.iter().map(|x| x.trace()).sum();
        if xtr > 1e12 && res.dobj > 0.0 && res.pinf > opts.tol {
            let ax_norm = (DVector::from_column_slice(solver.c) - &res.rd).norm();
            if ax_norm <= 1e-8 * res.dobj.abs() {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        let ynorm = st.y.norm();
        if ynorm > 1e12 && res.pobj < -1e-8 * ynorm * c_norm && res.dinf > opts.tol {
            status = SolveStatus::Unbounded;
            break;
        }
        if it == opts.max_iter || stall > 15 || tiny_steps >= 3 {
            break;
        }

        let Some(sc) = st
            .x
            .iter()
            .zip(&st.s)
            .map(|(x, s)| nt_scaling(x, s))
            .collect::<Option<Vec<_>>>()
        else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let Some(chol) = factor(solver.schur(&sc)) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        // predictor
        let rc_aff: Vec<DMatrix<f64>> = st.x.iter().map(|x| -x).collect();
        let (_, dx_a, ds_a) = solver.direction(&chol, &sc, &res, &rc_aff);
        let (ap_a, ad_a, dxs_a, dss_a) = solver.steps(&sc, &dx_a, &ds_a);
        let (ap_a, ad_a) = (ap_a.min(1.0), ad_a.min(1.0));
        let mut xs_aff = 0.0;
        for k in 0..st.x.len() {
            let xa = &st.x[k] + &dx_a[k] * ap_a;
            let sa = &st.s[k] + &ds_a[k] * ad_a;
            xs_aff += xa.dot(&sa);
        }
        let mu_aff = xs_aff / nu;
        let sigma = (mu_aff / res.mu).max(0.0).min(1.0).powi(3);

        // corrector in the scaled space
        let mut rc = Vec::with_capacity(sc.len());
        for (k, s) in sc.iter().enumerate() {
            let m = s.lambda.len();
            let prod = &dxs_a[k] * &dss_a[k];
            let mut r = DMatrix::from_fn(m, m, |i, j| -0.5 * (prod[(i, j)] + prod[(j, i)]));
            for i in 0..m {
                r[(i, i)] += sigma * res.mu - s.lambda[i] * s.lambda[i];
            }
            let t = DMatrix::from_fn(m, m, |i, j| 2.0 * r[(i, j)] / (s.lambda[i] + s.lambda[j]));
            let mut full = &s.g * t * s.g.transpose();
            symmetrize(&mut full);
            rc.push(full);
        }
        let (dy, dx, ds) = solver.direction(&chol, &sc, &res, &rc);
        let (ap, ad, _, _) = solver.steps(&sc, &dx, &ds);
        let gamma = opts.step_factor.max(0.9 + 0.09 * ap_a.min(ad_a)).min(0.995);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-8 && ad < 1e-8 {
            tiny_steps += 1;
        } else {
            tiny_steps = 0;
        }
        for k in 0..st.x.len() {
            st.x[k] += &dx[k] * ap;
            st.s[k] += &ds[k] * ad;
            symmetrize(&mut st.x[k]);
            symmetrize(&mut st.s[k]);
        }
        st.y += dy * ad;
    }

    let (y, x_work) = match status {
        SolveStatus::Optimal | SolveStatus::Infeasible | SolveStatus::Unbounded => (st.y.clone(), st.x.clone()),
        _ => {
            let (mr, y, x, _) = best.expect("at least one iterate");
            if mr <= opts.loose_tol {
                status = SolveStatus::OptimalInaccurate;
                if opts.verbose {
                    eprintln!("warning: converged only to the loosened tolerance ({mr:.2e})");
                }
            }
            (y, x)
        }
    };
    let x: Vec<DMatrix<f64>> = solver
        .blocks
        .iter()
        .zip(x_work)
        .map(|(b, x)| {
            let mut xo = DMatrix::from_fn(b.m, b.m, |i, j| b.d[i] * x[(i, j)] * b.d[j]);
            symmetrize(&mut xo);
            xo
        })
        .collect();
    Ok(finalize(problem, y.as_slice().to_vec(), x, status, iterations))
}

/// Objective values and residuals recomputed on the original data.
fn finalize(problem: &SdpProblem, y: Vec<f64>, x: Vec<DMatrix<f64>>, status: SolveStatus, iterations: usize) -> SdpSolution {
    let pobj = problem.objective_value(&y);
    let mut dobj = problem.offset;
    let mut ax = vec![0.0; problem.n_y];
    let mut viol: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (blk, xk) in problem.blocks.iter().zip(&x) {
        dobj -= blk.constant.inner(xk);
        for (i, c) in &blk.coeffs {
            ax[*i] += c.inner(xk);
        }
        let s = blk.evaluate(&y);
        scale = scale.max(s.amax());
        viol = viol.max((-crate::linalg::min_eig(&s)).max(0.0));
    }
    let rd: f64 = ax.iter().zip(&problem.objective).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    let c_norm = problem.objective.iter().map(|v| v * v).sum::<f64>().sqrt();
    SdpSolution {
        status,
        objective: pobj,
        dual_objective: dobj,
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        primal_residual: viol / (1.0 + scale),
        dual_residual: rd / (1.0 + c_norm),
        y,
        x,
        iterations,
    }
}
