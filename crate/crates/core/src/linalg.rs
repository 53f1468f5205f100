//! Small dense helpers shared by the analysis and solver code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative eigenvalue cutoff factor: eigenvalues below `n * lambda_max * RANK_REL` count as zero.
pub const RANK_REL: f64 = 1e-12;

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eig(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| e.eigenvalues[i]));
    let vecs = DMatrix::from_fn(n, n, |r, c| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty one).
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Eigen split of a PSD matrix into range and kernel parts.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    /// Number of eigenvalues at or below the cutoff (they come first).
    pub nullity: usize,
}

impl Spectral {
    pub fn new(m: &DMatrix<f64>) -> Self {
        Self::with_reference(m, 0.0)
    }

    /// Cutoff `n * max(lambda_max, reference) * RANK_REL`.
    pub fn with_reference(m: &DMatrix<f64>, reference: f64) -> Self {
        let (values, vectors) = sym_eig(m);
        let n = values.len();
        let top = values.iter().fold(reference, |a, &b| a.max(b));
        let tau = n as f64 * top * RANK_REL;
        let nullity = if top <= 0.0 {
            n
        } else {
            values.iter().take_while(|&&v| v <= tau).count()
        };
        Self {
            values,
            vectors,
            nullity,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn rank(&self) -> usize {
        self.dim() - self.nullity
    }

    pub fn kernel(&self) -> DMatrix<f64> {
        self.vectors.columns(0, self.nullity).into_owned()
    }

    pub fn range(&self) -> DMatrix<f64> {
        self.vectors.columns(self.nullity, self.rank()).into_owned()
    }

    /// `f - P f` with `P` the projector onto the range.
    pub fn range_residual(&self, f: &DVector<f64>) -> f64 {
        let k = self.kernel();
        (k.transpose() * f).norm()
    }

    /// `M^+ f`.
    pub fn pinv_apply(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in self.nullity..self.dim() {
            let v = self.vectors.column(i);
            out += v * (v.dot(f) / self.values[i]);
        }
        out
    }
}
