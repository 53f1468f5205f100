//! Multi-indices, monomial bases and (matrix-valued) polynomials.
//!
//! Monomials are ordered graded-lexicographically: lower total degree first,
//! and within a degree by descending exponents read left to right, so that
//! `x1` precedes `x2` and `x1^2` precedes `x1 x2`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Entries with magnitude at or below this are dropped after substitution.
pub const PRUNE_TOL: f64 = 1e-14;

/// Exponent vector of a monomial with its cached total degree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exponents: Vec<u32>,
    degree: u32,
}

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        let degree = exponents.iter().sum();
        Self { exponents, degree }
    }

    pub fn zero(n_vars: usize) -> Self {
        Self::new(vec![0; n_vars])
    }

    /// The monomial `x_var`.
    pub fn unit(n_vars: usize, var: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[var] = 1;
        Self::new(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn n_vars(&self) -> usize {
        self.exponents.len()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        assert_eq!(self.n_vars(), other.n_vars(), "multi-index arity mismatch");
        MultiIndex {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
            degree: self.degree + other.degree,
        }
    }

    /// Value of the monomial at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of degree at most `max_degree`, graded-lex sorted.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    n_vars: usize,
    max_degree: u32,
    entries: Vec<MultiIndex>,
}

impl MonomialBasis {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn entries(&self) -> &[MultiIndex] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries of degree at most `k` (a prefix of the basis).
    pub fn prefix_len(&self, k: u32) -> usize {
        self.entries.partition_point(|m| m.degree <= k)
    }

    /// Monomial values `b(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|m| m.eval(x)).collect()
    }
}

/// Graded-lex basis of all monomials in `n_vars` variables of degree ≤ `k`.
pub fn basis(n_vars: usize, k: u32) -> MonomialBasis {
    assert!(n_vars >= 1, "basis needs at least one variable");
    let mut entries = Vec::with_capacity(binomial(n_vars + k as usize, k as usize));
    let mut buf = vec![0u32; n_vars];
    for d in 0..=k {
        fill_degree(&mut buf, 0, d, &mut entries);
    }
    MonomialBasis {
        n_vars,
        max_degree: k,
        entries,
    }
}

fn fill_degree(buf: &mut [u32], pos: usize, rest: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = rest;
        out.push(MultiIndex::new(buf.to_vec()));
        return;
    }
    for e in (0..=rest).rev() {
        buf[pos] = e;
        fill_degree(buf, pos + 1, rest - e, out);
    }
    buf[pos] = 0;
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Per-variable affine change of variables `x = scale * x' + shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub scale: f64,
    pub shift: f64,
}

/// Sparse real polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Self {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(MultiIndex::zero(n_vars), c);
        p
    }

    /// The polynomial `x_var`.
    pub fn var(n_vars: usize, var: usize) -> Self {
        let mut p = Self::zero(n_vars);
        p.add_term(MultiIndex::unit(n_vars, var), 1.0);
        p
    }

    pub fn from_terms(n_vars: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut p = Self::zero(n_vars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Accumulates `c * m`; exact zeros are never stored.
    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        assert_eq!(m.n_vars(), self.n_vars, "multi-index arity mismatch");
        let v = self.coeff(&m) + c;
        if v == 0.0 {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, f64> {
        &self.terms
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum term degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree).max().unwrap_or(0)
    }

    pub fn multiply(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n_vars, other.n_vars, "polynomial arity mismatch");
        let mut out = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *out.entry(ma.add(mb)).or_insert(0.0) += ca * cb;
            }
        }
        out.retain(|_, v| *v != 0.0);
        Polynomial {
            n_vars: self.n_vars,
            terms: out,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_vars, "point arity mismatch");
        self.terms.iter().map(|(m, c)| c * m.eval(x)).sum()
    }

    pub fn substitute_affine(&self, maps: &[AffineMap]) -> Polynomial {
        assert_eq!(maps.len(), self.n_vars, "one affine map per variable");
        let table = PowerTable::new(self.n_vars, maps);
        let mut out = BTreeMap::new();
        for (m, c) in &self.terms {
            for (mm, v) in table.expand(m) {
                *out.entry(mm).or_insert(0.0) += c * v;
            }
        }
        out.retain(|_, v: &mut f64| v.abs() > PRUNE_TOL);
        Polynomial {
            n_vars: self.n_vars,
            terms: out,
        }
    }
}

/// Expansions of `(s x + t)^k` per variable, combined into monomial expansions.
struct PowerTable<'a> {
    n_vars: usize,
    maps: &'a [AffineMap],
}

impl<'a> PowerTable<'a> {
    fn new(n_vars: usize, maps: &'a [AffineMap]) -> Self {
        Self { n_vars, maps }
    }

    /// Coefficients of `(s x + t)^k` in ascending powers of `x`.
    fn univariate(map: AffineMap, k: u32) -> Vec<f64> {
        (0..=k)
            .map(|i| {
                binomial(k as usize, i as usize) as f64
                    * map.scale.powi(i as i32)
                    * map.shift.powi((k - i) as i32)
            })
            .collect()
    }

    fn expand(&self, m: &MultiIndex) -> Vec<(MultiIndex, f64)> {
        let mut acc: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.n_vars], 1.0)];
        for (v, &k) in m.exponents().iter().enumerate() {
            if k == 0 {
                continue;
            }
            let uni = Self::univariate(self.maps[v], k);
            let mut next = Vec::with_capacity(acc.len() * uni.len());
            for (e, c) in &acc {
                for (i, &u) in uni.iter().enumerate() {
                    if u == 0.0 {
                        continue;
                    }
                    let mut e2 = e.clone();
                    e2[v] = i as u32;
                    next.push((e2, c * u));
                }
            }
            acc = next;
        }
        acc.into_iter()
            .map(|(e, c)| (MultiIndex::new(e), c))
            .collect()
    }
}

/// Polynomial with symmetric matrix coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPolynomial {
    n_vars: usize,
    dim: usize,
    terms: BTreeMap<MultiIndex, DMatrix<f64>>,
}

impl MatrixPolynomial {
    pub fn zero(n_vars: usize, dim: usize) -> Self {
        Self {
            n_vars,
            dim,
            terms: BTreeMap::new(),
        }
    }

    /// Accumulates `c * m`. Panics if `c` is not symmetric to 1e-12 relative.
    pub fn add_term(&mut self, m: MultiIndex, c: &DMatrix<f64>) {
        assert_eq!(m.n_vars(), self.n_vars, "multi-index arity mismatch");
        assert_eq!(c.shape(), (self.dim, self.dim), "coefficient shape mismatch");
        let scale = c.amax();
        let asym = (c - c.transpose()).amax();
        assert!(
            asym <= 1e-12 * scale.max(f64::MIN_POSITIVE),
            "matrix polynomial coefficients must be symmetric"
        );
        if scale == 0.0 {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(slot) => {
                *slot += c;
                if slot.iter().all(|v| *v == 0.0) {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c.clone());
            }
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &BTreeMap<MultiIndex, DMatrix<f64>> {
        &self.terms
    }

    pub fn coeff(&self, m: &MultiIndex) -> Option<&DMatrix<f64>> {
        self.terms.get(m)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        assert_eq!(x.len(), self.n_vars, "point arity mismatch");
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (m, c) in &self.terms {
            out += c * m.eval(x);
        }
        out
    }

    pub fn substitute_affine(&self, maps: &[AffineMap]) -> MatrixPolynomial {
        assert_eq!(maps.len(), self.n_vars, "one affine map per variable");
        let table = PowerTable::new(self.n_vars, maps);
        let mut out: BTreeMap<MultiIndex, DMatrix<f64>> = BTreeMap::new();
        for (m, c) in &self.terms {
            for (mm, v) in table.expand(m) {
                let slot = out
                    .entry(mm)
                    .or_insert_with(|| DMatrix::zeros(self.dim, self.dim));
                *slot += c * v;
            }
        }
        for c in out.values_mut() {
            c.apply(|v| {
                if v.abs() <= PRUNE_TOL {
                    *v = 0.0
                }
            });
        }
        out.retain(|_, c| c.iter().any(|v| *v != 0.0));
        MatrixPolynomial {
            n_vars: self.n_vars,
            dim: self.dim,
            terms: out,
        }
    }
}
