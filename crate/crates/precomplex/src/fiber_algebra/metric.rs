use nalgebra::{DMatrix, DVector};

use super::basis::{combinations, MultiIndex};
use super::AlgebraError;

/// Metric tensor at a single point, in coordinate components.
#[derive(Clone, Debug)]
pub struct MetricAtPoint {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    /// Lower Cholesky factor with `g = L Lᵀ`.
    chol: DMatrix<f64>,
    chol_inv: DMatrix<f64>,
}

impl MetricAtPoint {
    pub fn new(g: DMatrix<f64>) -> Result<Self, AlgebraError> {
        let d = g.nrows();
        if g.ncols() != d || d == 0 {
            return Err(AlgebraError::MetricShape(g.nrows(), g.ncols()));
        }
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-12 * g.amax().max(1.0) {
            return Err(AlgebraError::MetricNotSymmetric(asym));
        }
        let chol = g.clone().cholesky().ok_or(AlgebraError::MetricNotPositive)?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(AlgebraError::MetricNotPositive)?;
        let g_inv = l_inv.transpose() * &l_inv;
        Ok(MetricAtPoint { g, g_inv, chol: l, chol_inv: l_inv })
    }

    pub fn euclidean(d: usize) -> Self {
        MetricAtPoint::new(DMatrix::identity(d, d)).expect("identity is a metric")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self, AlgebraError> {
        MetricAtPoint::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn g_inv(&self) -> &DMatrix<f64> {
        &self.g_inv
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn sqrt_det(&self) -> f64 {
        self.chol.diagonal().product()
    }

    /// Coordinate components of the orthonormal coframe: row `i` is `ϑ^i`,
    /// i.e. `ϑ^i = Σ_a L_{ai} dx^a`.
    pub fn coframe(&self) -> DMatrix<f64> {
        self.chol.transpose()
    }

    /// Coordinate components of the orthonormal frame: column `i` is `E_i`.
    pub fn frame(&self) -> DMatrix<f64> {
        self.chol_inv.transpose()
    }

    /// Orthonormal-frame components of a coordinate covector.
    pub fn covector_to_frame(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.chol_inv * xi
    }

    /// Coordinate components of a covector given in the orthonormal coframe.
    pub fn covector_from_frame(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.chol * xi
    }

    pub fn raise(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.g_inv * xi
    }

    pub fn norm_covector(&self, xi: &DVector<f64>) -> f64 {
        xi.dot(&(&self.g_inv * xi)).sqrt()
    }
}

/// `k`-th compound matrix: entry `(I, J)` is the minor `det A[I, J]`.
pub fn compound(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let idx = combinations(d, k);
    let mut out = DMatrix::zeros(idx.len(), idx.len());
    for (r, rows) in idx.iter().enumerate() {
        for (c, cols) in idx.iter().enumerate() {
            out[(r, c)] = minor(a, *rows, *cols);
        }
    }
    out
}

fn minor(a: &DMatrix<f64>, rows: MultiIndex, cols: MultiIndex) -> f64 {
    let r = rows.indices();
    let c = cols.indices();
    if r.is_empty() {
        return 1.0;
    }
    DMatrix::from_fn(r.len(), c.len(), |i, j| a[(r[i], c[j])]).determinant()
}
