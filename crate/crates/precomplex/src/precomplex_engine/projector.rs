use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EngineError;

/// Default relative rank tolerance.
pub const DEFAULT_TAU: f64 = 1e-8;
/// Minimal ratio between the last kept and the first dropped singular value.
pub const RANK_GAP_GUARD: f64 = 10.0;

/// `D_t^{1/2} A D_s^{-1/2}`: the operator in mass-orthonormal coordinates.
pub fn weighted(a: &DMatrix<f64>, m_src: &[f64], m_tgt: &[f64]) -> DMatrix<f64> {
    let mut w = a.clone();
    for (j, mut col) in w.column_iter_mut().enumerate() {
        let s = 1.0 / m_src[j].sqrt();
        for (i, v) in col.iter_mut().enumerate() {
            *v *= m_tgt[i].sqrt() * s;
        }
    }
    w
}

pub(crate) fn to_weighted(v: &DVector<f64>, m: &[f64]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(m).map(|(x, w)| x * w.sqrt()))
}

pub(crate) fn from_weighted(v: &DVector<f64>, m: &[f64]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().zip(m).map(|(x, w)| x / w.sqrt()))
}

pub(crate) fn check_mass(m: &[f64], level: usize) -> Result<(), EngineError> {
    if m.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(EngineError::MassNotPositive { level })
    }
}

/// Mass-weighted norm `√(vᵀMv)` for a diagonal mass.
pub fn mass_norm(v: &DVector<f64>, m: &[f64]) -> f64 {
    v.iter().zip(m).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

pub fn mass_inner(a: &DVector<f64>, b: &DVector<f64>, m: &[f64]) -> f64 {
    a.iter().zip(b).zip(m).map(|((x, y), w)| w * x * y).sum()
}

/// Sorted singular triplets of a weighted operator. `u` is thin; with `full`,
/// `v` is completed to an orthonormal basis of the whole source space.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Spectrum {
    pub fn compute(a: &DMatrix<f64>, full: bool) -> Self {
        let (r, c) = a.shape();
        if r == 0 || c == 0 {
            return Spectrum { u: DMatrix::identity(r, r), s: Vec::new(), v: DMatrix::identity(c, c) };
        }
        let svd = crate::linalg::sorted_svd(a);
        let v = if full { complete(svd.v) } else { svd.v };
        Spectrum { u: svd.u, s: svd.s, v }
    }

    pub fn max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values above `tau · σ_max`.
    pub fn rank(&self, tau: f64) -> usize {
        crate::linalg::numerical_rank(&self.s, tau)
    }

    /// Ratio between the last kept singular value and the first dropped one,
    /// or the threshold itself when nothing is dropped.
    pub fn gap(&self, tau: f64) -> f64 {
        let r = self.rank(tau);
        if r == 0 {
            return f64::MAX;
        }
        let below = if r < self.s.len() { self.s[r] } else { tau * self.max() };
        if below == 0.0 {
            f64::MAX
        } else {
            self.s[r - 1] / below
        }
    }
}

/// Extends orthonormal columns to a full orthonormal basis; the added columns
/// are eigenvectors of the complementary projector.
fn complete(q: DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = q.shape();
    if n == k {
        return q;
    }
    let comp = DMatrix::identity(n, n) - &q * q.transpose();
    let eig = nalgebra::SymmetricEigen::new(comp);
    let extra: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let mut out = DMatrix::zeros(n, k + extra.len());
    out.columns_mut(0, k).copy_from(&q);
    for (j, &i) in extra.iter().enumerate() {
        out.column_mut(k + j).copy_from(&eig.eigenvectors.column(i));
    }
    out
}

/// Result of [`range_projector`], in the original (unweighted) coordinates.
#[derive(Clone, Debug)]
pub struct RangeProjector {
    /// `P`: M-weighted Moore–Penrose pseudoinverse.
    pub pseudo_inverse: DMatrix<f64>,
    /// `Π = A P`: M-orthogonal projector onto the range.
    pub projector: DMatrix<f64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub gap: f64,
    pub tau: f64,
    /// Set when the singular values around the cut have no gap of [`RANK_GAP_GUARD`].
    pub rank_ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub rank: usize,
    pub gap: f64,
    pub rank_ambiguous: bool,
}

impl RangeProjector {
    pub fn summary(&self) -> RankSummary {
        RankSummary { rank: self.rank, gap: self.gap, rank_ambiguous: self.rank_ambiguous }
    }
}

/// Pseudoinverse and range projector of `a` with respect to the diagonal masses.
pub fn range_projector(a: &DMatrix<f64>, m_src: &[f64], m_tgt: &[f64], tau: f64) -> Result<RangeProjector, EngineError> {
    if m_src.len() != a.ncols() || m_tgt.len() != a.nrows() {
        return Err(EngineError::Shape { rows: a.nrows(), cols: a.ncols(), src: m_src.len(), tgt: m_tgt.len() });
    }
    check_mass(m_src, 0)?;
    check_mass(m_tgt, 1)?;
    let spec = Spectrum::compute(&weighted(a, m_src, m_tgt), false);
    Ok(projector_from_spectrum(&spec, m_src, m_tgt, tau))
}

pub(crate) fn projector_from_spectrum(spec: &Spectrum, m_src: &[f64], m_tgt: &[f64], tau: f64) -> RangeProjector {
    let rank = spec.rank(tau);
    let gap = spec.gap(tau);
    let (n_t, n_s) = (m_tgt.len(), m_src.len());
    let ur = spec.u.columns(0, rank);
    let vr = spec.v.columns(0, rank);
    // P = D_s^{-1/2} V Σ⁻¹ Uᵀ D_t^{1/2}
    let mut vs = vr.into_owned();
    for j in 0..rank {
        vs.column_mut(j).scale_mut(1.0 / spec.s[j]);
    }
    let mut p = vs * ur.transpose();
    for i in 0..n_s {
        p.row_mut(i).scale_mut(1.0 / m_src[i].sqrt());
    }
    for j in 0..n_t {
        p.column_mut(j).scale_mut(m_tgt[j].sqrt());
    }
    // Π = D_t^{-1/2} U Uᵀ D_t^{1/2}
    let mut pi = &ur * ur.transpose();
    for i in 0..n_t {
        let ri = 1.0 / m_tgt[i].sqrt();
        pi.row_mut(i).scale_mut(ri);
    }
    for j in 0..n_t {
        pi.column_mut(j).scale_mut(m_tgt[j].sqrt());
    }
    RangeProjector {
        pseudo_inverse: p,
        projector: pi,
        rank,
        singular_values: spec.s.clone(),
        gap,
        tau,
        rank_ambiguous: rank > 0 && gap < RANK_GAP_GUARD,
    }
}

/// Spectral-norm estimate by power iteration on `AᵀA` from a fixed start;
/// a lower bound that converges quickly for the operators at hand.
pub fn spectral_norm_estimate(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 97) as f64 / 97.0);
    x /= x.norm();
    let mut sigma = 0.0;
    for _ in 0..300 {
        let y = a * &x;
        let z = a.transpose() * &y;
        let nz = z.norm();
        if nz == 0.0 {
            return 0.0;
        }
        let next = y.norm();
        x = z / nz;
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}
