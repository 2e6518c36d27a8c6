use nalgebra::DMatrix;

use super::basis::Bidegree;
use super::form::DoubleForm;
use super::maps::{FiberMap, Slot};
use super::{AlgebraError, Scalar};

/// Relative singular-value cutoff for the null-space projection on the diagonal `k = m`.
pub const DIAGONAL_RANK_TOL: f64 = 1e-10;

/// `α(k, m) = k − m + 1`.
pub fn alpha(k: usize, m: usize) -> f64 {
    k as f64 - m as f64 + 1.0
}

/// Orthogonal projection onto the Bianchi forms of bidegree `b`: `ker 𝔊_V` for
/// `k ≤ m` and `ker 𝔊` for `k ≥ m`.
///
/// For `k > m` the complement is `im 𝔊_V`, and `𝔊`, `𝔊_V`, `k − m` span an
/// `sl₂` action, so the projection onto the `𝔊`-kernel is the finite series
/// `Σ_j (−1)^j / (j! Π_{i=1}^j (h+1+i)) 𝔊_V^j 𝔊^j` with `h = k − m`.
/// For `k < m` conjugate by the involution; on the diagonal use a
/// rank-revealing null-space projection onto `ker 𝔊 ∩ ker 𝔊_V`.
pub fn bianchi_projector<T: Scalar>(b: Bidegree) -> FiberMap<T> {
    let m = real_projector(b);
    FiberMap::new(b, b, m.map(|x| T::from_subset(&x)), "P_G").expect("square")
}

pub(crate) fn real_projector(b: Bidegree) -> DMatrix<f64> {
    use std::cmp::Ordering;
    match b.k().cmp(&b.m()) {
        Ordering::Greater => sl2_projector(b),
        Ordering::Less => {
            let t = b.transpose();
            let inv_in = FiberMap::<f64>::involution(b).into_matrix();
            let inv_out = FiberMap::<f64>::involution(t).into_matrix();
            inv_out * sl2_projector(t) * inv_in
        }
        Ordering::Equal => diagonal_projector(b),
    }
}

/// Series projector onto `ker 𝔊` valid whenever `k ≥ m`.
pub(crate) fn sl2_projector(b: Bidegree) -> DMatrix<f64> {
    let h = b.k() as f64 - b.m() as f64;
    let n = b.dim();
    let mut total = DMatrix::<f64>::identity(n, n);
    // raise: 𝔊^j ; lower back: 𝔊_V^j
    let mut up = DMatrix::<f64>::identity(n, n);
    let mut slot = b;
    let mut coeff = 1.0;
    let mut j = 0usize;
    while let Ok(g) = FiberMap::<f64>::bianchi(slot) {
        j += 1;
        up = g.matrix() * up;
        slot = g.target();
        coeff *= -1.0 / (j as f64 * (h + 1.0 + j as f64));
        let mut down = up.clone();
        let mut back = slot;
        for _ in 0..j {
            let gv = FiberMap::<f64>::bianchi_v(back).expect("inverse step stays in range");
            down = gv.matrix() * down;
            back = gv.target();
        }
        total += down * coeff;
    }
    total
}

fn diagonal_projector(b: Bidegree) -> DMatrix<f64> {
    let n = b.dim();
    let g = FiberMap::<f64>::bianchi(b).map(|m| m.into_matrix()).unwrap_or_else(|_| DMatrix::zeros(0, n));
    let gv = FiberMap::<f64>::bianchi_v(b).map(|m| m.into_matrix()).unwrap_or_else(|_| DMatrix::zeros(0, n));
    let mut stacked = DMatrix::<f64>::zeros(g.nrows() + gv.nrows(), n);
    stacked.rows_mut(0, g.nrows()).copy_from(&g);
    stacked.rows_mut(g.nrows(), gv.nrows()).copy_from(&gv);
    crate::linalg::null_space_projector(&stacked, DIAGONAL_RANK_TOL)
}

/// `P_𝒢(ξ ∧ ψ)` for `ψ ∈ 𝒢^{k,m}` with `k < m`, via `ξ∧ψ − 𝔊(ξ_V∧ψ)/α(m,k)`.
pub fn bianchi_wedge<T: Scalar>(xi: &[T], psi: &DoubleForm<T>) -> Result<DoubleForm<T>, AlgebraError> {
    let b = psi.bidegree();
    if b.k() >= b.m() {
        return Err(AlgebraError::FormulaNotApplicable { formula: "bianchi_wedge", bidegree: b });
    }
    let first = sum_exterior(b, xi, Slot::Form)?.apply(psi)?;
    if b.m() == b.d() {
        // ξ_V ∧ ψ vanishes in top vector degree
        return Ok(first);
    }
    let wedge_vec = sum_exterior(b, xi, Slot::Vector)?;
    let g = FiberMap::<T>::bianchi(wedge_vec.target())?;
    let second = g.compose(&wedge_vec)?.apply(psi)?;
    first.sub(&second.scale(T::from_subset(&(1.0 / alpha(b.m(), b.k())))))
}

/// `P_𝒢 i_{ξ♯}ψ` for `ψ ∈ 𝒢^{k,m}` with `k > m`, via `i_{ξ♯}ψ − 𝔊_V i^V_{ξ♯}ψ/α(k,m)`.
pub fn bianchi_interior<T: Scalar>(
    xi_sharp: &[T],
    psi: &DoubleForm<T>,
) -> Result<DoubleForm<T>, AlgebraError> {
    let b = psi.bidegree();
    if b.k() <= b.m() {
        return Err(AlgebraError::FormulaNotApplicable { formula: "bianchi_interior", bidegree: b });
    }
    let first = FiberMap::<T>::interior(b, xi_sharp, Slot::Form)?.apply(psi)?;
    if b.m() == 0 {
        return Ok(first);
    }
    let int_vec = FiberMap::<T>::interior(b, xi_sharp, Slot::Vector)?;
    let gv = FiberMap::<T>::bianchi_v(int_vec.target())?;
    let second = gv.compose(&int_vec)?.apply(psi)?;
    first.sub(&second.scale(T::from_subset(&(1.0 / alpha(b.k(), b.m())))))
}

/// `Σ_a ξ_a dx^a ∧` on one factor.
pub(crate) fn sum_exterior<T: Scalar>(b: Bidegree, xi: &[T], slot: Slot) -> Result<FiberMap<T>, AlgebraError> {
    if xi.len() != b.d() {
        return Err(AlgebraError::VectorLength { expected: b.d(), got: xi.len() });
    }
    let mut acc: Option<FiberMap<T>> = None;
    for (a, &c) in xi.iter().enumerate() {
        let term = FiberMap::<T>::exterior(b, a, slot)?.scale(c);
        acc = Some(match acc {
            None => term,
            Some(s) => s.add(&term)?,
        });
    }
    Ok(acc.expect("d >= 1"))
}
