//! Dense rank-revealing helpers shared by the modules.

use nalgebra::{ComplexField, DMatrix, DVector};

/// Singular values in decreasing order.
pub fn singular_values<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Thin SVD with singular triplets sorted by decreasing singular value.
pub struct SortedSvd<T: ComplexField<RealField = f64>> {
    pub u: DMatrix<T>,
    pub s: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: DMatrix<T>,
}

pub fn sorted_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> SortedSvd<T> {
    let (r, c) = a.shape();
    let k = r.min(c);
    if k == 0 {
        return SortedSvd { u: DMatrix::zeros(r, 0), s: Vec::new(), v: DMatrix::zeros(c, 0) };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(r, k, |i, j| u[(i, order[j])].clone());
    let v_sorted = DMatrix::from_fn(c, k, |i, j| vt[(order[j], i)].clone().conjugate());
    SortedSvd { u: u_sorted, s, v: v_sorted }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(s: &[f64], rel_tol: f64) -> usize {
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().take_while(|&&x| x > rel_tol * top).count()
}

/// Orthogonal projector onto `ker a`.
pub fn null_space_projector<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rel_tol: f64) -> DMatrix<T> {
    let n = a.ncols();
    let mut p = DMatrix::<T>::identity(n, n);
    if a.nrows() == 0 {
        return p;
    }
    let svd = sorted_svd(a);
    let r = numerical_rank(&svd.s, rel_tol);
    let vr = svd.v.columns(0, r);
    p -= &vr * vr.adjoint();
    p
}

/// Orthonormal basis of `ker a` as columns, from a full set of right singular vectors.
pub fn null_space_basis<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rel_tol: f64) -> DMatrix<T> {
    let top = singular_values(a).first().copied().unwrap_or(0.0);
    null_space_basis_abs(a, rel_tol * top)
}

/// Kernel basis keeping right singular vectors with `σ ≤ abs_tol`.
pub fn null_space_basis_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, abs_tol: f64) -> DMatrix<T> {
    let (r, n) = a.shape();
    if r == 0 {
        return DMatrix::identity(n, n);
    }
    let padded;
    let square = if r < n {
        padded = a.clone().resize_vertically(n, T::zero());
        &padded
    } else {
        a
    };
    let svd = sorted_svd(square);
    let rank = svd.s.iter().take_while(|&&x| x > abs_tol).count();
    svd.v.columns(rank, n - rank).into_owned()
}

/// Orthonormal basis of the range of an orthogonal projector (eigenvalues near 0 or 1).
pub fn projector_range<T: ComplexField<RealField = f64>>(p: &DMatrix<T>) -> DMatrix<T> {
    let svd = sorted_svd(p);
    let r = svd.s.iter().take_while(|&&x| x > 0.5).count();
    svd.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the column space, keeping singular values above `rel_tol · σ_max`.
pub fn range_basis<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rel_tol: f64) -> DMatrix<T> {
    let svd = sorted_svd(a);
    let r = numerical_rank(&svd.s, rel_tol);
    svd.u.columns(0, r).into_owned()
}

/// Largest entry modulus, zero for empty matrices.
pub fn max_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().fold(0.0, |acc, x| acc.max(x.clone().modulus()))
}

/// Spectral norm (largest singular value).
pub fn spectral_norm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn vec_norm<T: ComplexField<RealField = f64>>(v: &DVector<T>) -> f64 {
    v.norm()
}

/// Stack matrices with equal column counts vertically.
pub fn vstack<T: ComplexField>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.rows_mut(r0, b.nrows()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Place matrices side by side.
pub fn hstack<T: ComplexField>(blocks: &[&DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::<T>::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.columns_mut(c0, b.ncols()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_projector_of_rank_one() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let p = null_space_projector(&a, 1e-10);
        assert!((&a * &p).amax() < 1e-12);
        assert!((&p * &p - &p).amax() < 1e-12);
        assert_eq!(null_space_basis(&a, 1e-10).ncols(), 2);
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let a = DMatrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let svd = sorted_svd(&a);
        let rec = &svd.u * DMatrix::from_diagonal(&DVector::from_vec(svd.s.clone())) * svd.v.transpose();
        assert!((rec - a).amax() < 1e-12);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
    }
}
