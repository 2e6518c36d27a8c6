use nalgebra::{DMatrix, DVector};

use super::basis::{combinations, Bidegree, MultiIndex};
use super::form::DoubleForm;
use super::metric::{compound, MetricAtPoint};
use super::{AlgebraError, Scalar};

/// Which factor of `Λ^k ⊗ Λ^m` an operation acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Slot {
    Form,
    Vector,
}

/// A linear bundle map between two bidegree slots, as a dense coefficient matrix.
#[derive(Clone, Debug)]
pub struct FiberMap<T: Scalar> {
    source: Bidegree,
    target: Bidegree,
    matrix: DMatrix<T>,
    tag: String,
}

/// `dx^a ∧` on the form factor: `(I, a) -> (I ∪ a, sign)` or nothing.
pub(crate) fn ext(mask: MultiIndex, a: usize) -> Option<(MultiIndex, f64)> {
    if mask.contains(a) {
        return None;
    }
    let sign = if mask.count_below(a) % 2 == 0 { 1.0 } else { -1.0 };
    Some((mask.with(a), sign))
}

/// `i_{∂_a}` on the form factor.
pub(crate) fn int(mask: MultiIndex, a: usize) -> Option<(MultiIndex, f64)> {
    if !mask.contains(a) {
        return None;
    }
    let sign = if mask.count_below(a) % 2 == 0 { 1.0 } else { -1.0 };
    Some((mask.without(a), sign))
}

impl<T: Scalar> FiberMap<T> {
    pub fn new(source: Bidegree, target: Bidegree, matrix: DMatrix<T>, tag: impl Into<String>) -> Result<Self, AlgebraError> {
        if matrix.nrows() != target.dim() || matrix.ncols() != source.dim() {
            return Err(AlgebraError::MapShape {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                from: source,
                to: target,
            });
        }
        Ok(FiberMap { source, target, matrix, tag: tag.into() })
    }

    pub fn source(&self) -> Bidegree {
        self.source
    }
    pub fn target(&self) -> Bidegree {
        self.target
    }
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }
    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }
    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn zero(source: Bidegree, target: Bidegree) -> Self {
        FiberMap { source, target, matrix: DMatrix::zeros(target.dim(), source.dim()), tag: "zero".into() }
    }

    pub fn identity(b: Bidegree) -> Self {
        FiberMap { source: b, target: b, matrix: DMatrix::identity(b.dim(), b.dim()), tag: "id".into() }
    }

    fn from_real(source: Bidegree, target: Bidegree, matrix: DMatrix<f64>, tag: &str) -> Self {
        FiberMap { source, target, matrix: matrix.map(|x| T::from_subset(&x)), tag: tag.into() }
    }

    /// Assemble from a per-basis-element rule returning `(I', J', coefficient)` images.
    fn from_rule(
        source: Bidegree,
        target: Bidegree,
        tag: &str,
        rule: impl Fn(MultiIndex, MultiIndex) -> Vec<(MultiIndex, MultiIndex, f64)>,
    ) -> Self {
        let sb = source.basis();
        let tb = target.basis();
        let mut m = DMatrix::zeros(tb.len(), sb.len());
        for (col, &(i, j)) in sb.pairs().iter().enumerate() {
            for (ti, tj, c) in rule(i, j) {
                if let Some(row) = tb.position(ti, tj) {
                    m[(row, col)] += c;
                }
            }
        }
        Self::from_real(source, target, m, tag)
    }

    pub fn apply(&self, psi: &DoubleForm<T>) -> Result<DoubleForm<T>, AlgebraError> {
        if psi.bidegree() != self.source {
            return Err(AlgebraError::BidegreeMismatch(self.source, psi.bidegree()));
        }
        DoubleForm::new(self.target, &self.matrix * psi.coeffs())
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &FiberMap<T>) -> Result<Self, AlgebraError> {
        if inner.target != self.source {
            return Err(AlgebraError::BidegreeMismatch(self.source, inner.target));
        }
        Ok(FiberMap {
            source: inner.source,
            target: self.target,
            matrix: &self.matrix * &inner.matrix,
            tag: format!("{}∘{}", self.tag, inner.tag),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_shape(other)?;
        Ok(FiberMap { source: self.source, target: self.target, matrix: &self.matrix + &other.matrix, tag: self.tag.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_shape(other)?;
        Ok(FiberMap { source: self.source, target: self.target, matrix: &self.matrix - &other.matrix, tag: self.tag.clone() })
    }

    pub fn scale(&self, c: T) -> Self {
        FiberMap { source: self.source, target: self.target, matrix: &self.matrix * c, tag: self.tag.clone() }
    }

    fn same_shape(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.source != other.source {
            return Err(AlgebraError::BidegreeMismatch(self.source, other.source));
        }
        if self.target != other.target {
            return Err(AlgebraError::BidegreeMismatch(self.target, other.target));
        }
        Ok(())
    }

    /// `ψ ↦ ψ^T`, swapping form and vector multi-indices.
    pub fn involution(b: Bidegree) -> Self {
        Self::from_rule(b, b.transpose(), "transpose", |i, j| vec![(j, i, 1.0)])
    }

    /// `dx^a ∧` acting on one factor.
    pub fn exterior(b: Bidegree, a: usize, slot: Slot) -> Result<Self, AlgebraError> {
        check_axis(b, a)?;
        let target = match slot {
            Slot::Form => b.shifted(1, 0),
            Slot::Vector => b.shifted(0, 1),
        }
        .ok_or(AlgebraError::DegreeOverflow(b))?;
        Ok(Self::from_rule(b, target, "ext", move |i, j| match slot {
            Slot::Form => ext(i, a).map(|(ni, s)| vec![(ni, j, s)]).unwrap_or_default(),
            Slot::Vector => ext(j, a).map(|(nj, s)| vec![(i, nj, s)]).unwrap_or_default(),
        }))
    }

    /// `i_{∂_a}` acting on one factor.
    pub fn coordinate_interior(b: Bidegree, a: usize, slot: Slot) -> Result<Self, AlgebraError> {
        check_axis(b, a)?;
        let target = match slot {
            Slot::Form => b.shifted(-1, 0),
            Slot::Vector => b.shifted(0, -1),
        }
        .ok_or(AlgebraError::DegreeUnderflow(b))?;
        Ok(Self::from_rule(b, target, "int", move |i, j| match slot {
            Slot::Form => int(i, a).map(|(ni, s)| vec![(ni, j, s)]).unwrap_or_default(),
            Slot::Vector => int(j, a).map(|(nj, s)| vec![(i, nj, s)]).unwrap_or_default(),
        }))
    }

    /// Interior product with a tangent vector `X = X^a ∂_a`; the vector slot gives `i_X^V`.
    pub fn interior(b: Bidegree, x: &[T], slot: Slot) -> Result<Self, AlgebraError> {
        if x.len() != b.d() {
            return Err(AlgebraError::VectorLength { expected: b.d(), got: x.len() });
        }
        let mut acc: Option<Self> = None;
        for (a, &xa) in x.iter().enumerate() {
            let term = Self::coordinate_interior(b, a, slot)?.scale(xa);
            acc = Some(match acc {
                None => term,
                Some(s) => s.add(&term)?,
            });
        }
        let mut out = acc.expect("d >= 1");
        out.tag = match slot {
            Slot::Form => "i_X".into(),
            Slot::Vector => "i_X^V".into(),
        };
        Ok(out)
    }

    /// Left multiplication `ψ ↦ η ∧ ψ` by a fixed double form.
    pub fn wedge_left(eta: &DoubleForm<T>, b: Bidegree) -> Result<Self, AlgebraError> {
        let e = eta.bidegree();
        if e.d() != b.d() {
            return Err(AlgebraError::DimensionMismatch(e.d(), b.d()));
        }
        let target = b.shifted(e.k() as isize, e.m() as isize).ok_or(AlgebraError::DegreeOverflow(b))?;
        let sb = b.basis();
        let tb = target.basis();
        let mut m = DMatrix::<T>::zeros(tb.len(), sb.len());
        for (pe, &(ei, ej)) in e.basis().pairs().iter().enumerate() {
            let c = eta.coeffs()[pe];
            if c == T::zero() {
                continue;
            }
            for (col, &(i, j)) in sb.pairs().iter().enumerate() {
                if let (Some(s1), Some(s2)) = (ei.shuffle_sign(i), ej.shuffle_sign(j)) {
                    let row = tb.position(MultiIndex(ei.0 | i.0), MultiIndex(ej.0 | j.0)).expect("in range");
                    m[(row, col)] += c * T::from_subset(&f64::from(s1 * s2));
                }
            }
        }
        Ok(FiberMap { source: b, target, matrix: m, tag: "wedge".into() })
    }

    /// The Bianchi sum `𝔊 = Σ_a dx^a ∧ i^V_{∂_a}`: `(k,m) → (k+1,m−1)`.
    pub fn bianchi(b: Bidegree) -> Result<Self, AlgebraError> {
        let target = b.shifted(1, -1).ok_or(AlgebraError::BianchiDegree(b))?;
        let d = b.d();
        Ok(Self::from_rule(b, target, "G", move |i, j| {
            (0..d)
                .filter_map(|a| {
                    let (nj, s2) = int(j, a)?;
                    let (ni, s1) = ext(i, a)?;
                    Some((ni, nj, s1 * s2))
                })
                .collect()
        }))
    }

    /// `𝔊_V ψ = (𝔊 ψ^T)^T`: `(k,m) → (k−1,m+1)`.
    pub fn bianchi_v(b: Bidegree) -> Result<Self, AlgebraError> {
        let target = b.shifted(-1, 1).ok_or(AlgebraError::BianchiDegree(b))?;
        let d = b.d();
        Ok(Self::from_rule(b, target, "G_V", move |i, j| {
            (0..d)
                .filter_map(|a| {
                    let (ni, s1) = int(i, a)?;
                    let (nj, s2) = ext(j, a)?;
                    Some((ni, nj, s1 * s2))
                })
                .collect()
        }))
    }

    /// Metric trace `tr_g = Σ_{ab} g^{ab} i_{∂_a} i^V_{∂_b}`: `(k,m) → (k−1,m−1)`.
    pub fn trace(b: Bidegree, metric: &MetricAtPoint) -> Result<Self, AlgebraError> {
        check_metric(b, metric)?;
        let target = b.shifted(-1, -1).ok_or(AlgebraError::DegreeUnderflow(b))?;
        let d = b.d();
        let ginv = metric.g_inv().clone();
        Ok(Self::from_rule(b, target, "tr_g", move |i, j| {
            let mut out = Vec::new();
            for a in 0..d {
                for c in 0..d {
                    if let (Some((ni, s1)), Some((nj, s2))) = (int(i, a), int(j, c)) {
                        out.push((ni, nj, ginv[(a, c)] * s1 * s2));
                    }
                }
            }
            out
        }))
    }

    /// `g ∧`: `(k,m) → (k+1,m+1)`.
    pub fn metric_wedge(b: Bidegree, metric: &MetricAtPoint) -> Result<Self, AlgebraError> {
        check_metric(b, metric)?;
        let mut out = Self::wedge_left(&DoubleForm::metric(metric), b)?;
        out.tag = "g∧".into();
        Ok(out)
    }

    /// Hodge star on the form factor: `(k,m) → (d−k,m)`.
    pub fn hodge(b: Bidegree, metric: &MetricAtPoint) -> Result<Self, AlgebraError> {
        check_metric(b, metric)?;
        let d = b.d();
        let (k, m) = (b.k(), b.m());
        let target = Bidegree::new(d, d - k, m)?;
        let l = metric.cholesky();
        let l_inv = l.clone().try_inverse().ok_or(AlgebraError::MetricNotPositive)?;
        // orthonormal-frame star on k-forms
        let src = combinations(d, k);
        let dst = combinations(d, d - k);
        let mut star = DMatrix::<f64>::zeros(dst.len(), src.len());
        for (c, &i) in src.iter().enumerate() {
            let comp = i.complement(d);
            let sign = f64::from(i.shuffle_sign(comp).expect("disjoint"));
            let r = dst.iter().position(|&x| x == comp).expect("complement listed");
            star[(r, c)] = sign;
        }
        let form_part = compound(l, d - k) * star * compound(&l_inv, k);
        let vector_dim = super::basis::binomial(d, m);
        let vector_id = DMatrix::<f64>::identity(vector_dim, vector_dim);
        Ok(Self::from_real(b, target, form_part.kronecker(&vector_id), "⋆_g"))
    }

    /// `⋆_g^V ψ = (⋆_g ψ^T)^T`.
    pub fn hodge_v(b: Bidegree, metric: &MetricAtPoint) -> Result<Self, AlgebraError> {
        let inner = Self::hodge(b.transpose(), metric)?;
        let out = Self::involution(inner.target).compose(&inner)?.compose(&Self::involution(b))?;
        Ok(FiberMap { tag: "⋆_g^V".into(), ..out })
    }

    /// Adjoint with respect to the fiber metric of `metric`.
    pub fn fiber_adjoint(&self, metric: &MetricAtPoint) -> Self {
        let gs = super::form::fiber_gram::<T>(self.source, metric);
        let gt = super::form::fiber_gram::<T>(self.target, metric);
        let gs_inv = gs.try_inverse().expect("fiber gram is positive definite");
        FiberMap {
            source: self.target,
            target: self.source,
            matrix: gs_inv * self.matrix.adjoint() * gt,
            tag: format!("{}*", self.tag),
        }
    }

    /// Apply to a coefficient vector directly.
    pub fn apply_coeffs(&self, v: &DVector<T>) -> DVector<T> {
        &self.matrix * v
    }
}

fn check_axis(b: Bidegree, a: usize) -> Result<(), AlgebraError> {
    if a >= b.d() {
        return Err(AlgebraError::AxisOutOfRange { axis: a, d: b.d() });
    }
    Ok(())
}

fn check_metric(b: Bidegree, metric: &MetricAtPoint) -> Result<(), AlgebraError> {
    if metric.dim() != b.d() {
        return Err(AlgebraError::DimensionMismatch(metric.dim(), b.d()));
    }
    Ok(())
}
