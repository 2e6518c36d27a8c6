//! Pointwise algebra of double covectors `Λ^k ⊗ Λ^m` over `ℝ^d`, `d ≤ 4`.
//!
//! Coefficients live in the coordinate basis `dx^I ⊗ dx^J`. The Bianchi sums,
//! exterior and interior products are metric independent integer matrices;
//! the trace, `g∧`, Hodge stars and the fiber inner product take a
//! [`MetricAtPoint`].

mod basis;
mod form;
pub mod identities;
mod maps;
mod metric;
mod projection;

use thiserror::Error;

pub use crate::Scalar;
pub use basis::{basis_enumerate, binomial, combinations, Basis, Bidegree, MultiIndex, MAX_DIM};
pub use form::{fiber_gram, DoubleForm};
pub use maps::{FiberMap, Slot};
pub(crate) use maps::{ext as ext_index, int as int_index};
pub use metric::{compound, MetricAtPoint};
pub use projection::{alpha, bianchi_interior, bianchi_projector, bianchi_wedge, DIAGONAL_RANK_TOL};

#[allow(unused_imports)]
pub(crate) use projection::{real_projector, sl2_projector, sum_exterior};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("ambient dimension {0} unsupported (expected 1..=4)")]
    UnsupportedDimension(usize),
    #[error("bidegree ({k},{m}) invalid for d={d}")]
    InvalidBidegree { d: usize, k: usize, m: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { expected: usize, got: usize },
    #[error("vector has {got} components, expected {expected}")]
    VectorLength { expected: usize, got: usize },
    #[error("bidegree mismatch: {0} vs {1}")]
    BidegreeMismatch(Bidegree, Bidegree),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degree overflow from {0}")]
    DegreeOverflow(Bidegree),
    #[error("degree underflow from {0}")]
    DegreeUnderflow(Bidegree),
    #[error("Bianchi sum leaves the valid range from {0}")]
    BianchiDegree(Bidegree),
    #[error("axis {axis} out of range for d={d}")]
    AxisOutOfRange { axis: usize, d: usize },
    #[error("not a basis element of the requested slot")]
    NotABasisElement,
    #[error("matrix {rows}x{cols} does not map {from} to {to}")]
    MapShape { rows: usize, cols: usize, from: Bidegree, to: Bidegree },
    #[error("metric is {0}x{1}, expected square")]
    MetricShape(usize, usize),
    #[error("metric asymmetric by {0:e}")]
    MetricNotSymmetric(f64),
    #[error("metric is not positive definite")]
    MetricNotPositive,
    #[error("{formula} does not apply to {bidegree}")]
    FormulaNotApplicable { formula: &'static str, bidegree: Bidegree },
}

/// Graded wedge product `(k,m) × (ℓ,n) → (k+ℓ, m+n)`.
pub fn wedge<T: Scalar>(psi: &DoubleForm<T>, eta: &DoubleForm<T>) -> Result<DoubleForm<T>, AlgebraError> {
    FiberMap::wedge_left(psi, eta.bidegree())?.apply(eta)
}

/// `ψ ↦ ψ^T`.
pub fn involution<T: Scalar>(psi: &DoubleForm<T>) -> DoubleForm<T> {
    FiberMap::involution(psi.bidegree())
        .apply(psi)
        .expect("involution matches its own source")
}

/// `i_X ψ` (form slot) or `i_X^V ψ` (vector slot) with `X` in coordinate components.
pub fn interior_product<T: Scalar>(psi: &DoubleForm<T>, x: &[T], slot: Slot) -> Result<DoubleForm<T>, AlgebraError> {
    FiberMap::interior(psi.bidegree(), x, slot)?.apply(psi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BianchiVariant {
    /// `𝔊`: moves a vector index into the form factor.
    Raise,
    /// `𝔊_V`: moves a form index into the vector factor.
    Lower,
}

pub fn bianchi_sum<T: Scalar>(psi: &DoubleForm<T>, variant: BianchiVariant) -> Result<DoubleForm<T>, AlgebraError> {
    let map = match variant {
        BianchiVariant::Raise => FiberMap::bianchi(psi.bidegree())?,
        BianchiVariant::Lower => FiberMap::bianchi_v(psi.bidegree())?,
    };
    map.apply(psi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MetricOp {
    Trace,
    MetricWedge,
    Hodge,
    HodgeV,
}

pub fn metric_op<T: Scalar>(psi: &DoubleForm<T>, which: MetricOp, metric: &MetricAtPoint) -> Result<DoubleForm<T>, AlgebraError> {
    let b = psi.bidegree();
    let map = match which {
        MetricOp::Trace => FiberMap::trace(b, metric)?,
        MetricOp::MetricWedge => FiberMap::metric_wedge(b, metric)?,
        MetricOp::Hodge => FiberMap::hodge(b, metric)?,
        MetricOp::HodgeV => FiberMap::hodge_v(b, metric)?,
    };
    map.apply(psi)
}

/// Orthogonal projection onto the Bianchi forms of the same bidegree.
pub fn project_bianchi<T: Scalar>(psi: &DoubleForm<T>) -> DoubleForm<T> {
    bianchi_projector::<T>(psi.bidegree())
        .apply(psi)
        .expect("projector matches its own source")
}
