//! Principal symbols of double-form operators and Lopatinskii–Shapiro tests.
//!
//! Symbols act on orthonormal-frame coefficients at a metric point. A derivative
//! is replaced by `ζ`, so interior symbols are evaluated at `ζ = ıξ` and boundary
//! symbols at `ζ = ıξ′ + λν` with `λ` standing for `∂_s`, `s` the inward distance.

mod decay;
mod report;
mod symbol;

use thiserror::Error;

use crate::fiber_algebra::{AlgebraError, Bidegree};

pub use decay::{
    decaying_space, lopatinskii_injectivity, BoundaryCheck, DecaySummary, DecayingSpace, INJECTIVITY_TOL,
    LEADING_TOL, OBSERVABILITY_TOL, REAL_PART_TOL,
};
pub use report::{
    bianchi_dirac_system, chain_symbol_defect, hessian_system, interior_injectivity, od_ellipticity_report,
    sphere_point, ChainKind, EllipticityVerdict, HessianBoundary, InteriorCheck, ReportOptions, SystemSpec, Verdict,
    Witness,
};
pub use symbol::{build_symbol, BoundarySplit, CotangentPoint, Restriction, SymbolBlock, SymbolFamily, SymbolOp};

#[derive(Debug, Error)]
pub enum SymbolError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("{op} is not defined on {bidegree}")]
    Unsupported { op: &'static str, bidegree: Bidegree },
    #[error("metric of dimension {0} used with forms over dimension {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot stack families with sources {0} and {1}")]
    SourceMismatch(Bidegree, Bidegree),
    #[error("symmetric restriction needs k = m, got {0}")]
    NotSymmetricSlot(Bidegree),
    #[error("no operators to stack")]
    EmptyStack,
    #[error("all stacked operators have order zero")]
    ZeroOrder,
    #[error("tangential covector is parallel to the conormal or lengths differ")]
    DegenerateSplit,
    #[error("leading coefficient of the normal system is singular (σ_min/σ_max = {ratio:e})")]
    SingularLeading { ratio: f64 },
    #[error("chain has no level {0}")]
    NoSuchLevel(usize),
}
