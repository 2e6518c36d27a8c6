//! Corrected complexes from discretized pre-complexes.
//!
//! Every computation is dense and runs in mass-orthonormal coordinates
//! `x̃ = M^{1/2}x`, where M-adjoints become transposes. Range projectors come
//! from the SVD of each corrected operator with a relative rank tolerance.

mod bvp;
mod chain;
mod corrected;
mod harmonic;
mod persist;
mod projector;

use thiserror::Error;

pub use bvp::{
    formal_adjoint, solve_bvp, BvpData, BvpOptions, BvpResiduals, BvpSolution, IntegrabilityCondition,
    IntegrabilityResiduals, DEFAULT_INTEGRABILITY_TOL,
};
pub use chain::{build_chain, chain_levels, ChainKind, ChainSpec};
pub use corrected::{correct_chain, ChainOptions, CorrectedChain, LevelReport, DEFAULT_HARMONIC_GAP};
pub use harmonic::{cohomology_dims, harmonic_space, hodge_decompose, Dimension, HarmonicSpace, HodgeParts, HodgeReport, PREIMAGE_TOL};
pub use persist::{load_chain, ChainManifest, LevelFiles, StoredChain, MANIFEST_FILE, MANIFEST_SCHEMA};
pub use projector::{
    mass_inner, mass_norm, range_projector, spectral_norm_estimate, weighted, RangeProjector, RankSummary, Spectrum,
    DEFAULT_TAU, RANK_GAP_GUARD,
};

use crate::discrete_geometry::GeometryError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mass matrix of level {level} is not positive definite")]
    MassNotPositive { level: usize },
    #[error("operator is {rows}x{cols} but the masses have sizes {src} (source) and {tgt} (target)")]
    Shape { rows: usize, cols: usize, src: usize, tgt: usize },
    #[error("level {level} does not exist in a chain with {levels} spaces")]
    Level { level: usize, levels: usize },
    #[error("field for level {level} has length {got}, expected {expected}")]
    FieldLength { level: usize, expected: usize, got: usize },
    #[error("operator of level {level} carries no boundary pairing")]
    MissingPairing { level: usize },
    #[error("integrability {condition} violated: residual {residual:.3e} exceeds {tolerance:.1e}")]
    Integrability { condition: IntegrabilityCondition, residual: f64, tolerance: f64 },
    #[error("{0}")]
    Chain(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
}
