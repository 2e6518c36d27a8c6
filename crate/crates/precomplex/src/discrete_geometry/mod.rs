//! Structured-grid discretization of double forms on boxes and an annulus.
//!
//! Fields are stored in coordinate components on a staggered grid: a component
//! `dx^I ⊗ dx^J` sits at half-offsets along every axis that appears in `I` or
//! `J`, once per appearance. With a diagonal metric the Bianchi projector acts
//! only within a class of equal offsets, so restricted spaces are exact subspaces
//! and first-order operators compose into exact discrete complexes on flat charts.

mod assemble;
mod domain;
mod export;
mod greens;
mod grid;
mod layout;
mod stencil;

use thiserror::Error;

pub use assemble::{assemble, twisted_curvature, DiscreteOperator, GreenPairing, OperatorKind};
pub use domain::{
    build_domain, ChartKind, ConnectionData, Domain, DomainSpec, Face, Grid, MetricKind, Twist, ANNULUS_INNER,
    ANNULUS_OUTER, MIN_RESOLUTION, TWIST_RANK,
};
pub use export::{export_operators, read_matrix_market, write_matrix_market};
pub use greens::{greens_residual, smooth_field, GreensReport, GREENS_ENSEMBLE};
pub use grid::{Axis, Side};
pub use layout::{diagonal, lift_index, Block, Component, FieldRestriction, FieldSpace, Layout, Location};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("resolution n = {0} is below the minimum of 8 cells per axis")]
    Resolution(usize),
    #[error("dimension {0} is not supported by this chart")]
    Dimension(usize),
    #[error("metric `{0}` is not available on the {1} chart")]
    MetricChart(&'static str, &'static str),
    #[error("metric is not positive definite at {point:?}: diagonal {entries:?}")]
    NotPositive { point: Vec<f64>, entries: Vec<f64> },
    #[error("cannot evaluate expression `{expr}`: {message}")]
    Expression { expr: String, message: String },
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("diagonal_metric needs {expected} entries, got {got}")]
    DiagonalLength { expected: usize, got: usize },
    #[error("bidegree ({k},{m}) is out of range in dimension {d}")]
    Bidegree { d: usize, k: usize, m: usize },
    #[error("operator {op} is not defined on {space}")]
    Unsupported { op: &'static str, space: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}
