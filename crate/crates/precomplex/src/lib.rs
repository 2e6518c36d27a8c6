//! Double forms, Bianchi symmetries and elliptic pre-complexes.
//!
//! * [`fiber_algebra`]: pointwise graded algebra of double covectors.
//! * [`symbol_check`]: principal symbols and boundary-symbol ellipticity tests.
//! * [`discrete_geometry`]: staggered-grid discretization of domains and operators.
//! * [`precomplex_engine`]: corrected complexes, harmonic spaces and boundary-value solves.

pub mod discrete_geometry;
pub mod fiber_algebra;
pub mod linalg;
pub mod precomplex_engine;
pub mod symbol_check;

use num_complex::Complex;

/// Scalar field of the fiber algebra. Real and complex floating types qualify.
pub trait Scalar: nalgebra::ComplexField + Copy {}

impl<T: nalgebra::ComplexField + Copy> Scalar for T {}

pub type Complex64 = Complex<f64>;

pub type RealForm = fiber_algebra::DoubleForm<f64>;
pub type ComplexForm = fiber_algebra::DoubleForm<Complex64>;
pub type RealFormF32 = fiber_algebra::DoubleForm<f32>;
pub type RealFiberMap = fiber_algebra::FiberMap<f64>;
pub type ComplexFiberMap = fiber_algebra::FiberMap<Complex64>;
