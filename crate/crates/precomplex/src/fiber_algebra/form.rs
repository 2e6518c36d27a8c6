use nalgebra::DVector;

use super::basis::{Bidegree, MultiIndex};
use super::metric::{compound, MetricAtPoint};
use super::{AlgebraError, Scalar};

/// Coefficients of a `(k, m)` double covector in the coordinate basis `dx^I ⊗ dx^J`.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleForm<T: Scalar> {
    bidegree: Bidegree,
    coeffs: DVector<T>,
}

impl<T: Scalar> DoubleForm<T> {
    pub fn zeros(bidegree: Bidegree) -> Self {
        DoubleForm { bidegree, coeffs: DVector::zeros(bidegree.dim()) }
    }

    pub fn new(bidegree: Bidegree, coeffs: DVector<T>) -> Result<Self, AlgebraError> {
        if coeffs.len() != bidegree.dim() {
            return Err(AlgebraError::CoefficientLength { expected: bidegree.dim(), got: coeffs.len() });
        }
        Ok(DoubleForm { bidegree, coeffs })
    }

    pub fn from_fn(bidegree: Bidegree, mut f: impl FnMut(usize) -> T) -> Self {
        DoubleForm { bidegree, coeffs: DVector::from_fn(bidegree.dim(), |i, _| f(i)) }
    }

    /// The basis element `dx^I ⊗ dx^J`.
    pub fn basis_element(bidegree: Bidegree, form: &[usize], vector: &[usize]) -> Result<Self, AlgebraError> {
        let basis = bidegree.basis();
        let pos = basis
            .position(MultiIndex::from_indices(form), MultiIndex::from_indices(vector))
            .ok_or(AlgebraError::NotABasisElement)?;
        let mut out = Self::zeros(bidegree);
        out.coeffs[pos] = T::one();
        Ok(out)
    }

    /// A `(1,0)` covector from its coordinate components.
    pub fn covector(components: &[T]) -> Result<Self, AlgebraError> {
        let b = Bidegree::new(components.len(), 1, 0)?;
        Self::new(b, DVector::from_column_slice(components))
    }

    /// The scalar `c` as a `(0,0)` form.
    pub fn scalar(d: usize, c: T) -> Result<Self, AlgebraError> {
        Self::new(Bidegree::new(d, 0, 0)?, DVector::from_element(1, c))
    }

    /// The metric tensor as a symmetric `(1,1)` form.
    pub fn metric(metric: &MetricAtPoint) -> Self {
        let d = metric.dim();
        let b = Bidegree::new(d, 1, 1).expect("d validated by metric");
        Self::from_fn(b, |p| T::from_subset(&metric.g()[(p / d, p % d)]))
    }

    pub fn bidegree(&self) -> Bidegree {
        self.bidegree
    }

    pub fn coeffs(&self) -> &DVector<T> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<T> {
        self.coeffs
    }

    pub fn coefficient(&self, form: &[usize], vector: &[usize]) -> T {
        self.bidegree
            .basis()
            .position(MultiIndex::from_indices(form), MultiIndex::from_indices(vector))
            .map_or(T::zero(), |p| self.coeffs[p])
    }

    pub fn scale(&self, c: T) -> Self {
        DoubleForm { bidegree: self.bidegree, coeffs: &self.coeffs * c }
    }

    pub fn add(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_slot(other)?;
        Ok(DoubleForm { bidegree: self.bidegree, coeffs: &self.coeffs + &other.coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.same_slot(other)?;
        Ok(DoubleForm { bidegree: self.bidegree, coeffs: &self.coeffs - &other.coeffs })
    }

    fn same_slot(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.bidegree != other.bidegree {
            return Err(AlgebraError::BidegreeMismatch(self.bidegree, other.bidegree));
        }
        Ok(())
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> T::RealField {
        self.coeffs.camax()
    }

    /// Pointwise inner product `(ψ, η)_g`, conjugate-linear in the first slot.
    pub fn inner(&self, other: &Self, metric: &MetricAtPoint) -> Result<T, AlgebraError> {
        self.same_slot(other)?;
        let gram = fiber_gram::<T>(self.bidegree, metric);
        Ok(self.coeffs.dotc(&(gram * &other.coeffs)))
    }
}

/// Gram matrix of the coordinate basis under the fiber metric,
/// `Λ^k(g⁻¹) ⊗ Λ^m(g⁻¹)`.
pub fn fiber_gram<T: Scalar>(bidegree: Bidegree, metric: &MetricAtPoint) -> nalgebra::DMatrix<T> {
    let form = compound(metric.g_inv(), bidegree.k());
    let vector = compound(metric.g_inv(), bidegree.m());
    form.kronecker(&vector).map(|x| T::from_subset(&x))
}
