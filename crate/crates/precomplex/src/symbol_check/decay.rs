use nalgebra::DMatrix;
use serde::Serialize;

use super::symbol::{BoundarySplit, SymbolFamily};
use super::SymbolError;
use crate::linalg;
use crate::Complex64;

type C = Complex64;

/// Eigenvalues with `|Re λ| < REAL_PART_TOL · max(1, |λ|)` make the stable split ambiguous.
pub const REAL_PART_TOL: f64 = 1e-7;
/// Singular-value cut, relative to the operator norm, in the invariant-subspace reduction.
pub const OBSERVABILITY_TOL: f64 = 1e-8;
/// Leading coefficient of the normal system must satisfy `σ_min/σ_max` above this.
pub const LEADING_TOL: f64 = 1e-12;

const SIGN_MAX_ITER: usize = 100;
const SIGN_TOL: f64 = 1e-13;

/// Decaying solutions `ψ(s)` of `σ(x, ξ′ + ∂_s ν)ψ = 0` on the half-line `s > 0`.
///
/// Represented by an orthonormal basis of initial states `(ψ, ψ′, …)(0)` spanning an
/// invariant subspace of the first-order system, together with the generator of the
/// flow on that subspace.
#[derive(Clone, Debug)]
pub struct DecayingSpace {
    fiber_dim: usize,
    state_order: usize,
    initial: DMatrix<C>,
    generator: DMatrix<C>,
    normal_dim: usize,
    rates: Vec<C>,
    min_abs_real: f64,
    indeterminate: bool,
    residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecaySummary {
    pub dim: usize,
    pub normal_dim: usize,
    pub indeterminate: bool,
    pub min_abs_real: f64,
    pub residual: f64,
    pub rates: Vec<[f64; 2]>,
}

impl DecayingSpace {
    pub fn dim(&self) -> usize {
        self.initial.ncols()
    }

    /// Dimension of the stable space of the homogenized normal system before the
    /// observability filter.
    pub fn normal_dim(&self) -> usize {
        self.normal_dim
    }

    pub fn is_indeterminate(&self) -> bool {
        self.indeterminate
    }

    pub fn rates(&self) -> &[C] {
        &self.rates
    }

    pub fn min_abs_real(&self) -> f64 {
        self.min_abs_real
    }

    /// Largest relative violation of the original system along the sampled flow.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    /// Number of derivatives carried by a state.
    pub fn state_order(&self) -> usize {
        self.state_order
    }

    pub fn initial_states(&self) -> &DMatrix<C> {
        &self.initial
    }

    pub fn generator(&self) -> &DMatrix<C> {
        &self.generator
    }

    /// `ψ^{(q)}(0)` for every basis solution, as columns in restricted coordinates.
    pub fn derivative_at_zero(&self, q: usize) -> DMatrix<C> {
        let n = self.fiber_dim;
        if q >= self.state_order {
            return DMatrix::zeros(n, self.dim());
        }
        self.initial.rows(q * n, n).into_owned()
    }

    /// `ψ(s)` for every basis solution.
    pub fn evaluate(&self, s: f64) -> DMatrix<C> {
        let flow = (&self.generator * C::new(s, 0.0)).exp();
        self.initial.rows(0, self.fiber_dim) * flow
    }

    pub fn summary(&self) -> DecaySummary {
        DecaySummary {
            dim: self.dim(),
            normal_dim: self.normal_dim,
            indeterminate: self.indeterminate,
            min_abs_real: self.min_abs_real,
            residual: self.residual,
            rates: self.rates.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    fn empty(fiber_dim: usize, state_order: usize, indeterminate: bool) -> Self {
        DecayingSpace {
            fiber_dim,
            state_order,
            initial: DMatrix::zeros(fiber_dim * state_order, 0),
            generator: DMatrix::zeros(0, 0),
            normal_dim: 0,
            rates: Vec::new(),
            min_abs_real: f64::INFINITY,
            indeterminate,
            residual: 0.0,
        }
    }
}

fn poly_mul(a: &[DMatrix<C>], b: &[C]) -> Vec<DMatrix<C>> {
    let (rows, cols) = a[0].shape();
    let mut out = vec![DMatrix::zeros(rows, cols); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `(λ − 1)^p` as coefficients in increasing degree.
fn shift_power(p: usize) -> Vec<C> {
    let mut c = vec![C::new(1.0, 0.0)];
    for _ in 0..p {
        let mut next = vec![C::new(0.0, 0.0); c.len() + 1];
        for (i, &x) in c.iter().enumerate() {
            next[i] -= x;
            next[i + 1] += x;
        }
        c = next;
    }
    c
}

/// Eigenvalues via complex Schur form.
pub(crate) fn eigenvalues(a: &DMatrix<C>) -> Option<Vec<C>> {
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 20_000)?;
    let (_, t) = schur.unpack();
    Some(t.diagonal().iter().copied().collect())
}

/// Matrix sign function by the scaled Newton iteration.
fn matrix_sign(a: &DMatrix<C>) -> Option<DMatrix<C>> {
    let n = a.nrows();
    let mut x = a.clone();
    for _ in 0..SIGN_MAX_ITER {
        let inv = x.clone().try_inverse()?;
        let det = x.clone().determinant().norm();
        let scale = if det.is_finite() && det > 0.0 { det.powf(-1.0 / n as f64) } else { 1.0 };
        let next = (&x * C::new(scale, 0.0) + inv * C::new(1.0 / scale, 0.0)) * C::new(0.5, 0.0);
        let change = linalg::max_abs(&(&next - &x));
        let size = linalg::max_abs(&next).max(1.0);
        x = next;
        if change <= SIGN_TOL * size {
            return Some(x);
        }
    }
    // accept a slowly converging iterate if it squares to the identity
    let defect = linalg::max_abs(&(&x * &x - DMatrix::<C>::identity(n, n)));
    (defect < 1e-8).then_some(x)
}

/// Decaying space of the stacked interior family along `split`.
///
/// The family is turned into a square system of order `2M` through the homogenized
/// normal operator `Ñ(−∂)^* Ñ(∂)`, where rows of order `r < M` are multiplied by
/// `(∂ − 1)^{M−r}`. Within its first-order companion system, the largest invariant
/// subspace on which the original family vanishes is found by an orthogonal staircase
/// reduction; its stable part, split off with the matrix sign function, is the
/// decaying space. The stable dimension of the whole companion is kept as
/// [`DecayingSpace::normal_dim`].
pub fn decaying_space(family: &SymbolFamily, split: &BoundarySplit) -> Result<DecayingSpace, SymbolError> {
    if family.is_empty() {
        return Err(SymbolError::EmptyStack);
    }
    let n = family.fiber_dim();
    let big_m = family.max_order();
    if big_m == 0 {
        return Err(SymbolError::ZeroOrder);
    }
    let coeffs = family.lambda_coefficients(split);
    let rows = family.rows();

    // homogenized coefficients Ñ_0..Ñ_M
    let mut homog = vec![DMatrix::<C>::zeros(rows, n); big_m + 1];
    for (r0, nr, order) in family.block_rows() {
        let own: Vec<DMatrix<C>> = (0..=order).map(|q| coeffs[q].rows(r0, nr).into_owned()).collect();
        let lifted = poly_mul(&own, &shift_power(big_m - order));
        for (q, block) in lifted.into_iter().enumerate().take(big_m + 1) {
            homog[q].rows_mut(r0, nr).copy_from(&block);
        }
    }

    // S_q = Σ_{a+b=q} (−1)^a Ñ_a^* Ñ_b
    let order = 2 * big_m;
    let mut normal = vec![DMatrix::<C>::zeros(n, n); order + 1];
    for a in 0..=big_m {
        let sign = if a % 2 == 0 { 1.0 } else { -1.0 };
        let adj = homog[a].adjoint() * C::new(sign, 0.0);
        for b in 0..=big_m {
            normal[a + b] += &adj * &homog[b];
        }
    }
    let lead_sv = linalg::singular_values(&normal[order]);
    let lead_ratio = match (lead_sv.first(), lead_sv.last()) {
        (Some(&top), Some(&low)) if top > 0.0 => low / top,
        _ => 0.0,
    };
    if lead_sv.len() < n || lead_ratio < LEADING_TOL {
        return Err(SymbolError::SingularLeading { ratio: lead_ratio });
    }
    let lead_inv = normal[order].clone().try_inverse().ok_or(SymbolError::SingularLeading { ratio: lead_ratio })?;

    // companion matrix of ψ^{(2M)} = −S_{2M}^{-1} Σ_{q<2M} S_q ψ^{(q)}
    let big_n = order * n;
    let mut comp = DMatrix::<C>::zeros(big_n, big_n);
    for q in 0..order - 1 {
        comp.view_mut((q * n, (q + 1) * n), (n, n)).fill_with_identity();
    }
    for q in 0..order {
        let block = -(&lead_inv * &normal[q]);
        comp.view_mut(((order - 1) * n, q * n), (n, n)).copy_from(&block);
    }

    let Some(eigs) = eigenvalues(&comp) else {
        return Ok(DecayingSpace::empty(n, order, true));
    };
    let min_abs_real = eigs.iter().map(|z| z.re.abs() / z.norm().max(1.0)).fold(f64::INFINITY, f64::min);
    if min_abs_real < REAL_PART_TOL {
        let mut out = DecayingSpace::empty(n, order, true);
        out.min_abs_real = min_abs_real;
        return Ok(out);
    }

    let normal_dim = eigs.iter().filter(|z| z.re < 0.0).count();

    // largest invariant subspace of the companion inside ker K: the solutions of the
    // original family among those of the normal system
    let mut k_row = DMatrix::<C>::zeros(rows, big_n);
    for (q, c) in coeffs.iter().enumerate() {
        if q < order {
            k_row.columns_mut(q * n, n).copy_from(c);
        }
    }
    let k_scale = linalg::spectral_norm(&k_row).max(1e-300);
    let comp_scale = linalg::spectral_norm(&comp).max(1.0);
    let mut z = linalg::null_space_basis_abs(&k_row, OBSERVABILITY_TOL * k_scale);
    while z.ncols() > 0 {
        let cz = &comp * &z;
        let outside = &cz - &z * (z.adjoint() * &cz);
        let keep = linalg::null_space_basis_abs(&outside, OBSERVABILITY_TOL * comp_scale);
        if keep.ncols() == z.ncols() {
            break;
        }
        z = &z * keep;
    }
    let solutions = z.adjoint() * &comp * &z;

    // stable part of the solution space
    let sol_eigs = eigenvalues(&solutions).unwrap_or_default();
    let sol_min_real = sol_eigs.iter().map(|z| z.re.abs() / z.norm().max(1.0)).fold(f64::INFINITY, f64::min);
    if sol_eigs.len() != solutions.nrows() || sol_min_real < REAL_PART_TOL {
        let mut out = DecayingSpace::empty(n, order, true);
        out.min_abs_real = min_abs_real.min(sol_min_real);
        return Ok(out);
    }
    let dim_sol = solutions.nrows();
    let y = if dim_sol == 0 {
        DMatrix::<C>::zeros(0, 0)
    } else {
        let Some(sign) = matrix_sign(&solutions) else {
            return Ok(DecayingSpace::empty(n, order, true));
        };
        linalg::projector_range(&((DMatrix::<C>::identity(dim_sol, dim_sol) - sign) * C::new(0.5, 0.0)))
    };
    let initial = if dim_sol == 0 { DMatrix::zeros(big_n, 0) } else { &z * &y };
    let generator = if dim_sol == 0 { DMatrix::zeros(0, 0) } else { y.adjoint() * &solutions * &y };
    let rates = eigenvalues(&generator).unwrap_or_default();

    let mut residual: f64 = 0.0;
    if initial.ncols() > 0 {
        for s in [0.0, 0.5, 1.0] {
            let flow = (&generator * C::new(s, 0.0)).exp();
            let states = &initial * flow;
            let r = linalg::spectral_norm(&(&k_row * &states)) / k_scale;
            let drift = linalg::spectral_norm(&(&comp * &states - &states * &generator)) / comp_scale;
            residual = residual.max(r).max(drift);
        }
    }

    Ok(DecayingSpace {
        fiber_dim: n,
        state_order: order,
        initial,
        generator,
        normal_dim,
        rates,
        min_abs_real,
        indeterminate: false,
        residual,
    })
}

/// Outcome of the Lopatinskii–Shapiro test at one boundary covector.
#[derive(Clone, Debug)]
pub struct BoundaryCheck {
    pub injective: bool,
    pub vacuous: bool,
    pub min_singular: f64,
    /// Initial state `(ψ, ψ′, …)(0)` of a decaying solution annihilated by the boundary symbol.
    pub witness: Option<Vec<C>>,
}

/// Injectivity threshold on singular values of symbol matrices.
pub const INJECTIVITY_TOL: f64 = 1e-8;

/// Injectivity of `ψ ↦ Σ_q B_q ψ^{(q)}(0)` on the decaying space.
pub fn lopatinskii_injectivity(boundary: &SymbolFamily, space: &DecayingSpace, split: &BoundarySplit) -> BoundaryCheck {
    let dim = space.dim();
    if dim == 0 {
        return BoundaryCheck { injective: true, vacuous: true, min_singular: f64::INFINITY, witness: None };
    }
    let coeffs = boundary.lambda_coefficients(split);
    let rows = boundary.rows();
    let mut xi = DMatrix::<C>::zeros(rows, dim);
    for (q, c) in coeffs.iter().enumerate() {
        if rows > 0 {
            xi += c * space.derivative_at_zero(q);
        }
    }
    let svd = linalg::sorted_svd(&xi);
    let (min_singular, null) = if rows < dim || svd.s.is_empty() {
        let v = if rows == 0 {
            let mut e = nalgebra::DVector::<C>::zeros(dim);
            e[0] = C::new(1.0, 0.0);
            e
        } else {
            linalg::null_space_basis(&xi, 1e-300).column(0).into_owned()
        };
        (0.0, v)
    } else {
        let last = svd.s.len() - 1;
        (svd.s[last], svd.v.column(last).into_owned())
    };
    let injective = min_singular > INJECTIVITY_TOL;
    let witness = (!injective).then(|| (space.initial_states() * null).iter().copied().collect());
    BoundaryCheck { injective, vacuous: false, min_singular, witness }
}
