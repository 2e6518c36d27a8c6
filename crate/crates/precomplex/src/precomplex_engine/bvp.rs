use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use super::corrected::CorrectedChain;
use super::harmonic::harmonic_space;
use super::projector::{from_weighted, mass_norm, to_weighted};
use super::EngineError;

/// The three solvability conditions of the overdetermined problem
/// `𝒜_kψ = χ`, `𝒜*_{k−1}ψ = ξ`, `B*_{k−1}ψ = B*_{k−1}φ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrabilityCondition {
    /// `𝒜_{k+1}χ = 0` and `χ ⊥ ℋ^{k+1}`.
    ChiInRange,
    /// `ξ − 𝒜*_{k−1}φ` lies in the kernel of `(𝒜*_{k−2}, B*_{k−2})`.
    XiInAdjointKernel,
    /// `⟨ξ,ν⟩ + sign·⟨B*_{k−1}φ, B_{k−1}ν⟩ = 0` for `ν ∈ ℋ^{k−1}`.
    XiOrthogonalToHarmonic,
}

impl IntegrabilityCondition {
    pub fn number(self) -> usize {
        match self {
            IntegrabilityCondition::ChiInRange => 1,
            IntegrabilityCondition::XiInAdjointKernel => 2,
            IntegrabilityCondition::XiOrthogonalToHarmonic => 3,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            IntegrabilityCondition::ChiInRange => "A_{k+1} chi = 0 and chi orthogonal to H^{k+1}",
            IntegrabilityCondition::XiInAdjointKernel => "xi - A*_{k-1} phi in the kernel of (A*_{k-2}, B*_{k-2})",
            IntegrabilityCondition::XiOrthogonalToHarmonic => "<xi, nu> = -<B*_{k-1} phi, B_{k-1} nu> for nu in H^{k-1}",
        }
    }
}

impl std::fmt::Display for IntegrabilityCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "condition {} ({})", self.number(), self.describe())
    }
}

/// Boundary-value data; `None` stands for zero.
#[derive(Clone, Debug, Default)]
pub struct BvpData {
    pub chi: Option<DVector<f64>>,
    pub xi: Option<DVector<f64>>,
    pub phi: Option<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct BvpOptions {
    /// Refusal threshold for the relative integrability residuals.
    pub integrability_tol: f64,
    /// Harmonic part of the returned solution: the harmonic projection of this
    /// vector, zero when absent.
    pub harmonic_seed: Option<DVector<f64>>,
}

pub const DEFAULT_INTEGRABILITY_TOL: f64 = 1e-8;

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { integrability_tol: DEFAULT_INTEGRABILITY_TOL, harmonic_seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityResiduals {
    pub chi_in_range: f64,
    pub xi_in_adjoint_kernel: f64,
    pub xi_orthogonal_to_harmonic: f64,
}

impl IntegrabilityResiduals {
    pub fn get(&self, c: IntegrabilityCondition) -> f64 {
        match c {
            IntegrabilityCondition::ChiInRange => self.chi_in_range,
            IntegrabilityCondition::XiInAdjointKernel => self.xi_in_adjoint_kernel,
            IntegrabilityCondition::XiOrthogonalToHarmonic => self.xi_orthogonal_to_harmonic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvpResiduals {
    /// `‖𝒜_kψ − χ‖_M / ‖χ‖_M`.
    pub range_equation: f64,
    /// Weak adjoint equation `‖𝒜_{k−1}^†ψ − ξ̂‖_M / ‖ξ̂‖_M`.
    pub adjoint_equation: f64,
    /// Strong interior equation with the discrete formal adjoint.
    pub formal_adjoint: f64,
    /// `‖B*_{k−1}(ψ − φ)‖_∂ / ‖B*_{k−1}φ‖_∂`.
    pub boundary: f64,
}

#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub level: usize,
    pub psi: DVector<f64>,
    pub integrability: IntegrabilityResiduals,
    pub residuals: BvpResiduals,
    /// `‖Sψ‖_M`, the harmonic component of the returned solution.
    pub harmonic_norm: f64,
    pub harmonic_dim: usize,
    pub stacked_rank: usize,
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn boundary_norm(v: &DVector<f64>, mass: &CsrMatrix<f64>) -> f64 {
    v.dot(&(mass * v)).max(0.0).sqrt()
}

/// `F_{k−1} = M_{k−1}^{-1}(𝒜_{k−1}ᵀM_k − sign·B_{k−1}ᵀ M_∂ B*_{k−1})`: the formal adjoint
/// for which the discrete Green identity holds exactly.
pub fn formal_adjoint(chain: &CorrectedChain, k: usize) -> Result<nalgebra::DMatrix<f64>, EngineError> {
    if k == 0 || k >= chain.len() {
        return Err(EngineError::Level { level: k, levels: chain.len() });
    }
    let pairing = chain.spec.operators[k - 1].pairing.as_ref().ok_or(EngineError::MissingPairing { level: k - 1 })?;
    let a = &chain.corrected[k - 1];
    let m_prev = chain.mass(k - 1);
    let m_k = chain.mass(k);
    let mut f = a.transpose();
    for (j, mut col) in f.column_iter_mut().enumerate() {
        col.scale_mut(m_k[j]);
    }
    let b = nalgebra_sparse::convert::serial::convert_csr_dense(&pairing.trace);
    let bs = nalgebra_sparse::convert::serial::convert_csr_dense(&pairing.adjoint_trace);
    let mb = nalgebra_sparse::convert::serial::convert_csr_dense(&pairing.boundary_mass);
    f -= (b.transpose() * mb * bs) * pairing.sign;
    for (i, mut row) in f.row_iter_mut().enumerate() {
        row.scale_mut(1.0 / m_prev[i]);
    }
    Ok(f)
}

/// `ξ̂ = ξ + sign·M^{-1}BᵀM_∂B*φ`, the right-hand side of the weak adjoint equation.
fn weak_rhs(chain: &CorrectedChain, k: usize, xi: &DVector<f64>, phi: &DVector<f64>) -> Result<DVector<f64>, EngineError> {
    let pairing = chain.spec.operators[k - 1].pairing.as_ref().ok_or(EngineError::MissingPairing { level: k - 1 })?;
    let bphi = &pairing.adjoint_trace * phi;
    let lifted = pairing.trace.transpose() * (&pairing.boundary_mass * bphi);
    let m = chain.mass(k - 1);
    Ok(DVector::from_iterator(xi.len(), xi.iter().zip(lifted.iter()).zip(m).map(|((x, l), w)| x + pairing.sign * l / w)))
}

fn field(v: &Option<DVector<f64>>, n: usize, level: usize) -> Result<DVector<f64>, EngineError> {
    match v {
        None => Ok(DVector::zeros(n)),
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(EngineError::FieldLength { level, expected: n, got: v.len() }),
    }
}

/// Checks the three conditions in order and solves the stacked weak system
/// `[𝒜_k; 𝒜_{k−1}^†]ψ = (χ, ξ̂)` by least squares in mass-orthonormal
/// coordinates, which returns the solution with zero harmonic part.
pub fn solve_bvp(chain: &CorrectedChain, k: usize, data: &BvpData, options: &BvpOptions) -> Result<BvpSolution, EngineError> {
    if k >= chain.len() {
        return Err(EngineError::Level { level: k, levels: chain.len() });
    }
    let n_k = chain.mass(k).len();
    let has_next = k < chain.corrected.len();
    let has_prev = k > 0;
    let chi = field(&data.chi, if has_next { chain.mass(k + 1).len() } else { 0 }, k + 1)?;
    let (xi, phi) = if has_prev {
        (field(&data.xi, chain.mass(k - 1).len(), k - 1)?, field(&data.phi, n_k, k)?)
    } else {
        (DVector::zeros(0), field(&data.phi, n_k, k)?)
    };
    let xi_hat = if has_prev { weak_rhs(chain, k, &xi, &phi)? } else { DVector::zeros(0) };

    // condition 1
    let mut c1 = 0.0f64;
    if has_next && chi.norm() > 0.0 {
        let m = chain.mass(k + 1);
        let chi_norm = mass_norm(&chi, m);
        if k + 1 < chain.corrected.len() {
            let a = &chain.corrected[k + 1];
            let m_n = chain.mass(k + 2);
            let op_norm = chain.spectra[k + 1].max();
            let img = to_weighted(&(a * &chi), m_n);
            c1 = c1.max(rel(img.norm(), op_norm * to_weighted(&chi, m).norm()));
        }
        let h = harmonic_space(chain, k + 1)?;
        c1 = c1.max(rel(mass_norm(&h.project(&chi, m), m), chi_norm));
    }
    // condition 2
    let mut c2 = 0.0f64;
    if k >= 2 && xi_hat.norm() > 0.0 {
        let m = chain.mass(k - 1);
        let w = to_weighted(&xi_hat, m);
        let a_t = chain.weighted(k - 2).transpose();
        c2 = rel((a_t * &w).norm(), chain.spectra[k - 2].max() * w.norm());
    }
    // condition 3
    let mut c3 = 0.0f64;
    if has_prev && xi_hat.norm() > 0.0 {
        let m = chain.mass(k - 1);
        let h = harmonic_space(chain, k - 1)?;
        c3 = rel(mass_norm(&h.project(&xi_hat, m), m), mass_norm(&xi_hat, m));
    }
    let integrability = IntegrabilityResiduals { chi_in_range: c1, xi_in_adjoint_kernel: c2, xi_orthogonal_to_harmonic: c3 };
    for cond in [
        IntegrabilityCondition::ChiInRange,
        IntegrabilityCondition::XiInAdjointKernel,
        IntegrabilityCondition::XiOrthogonalToHarmonic,
    ] {
        let r = integrability.get(cond);
        if r > options.integrability_tol {
            return Err(EngineError::Integrability { condition: cond, residual: r, tolerance: options.integrability_tol });
        }
    }

    // stacked least squares on the cached SVD
    let h = harmonic_space(chain, k)?;
    let mut rhs_parts: Vec<f64> = Vec::new();
    if has_next {
        rhs_parts.extend(to_weighted(&chi, chain.mass(k + 1)).iter());
    }
    if has_prev {
        rhs_parts.extend(to_weighted(&xi_hat, chain.mass(k - 1)).iter());
    }
    let rhs = DVector::from_vec(rhs_parts);
    let spec = &h.stacked;
    let rank = h.basis.nrows() - h.stacked_dim;
    let ur = spec.u.columns(0, rank);
    let mut coeff = ur.transpose() * &rhs;
    for i in 0..rank {
        coeff[i] /= spec.s[i];
    }
    let psi_w = spec.v.columns(0, rank) * coeff;
    let mut psi = from_weighted(&psi_w, chain.mass(k));
    if let Some(seed) = &options.harmonic_seed {
        if seed.len() != n_k {
            return Err(EngineError::FieldLength { level: k, expected: n_k, got: seed.len() });
        }
        psi += h.project(seed, chain.mass(k));
    }

    let m_k = chain.mass(k);
    let range_equation = if has_next {
        let m = chain.mass(k + 1);
        rel(mass_norm(&(&chain.corrected[k] * &psi - &chi), m), mass_norm(&chi, m))
    } else {
        0.0
    };
    let (adjoint_equation, formal, boundary) = if has_prev {
        let m = chain.mass(k - 1);
        let w = to_weighted(&psi, m_k);
        let weak = from_weighted(&(chain.weighted(k - 1).transpose() * w), m);
        let adj = rel(mass_norm(&(weak - &xi_hat), m), mass_norm(&xi_hat, m));
        let f = formal_adjoint(chain, k)?;
        let formal = rel(mass_norm(&(f * &psi - &xi), m), mass_norm(&xi, m));
        let pairing = chain.spec.operators[k - 1].pairing.as_ref().ok_or(EngineError::MissingPairing { level: k - 1 })?;
        let diff = &pairing.adjoint_trace * (&psi - &phi);
        let bphi = &pairing.adjoint_trace * &phi;
        let bd = rel(boundary_norm(&diff, &pairing.boundary_mass), boundary_norm(&bphi, &pairing.boundary_mass));
        (adj, formal, bd)
    } else {
        (0.0, 0.0, 0.0)
    };
    let harmonic_norm = mass_norm(&h.project(&psi, m_k), m_k);
    Ok(BvpSolution {
        level: k,
        psi,
        integrability,
        residuals: BvpResiduals { range_equation, adjoint_equation, formal_adjoint: formal, boundary },
        harmonic_norm,
        harmonic_dim: h.stacked_dim,
        stacked_rank: rank,
    })
}
