use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::corrected::CorrectedChain;
use super::projector::{from_weighted, mass_inner, mass_norm, to_weighted, Spectrum};
use super::EngineError;

/// Integer dimension with a gap certificate, or an interval when the gap is too small.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    Exact { value: usize },
    Interval { low: usize, high: usize },
}

impl Dimension {
    pub fn exact(&self) -> Option<usize> {
        match self {
            Dimension::Exact { value } => Some(*value),
            Dimension::Interval { .. } => None,
        }
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dimension::Exact { value } => write!(f, "{value}"),
            Dimension::Interval { low, high } => write!(f, "[{low}, {high}]"),
        }
    }
}

/// `ℋ^k = ker 𝒜_k ∩ ker 𝒜_{k−1}^†` with an M-orthonormal basis.
#[derive(Clone, Debug)]
pub struct HarmonicSpace {
    pub level: usize,
    pub dimension: Dimension,
    /// Dimension from the stacked kernel `[𝒜_k; 𝒜_{k−1}^†]`.
    pub stacked_dim: usize,
    /// Dimension from `ker 𝒜_k ∩ (range 𝒜_{k−1})^⊥`.
    pub complement_dim: usize,
    /// Ratio of the smallest kept to the largest discarded singular value of the stacked operator.
    pub gap: f64,
    /// Smallest singular values of the stacked operator, ascending, relative to the largest.
    pub spectrum_head: Vec<f64>,
    /// M-orthonormal basis as columns, original coordinates.
    pub basis: DMatrix<f64>,
    /// Thin SVD of the stacked weighted operator, reused by the BVP solver.
    pub(crate) stacked: Spectrum,
}

impl HarmonicSpace {
    pub fn routes_agree(&self) -> bool {
        self.stacked_dim == self.complement_dim
    }

    /// Coefficients `⟨h_i, ψ⟩_M` of the harmonic projection.
    pub fn coefficients(&self, psi: &DVector<f64>, mass: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.basis.ncols(), self.basis.column_iter().map(|h| mass_inner(&h.into_owned(), psi, mass)))
    }

    pub fn project(&self, psi: &DVector<f64>, mass: &[f64]) -> DVector<f64> {
        &self.basis * self.coefficients(psi, mass)
    }
}

/// Relative threshold below which a singular value of the stacked operator counts as zero.
fn zero_threshold(tau: f64) -> f64 {
    tau
}

fn stacked_weighted(chain: &CorrectedChain, k: usize) -> DMatrix<f64> {
    let n = chain.mass(k).len();
    let mut blocks = Vec::new();
    if k < chain.corrected.len() {
        blocks.push(chain.weighted(k));
    }
    if k > 0 {
        blocks.push(chain.weighted(k - 1).transpose());
    }
    if blocks.is_empty() {
        return DMatrix::zeros(0, n);
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    crate::linalg::vstack(&refs)
}

fn compute(chain: &CorrectedChain, k: usize) -> HarmonicSpace {
    let n = chain.mass(k).len();
    let tau = chain.options.tau;
    let stacked = stacked_weighted(chain, k);
    // complete right basis so that the kernel is available when the stack is wide
    let spec = Spectrum::compute(&stacked, true);
    let top = spec.max();
    let thr = zero_threshold(tau) * top;
    // singular values of all n right vectors, padding with zeros
    let mut sv: Vec<f64> = spec.s.clone();
    sv.resize(n, 0.0);
    let rank = sv.iter().filter(|&&s| s > thr).count();
    let stacked_dim = n - rank;
    let floor = f64::EPSILON * (n as f64) * top;
    let gap = if rank == 0 || top == 0.0 {
        f64::MAX
    } else {
        let smallest_kept = sv[rank - 1];
        let largest_zero = if rank < n { sv[rank] } else { 0.0 };
        smallest_kept / largest_zero.max(floor).max(f64::MIN_POSITIVE)
    };
    let dimension = if gap >= chain.options.harmonic_gap {
        Dimension::Exact { value: stacked_dim }
    } else {
        let low = n - sv.iter().filter(|&&s| s > thr * 1e-3).count();
        let high = n - sv.iter().filter(|&&s| s > thr * 1e3).count();
        Dimension::Interval { low, high }
    };
    let kernel_w = spec.v.columns(rank, stacked_dim).into_owned();
    let mut basis = kernel_w.clone();
    for mut col in basis.column_iter_mut() {
        let c = from_weighted(&col.clone_owned(), chain.mass(k));
        col.copy_from(&c);
    }
    let head: Vec<f64> = sv.iter().rev().take(stacked_dim + 6).map(|s| if top > 0.0 { s / top } else { 0.0 }).collect();

    let complement_dim = complement_route(chain, k, tau);
    HarmonicSpace { level: k, dimension, stacked_dim, complement_dim, gap, spectrum_head: head, basis, stacked: spec }
}

/// `dim ker 𝒜_k − rank 𝒜_{k−1}` after explicitly removing the range from the kernel.
fn complement_route(chain: &CorrectedChain, k: usize, tau: f64) -> usize {
    let n = chain.mass(k).len();
    let kernel = if k < chain.corrected.len() {
        let spec = Spectrum::compute(&chain.weighted(k), true);
        let r = spec.rank(tau);
        spec.v.columns(r, n - r).into_owned()
    } else {
        DMatrix::identity(n, n)
    };
    if k == 0 || kernel.ncols() == 0 {
        return kernel.ncols();
    }
    let prev = &chain.spectra[k - 1];
    let r = prev.rank(tau);
    let range = prev.u.columns(0, r);
    let rest = &kernel - range * (range.transpose() * &kernel);
    let s = crate::linalg::singular_values(&rest);
    s.iter().filter(|&&x| x > 0.5).count()
}

/// Harmonic space of level `k`, computed once and cached on the chain.
pub fn harmonic_space(chain: &CorrectedChain, k: usize) -> Result<&HarmonicSpace, EngineError> {
    if k >= chain.len() {
        return Err(EngineError::Level { level: k, levels: chain.len() });
    }
    Ok(chain.harmonic[k].get_or_init(|| compute(chain, k)))
}

/// Dimensions of all harmonic spaces.
pub fn cohomology_dims(chain: &CorrectedChain) -> Result<Vec<Dimension>, EngineError> {
    (0..chain.len()).map(|k| harmonic_space(chain, k).map(|h| h.dimension)).collect()
}

/// Three-way M-orthogonal split of a field at level `k`.
#[derive(Clone, Debug)]
pub struct HodgeParts {
    /// `Π_{k−1}ψ ∈ range 𝒜_{k−1}`.
    pub exact: DVector<f64>,
    pub harmonic: DVector<f64>,
    /// Component in `range 𝒜_k^†`.
    pub coexact: DVector<f64>,
    pub report: HodgeReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HodgeReport {
    pub level: usize,
    pub harmonic_dim: Dimension,
    /// Largest `|⟨a,b⟩_M| / ‖ψ‖²_M` over the three pairs.
    pub orthogonality_defect: f64,
    /// `‖ψ − exact − harmonic − coexact‖_M / ‖ψ‖_M`.
    pub reconstruction_error: f64,
    /// Relative residual of the preimage solve `𝒜_k^† y = coexact`.
    pub coexact_preimage_residual: f64,
    pub flagged: bool,
}

/// Tolerance for the preimage solve of the co-exact part.
pub const PREIMAGE_TOL: f64 = 1e-8;

pub fn hodge_decompose(chain: &CorrectedChain, k: usize, psi: &DVector<f64>) -> Result<HodgeParts, EngineError> {
    let h = harmonic_space(chain, k)?;
    let m = chain.mass(k);
    if psi.len() != m.len() {
        return Err(EngineError::FieldLength { level: k, expected: m.len(), got: psi.len() });
    }
    let tau = chain.options.tau;
    let exact = if k > 0 { &chain.projectors[k - 1].projector * psi } else { DVector::zeros(psi.len()) };
    let harmonic = h.project(psi, m);
    let (coexact, preimage_residual) = if k < chain.corrected.len() {
        let spec = &chain.spectra[k];
        let r = spec.rank(tau);
        let vr = spec.v.columns(0, r);
        let pw = to_weighted(psi, m);
        let cw = vr * (vr.transpose() * &pw);
        // preimage y with 𝒜_k^† y = coexact, solved through the weighted transpose
        let a_t = chain.weighted(k).transpose();
        let ur = spec.u.columns(0, r);
        let mut coeff = vr.transpose() * &cw;
        for i in 0..r {
            coeff[i] /= spec.s[i];
        }
        let y = ur * coeff;
        let res = (&a_t * y - &cw).norm() / cw.norm().max(f64::MIN_POSITIVE);
        (from_weighted(&cw, m), if cw.norm() == 0.0 { 0.0 } else { res })
    } else {
        (DVector::zeros(psi.len()), 0.0)
    };
    let norm2 = mass_inner(psi, psi, m).max(f64::MIN_POSITIVE);
    let ortho = [
        mass_inner(&exact, &harmonic, m),
        mass_inner(&exact, &coexact, m),
        mass_inner(&harmonic, &coexact, m),
    ]
    .iter()
    .fold(0.0f64, |a, v| a.max(v.abs() / norm2));
    let rest = psi - &exact - &harmonic - &coexact;
    let recon = mass_norm(&rest, m) / norm2.sqrt();
    let report = HodgeReport {
        level: k,
        harmonic_dim: h.dimension,
        orthogonality_defect: ortho,
        reconstruction_error: recon,
        coexact_preimage_residual: preimage_residual,
        flagged: preimage_residual > PREIMAGE_TOL,
    };
    Ok(HodgeParts { exact, harmonic, coexact, report })
}
