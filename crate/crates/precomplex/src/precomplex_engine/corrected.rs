use std::sync::OnceLock;

use nalgebra::DMatrix;
use nalgebra_sparse::convert::serial::convert_csr_dense;
use serde::{Deserialize, Serialize};

use super::chain::ChainSpec;
use super::harmonic::HarmonicSpace;
use super::projector::{check_mass, projector_from_spectrum, spectral_norm_estimate, weighted, RangeProjector, Spectrum};
use super::EngineError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Relative rank tolerance of the range projectors.
    pub tau: f64,
    /// Singular-value gap required for an integer harmonic dimension.
    pub harmonic_gap: f64,
}

pub const DEFAULT_HARMONIC_GAP: f64 = 1e3;

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions { tau: super::projector::DEFAULT_TAU, harmonic_gap: DEFAULT_HARMONIC_GAP }
    }
}

/// Per-level diagnostics of the correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub source_dim: usize,
    pub target_dim: usize,
    pub order: usize,
    /// `‖G_k‖₂` in mass-orthonormal coordinates.
    pub correction_norm: f64,
    /// `‖G_k‖₂ / ‖A_k‖₂`.
    pub relative_correction: f64,
    /// Max-entry gap between `G_k` built directly and by the recursion.
    pub recursion_defect: f64,
    pub rank: usize,
    pub rank_gap: f64,
    pub rank_ambiguous: bool,
    /// `‖𝒜_{k+1}𝒜_k‖_F / (‖𝒜_{k+1}‖₂‖𝒜_k‖₂)`, absent on the last level.
    pub nilpotency: Option<f64>,
    /// `‖A_{k+1}A_k‖₂ / (‖A_{k+1}‖₂‖A_k‖₂)` before correction.
    pub uncorrected_nilpotency: Option<f64>,
    /// `‖𝒜_{k+1}𝒜_k‖₂ / (τ‖A_{k+1}‖₂‖𝒜_k‖₂)`; at most 10 by construction.
    pub nilpotency_bound_ratio: Option<f64>,
}

/// The corrected complex `𝒜_k = A_k(I − Π_{k−1})`, `𝒜_0 = A_0`.
#[derive(Debug)]
pub struct CorrectedChain {
    pub spec: ChainSpec,
    pub options: ChainOptions,
    /// `A_k` as dense matrices in the original coordinates.
    pub original: Vec<DMatrix<f64>>,
    /// `𝒜_k` in the original coordinates.
    pub corrected: Vec<DMatrix<f64>>,
    /// `G_k = 𝒜_k − A_k`.
    pub corrections: Vec<DMatrix<f64>>,
    pub projectors: Vec<RangeProjector>,
    pub levels: Vec<LevelReport>,
    pub(crate) spectra: Vec<Spectrum>,
    pub(crate) harmonic: Vec<OnceLock<HarmonicSpace>>,
}

impl CorrectedChain {
    pub fn len(&self) -> usize {
        self.spec.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spec.is_empty()
    }

    pub fn mass(&self, k: usize) -> &[f64] {
        &self.spec.masses[k]
    }

    /// `𝒜_k` in mass-orthonormal coordinates.
    pub fn weighted(&self, k: usize) -> DMatrix<f64> {
        weighted(&self.corrected[k], self.mass(k), self.mass(k + 1))
    }

    /// Largest relative nilpotency defect over all consecutive pairs.
    pub fn max_nilpotency(&self) -> f64 {
        self.levels.iter().filter_map(|l| l.nilpotency).fold(0.0, f64::max)
    }

    pub fn max_correction_norm(&self) -> f64 {
        self.levels.iter().map(|l| l.correction_norm).fold(0.0, f64::max)
    }
}

/// Builds the corrected chain level by level.
pub fn correct_chain(spec: ChainSpec, options: ChainOptions) -> Result<CorrectedChain, EngineError> {
    for (k, m) in spec.masses.iter().enumerate() {
        check_mass(m, k)?;
    }
    let n_ops = spec.operators.len();
    let original: Vec<DMatrix<f64>> = spec.operators.iter().map(|o| convert_csr_dense(&o.matrix)).collect();
    let mut corrected: Vec<DMatrix<f64>> = Vec::with_capacity(n_ops);
    let mut corrections = Vec::with_capacity(n_ops);
    let mut projectors: Vec<RangeProjector> = Vec::with_capacity(n_ops);
    let mut spectra = Vec::with_capacity(n_ops);
    let mut recursion = Vec::with_capacity(n_ops);
    for k in 0..n_ops {
        let a = &original[k];
        let (cur, g, defect) = if k == 0 {
            (a.clone(), DMatrix::zeros(a.nrows(), a.ncols()), 0.0)
        } else {
            let pi = &projectors[k - 1].projector;
            let mut cur = a.clone();
            cur -= a * pi;
            let g = &cur - a;
            // G_k = −A_k A_{k−1} P_{k−1} − A_k G_{k−1} P_{k−1}
            let p = &projectors[k - 1].pseudo_inverse;
            let a_prev_p = &original[k - 1] * p;
            let g_prev_p = &corrections[k - 1] * p;
            let rec = -(a * a_prev_p) - a * g_prev_p;
            let defect = crate::linalg::max_abs(&(&rec - &g));
            (cur, g, defect)
        };
        let w = weighted(&cur, &spec.masses[k], &spec.masses[k + 1]);
        let spectrum = Spectrum::compute(&w, false);
        projectors.push(projector_from_spectrum(&spectrum, &spec.masses[k], &spec.masses[k + 1], options.tau));
        spectra.push(spectrum);
        corrected.push(cur);
        corrections.push(g);
        recursion.push(defect);
    }

    let mut levels = Vec::with_capacity(n_ops);
    for k in 0..n_ops {
        let m_s = &spec.masses[k];
        let m_t = &spec.masses[k + 1];
        let a_w = weighted(&original[k], m_s, m_t);
        let a_norm = spectral_norm_estimate(&a_w);
        let g_norm = spectral_norm_estimate(&weighted(&corrections[k], m_s, m_t));
        let (nil, unc, bound) = if k + 1 < n_ops {
            let m_n = &spec.masses[k + 2];
            let next_c = weighted(&corrected[k + 1], m_t, m_n);
            let cur_c = weighted(&corrected[k], m_s, m_t);
            let prod = &next_c * &cur_c;
            let c_next = spectra[k + 1].max();
            let c_cur = spectra[k].max();
            let next_a = weighted(&original[k + 1], m_t, m_n);
            let a_next_norm = spectral_norm_estimate(&next_a);
            let raw = &next_a * &a_w;
            let denom = (c_next * c_cur).max(f64::MIN_POSITIVE);
            let prod_two = spectral_norm_estimate(&prod);
            (
                Some(prod.norm() / denom),
                Some(spectral_norm_estimate(&raw) / (a_next_norm * a_norm).max(f64::MIN_POSITIVE)),
                Some(prod_two / (options.tau * a_next_norm * c_cur).max(f64::MIN_POSITIVE)),
            )
        } else {
            (None, None, None)
        };
        levels.push(LevelReport {
            level: k,
            source_dim: m_s.len(),
            target_dim: m_t.len(),
            order: spec.operators[k].order,
            correction_norm: g_norm,
            relative_correction: g_norm / a_norm.max(f64::MIN_POSITIVE),
            recursion_defect: recursion[k],
            rank: projectors[k].rank,
            rank_gap: projectors[k].gap,
            rank_ambiguous: projectors[k].rank_ambiguous,
            nilpotency: nil,
            uncorrected_nilpotency: unc,
            nilpotency_bound_ratio: bound,
        });
    }
    let harmonic = (0..spec.len()).map(|_| OnceLock::new()).collect();
    Ok(CorrectedChain { spec, options, original, corrected, corrections, projectors, levels, spectra, harmonic })
}
