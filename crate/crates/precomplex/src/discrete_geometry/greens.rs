use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble, OperatorKind};
use super::domain::{build_domain, Domain, DomainSpec};
use super::layout::{FieldSpace, Layout};
use super::GeometryError;

/// Green-identity defect of one operator over a resolution ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreensReport {
    pub operator: OperatorKind,
    pub source: FieldSpace,
    pub resolutions: Vec<usize>,
    /// Relative defect at each resolution.
    pub residuals: Vec<f64>,
    /// `residual(n_i) / residual(n_{i+1})`.
    pub ratios: Vec<f64>,
}

/// Smooth test field: per component a seeded mix of low-frequency trigonometric
/// modes and a quadratic, independent of resolution.
pub fn smooth_field(domain: &Domain, layout: &Layout, seed: u64) -> DVector<f64> {
    let d = domain.d();
    let periodic: Vec<bool> = domain.grid.axes.iter().map(|a| a.periodic).collect();
    layout.sample(domain, |x, form, vector, fiber| {
        let key = seed ^ ((form.0 as u64) << 8) ^ ((vector.0 as u64) << 16) ^ ((fiber as u64) << 24);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut v = rng.random_range(-1.0..1.0);
        for _ in 0..3 {
            let amp: f64 = rng.random_range(-1.0..1.0);
            let mut phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            for (a, &xa) in x.iter().enumerate().take(d) {
                let k = if periodic[a] { rng.random_range(0..3) as f64 } else { rng.random_range(0.5..2.0) };
                phase += k * xa;
            }
            v += amp * phase.sin();
        }
        for (a, &xa) in x.iter().enumerate().take(d) {
            if !periodic[a] {
                v += rng.random_range(-0.5..0.5) * xa * xa;
            }
        }
        v
    })
}

fn inner(m: &CsrMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(m * b))
}

/// Field pairs per resolution. A single pair can cancel by accident on a coarse grid.
pub const GREENS_ENSEMBLE: u64 = 4;

/// Defect of `⟨Aψ,η⟩ − ⟨ψ,A*η⟩ − sign·⟨Bψ,B*η⟩_∂` at one resolution: the worst
/// absolute defect over a seeded ensemble of field pairs, relative to the
/// largest pairing magnitude in the ensemble.
pub(crate) fn greens_defect(domain: &Domain, kind: OperatorKind, source: FieldSpace, seed: u64) -> Result<f64, GeometryError> {
    let op = assemble(domain, kind, source)?;
    let pairing = op.pairing.as_ref().ok_or(GeometryError::Unsupported { op: kind.name(), space: source.to_string() })?;
    let sl = Layout::new(domain, op.source)?;
    let tl = Layout::new(domain, op.target[0])?;
    let (ms, mt) = (sl.mass(domain), tl.mass(domain));
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for j in 0..GREENS_ENSEMBLE {
        let s = seed.wrapping_add(j.wrapping_mul(0x2545_f491));
        let psi = smooth_field(domain, &sl, s);
        let eta = smooth_field(domain, &tl, s.wrapping_add(0x9e37_79b9));
        let lhs = inner(&mt, &(&op.matrix * &psi), &eta);
        let rhs = inner(&ms, &psi, &(&pairing.adjoint * &eta));
        let bdry = inner(&pairing.boundary_mass, &(&pairing.trace * &psi), &(&pairing.adjoint_trace * &eta));
        worst = worst.max((lhs - rhs - pairing.sign * bdry).abs());
        scale = scale.max(lhs.abs() + rhs.abs() + bdry.abs());
    }
    Ok(worst / scale.max(f64::MIN_POSITIVE))
}

/// Green-identity defects of `kind` on `source` over the resolutions `ns`.
pub fn greens_residual(
    spec: &DomainSpec,
    kind: OperatorKind,
    source: FieldSpace,
    ns: &[usize],
    seed: u64,
) -> Result<GreensReport, GeometryError> {
    let mut residuals = Vec::with_capacity(ns.len());
    for &n in ns {
        let domain = build_domain(&DomainSpec { n, ..spec.clone() })?;
        residuals.push(greens_defect(&domain, kind, source, seed)?);
    }
    let ratios = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(GreensReport { operator: kind, source, resolutions: ns.to_vec(), residuals, ratios })
}
