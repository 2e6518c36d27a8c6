use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decay::{decaying_space, lopatinskii_injectivity, INJECTIVITY_TOL};
use super::symbol::{build_symbol, BoundarySplit, CotangentPoint, Restriction, SymbolFamily, SymbolOp};
use super::SymbolError;
use crate::fiber_algebra::{Bidegree, MetricAtPoint};
use crate::linalg;
use crate::Complex64;

type C = Complex64;

/// An interior system `⊕ A_i` on one source slot with boundary operators `⊕ B_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub restriction: Restriction,
    pub interior: Vec<SymbolOp>,
    pub boundary: Vec<SymbolOp>,
}

impl SystemSpec {
    pub fn new(name: impl Into<String>, source: Bidegree, restriction: Restriction) -> Self {
        SystemSpec {
            name: name.into(),
            d: source.d(),
            k: source.k(),
            m: source.m(),
            restriction,
            interior: Vec::new(),
            boundary: Vec::new(),
        }
    }

    pub fn interior(mut self, op: SymbolOp) -> Self {
        self.interior.push(op);
        self
    }

    pub fn boundary(mut self, op: SymbolOp) -> Self {
        self.boundary.push(op);
        self
    }

    pub fn source(&self) -> Result<Bidegree, SymbolError> {
        Ok(Bidegree::new(self.d, self.k, self.m)?)
    }

    fn families(&self, metric: &MetricAtPoint) -> Result<(SymbolFamily, Option<SymbolFamily>), SymbolError> {
        let source = self.source()?;
        let stack = |ops: &[SymbolOp]| -> Result<Option<SymbolFamily>, SymbolError> {
            let mut acc: Option<SymbolFamily> = None;
            for &op in ops {
                let fam = build_symbol(op, source, metric)?;
                acc = Some(match acc {
                    None => fam,
                    Some(a) => a.stack(&fam)?,
                });
            }
            acc.map(|f| f.restrict(self.restriction)).transpose()
        };
        let interior = stack(&self.interior)?.ok_or(SymbolError::EmptyStack)?;
        let boundary = stack(&self.boundary)?.filter(|f| !f.is_empty());
        Ok((interior, boundary))
    }
}

/// Elliptic pre-complexes whose levels can be checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChainKind {
    /// `Λ^{0,0} → Λ^{1,0} → …` with `d` and tangential/normal traces.
    DeRham,
    /// `𝒢^{0,m} → … → 𝒢^{m,m} →_H 𝒢^{m+1,m+1} → … → 𝒢^{d,m+1}`.
    Bianchi { m: usize },
}

impl ChainKind {
    pub fn levels(self, d: usize) -> Vec<Bidegree> {
        match self {
            ChainKind::DeRham => (0..=d).filter_map(|k| Bidegree::new(d, k, 0).ok()).collect(),
            ChainKind::Bianchi { m } => {
                let mut out: Vec<Bidegree> = (0..=m.min(d)).filter_map(|k| Bidegree::new(d, k, m).ok()).collect();
                if m < d {
                    out.extend((m + 1..=d).filter_map(|k| Bidegree::new(d, k, m + 1).ok()));
                }
                out
            }
        }
    }

    /// Operator from level `i` to level `i + 1`.
    pub fn operator(self, i: usize) -> SymbolOp {
        match self {
            ChainKind::DeRham => SymbolOp::D,
            ChainKind::Bianchi { m } if i == m => SymbolOp::H,
            ChainKind::Bianchi { .. } => SymbolOp::DG,
        }
    }

    pub fn adjoint(self, i: usize) -> SymbolOp {
        match self.operator(i) {
            SymbolOp::D => SymbolOp::Delta,
            SymbolOp::H => SymbolOp::HStar,
            _ => SymbolOp::DeltaG,
        }
    }

    /// Boundary operator paired with the formal adjoint of operator `i`.
    pub fn boundary_star(self, i: usize) -> SymbolOp {
        match self.operator(i) {
            SymbolOp::D => SymbolOp::Pnt,
            SymbolOp::H => SymbolOp::BHStar,
            _ => SymbolOp::BGStar,
        }
    }

    pub fn restriction(self) -> Restriction {
        match self {
            ChainKind::DeRham => Restriction::Full,
            ChainKind::Bianchi { .. } => Restriction::Bianchi,
        }
    }

    pub fn name(self) -> String {
        match self {
            ChainKind::DeRham => "de Rham".into(),
            ChainKind::Bianchi { m } => format!("Bianchi(m={m})"),
        }
    }

    /// `(A_{i−1}^* ⊕ A_i, B_{i−1}^*)` on level `i`.
    pub fn level_system(self, d: usize, i: usize) -> Result<SystemSpec, SymbolError> {
        let levels = self.levels(d);
        let source = *levels.get(i).ok_or(SymbolError::NoSuchLevel(i))?;
        let mut spec = SystemSpec::new(format!("{} level {i}", self.name()), source, self.restriction());
        if i > 0 {
            spec = spec.interior(self.adjoint(i - 1)).boundary(self.boundary_star(i - 1));
        }
        if i + 1 < levels.len() {
            spec = spec.interior(self.operator(i));
        }
        Ok(spec)
    }
}

/// `(δ^𝒢 ⊕ d^𝒢)` on `𝒢^{k,m}` with `B_𝒢^*` (`dual = true`) or `B_𝒢`.
pub fn bianchi_dirac_system(source: Bidegree, dual: bool) -> SystemSpec {
    let tag = if dual { "B_G*" } else { "B_G" };
    let mut spec = SystemSpec::new(format!("(delta^G + d^G, {tag}) on G{source}"), source, Restriction::Bianchi);
    if source.k() > 0 {
        spec = spec.interior(SymbolOp::DeltaG);
    }
    if source.k() < source.d() {
        spec = spec.interior(SymbolOp::DG);
    }
    spec.boundary(if dual { SymbolOp::BGStar } else { SymbolOp::BG })
}

/// Boundary data for `(δ ⊕ H)` on symmetric `Λ^{m,m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianBoundary {
    /// `ℙ^{nn} ⊕ ℙ^{nt}`.
    Normal,
    /// `ℙ^{tt} ⊕ 𝔗`.
    Tangential,
    /// `ℙ^{tt}` alone. Deliberately incomplete.
    TangentialOnly,
}

pub fn hessian_system(d: usize, m: usize, data: HessianBoundary) -> Result<SystemSpec, SymbolError> {
    let source = Bidegree::new(d, m, m)?;
    let mut spec = SystemSpec::new(format!("(delta + H, {data:?}) on sym {source}"), source, Restriction::Symmetric);
    if m > 0 {
        spec = spec.interior(SymbolOp::Delta);
    }
    spec = spec.interior(SymbolOp::H);
    let ops: &[SymbolOp] = match data {
        HessianBoundary::Normal => &[SymbolOp::Pnn, SymbolOp::Pnt],
        HessianBoundary::Tangential => &[SymbolOp::Ptt, SymbolOp::T],
        HessianBoundary::TangentialOnly => &[SymbolOp::Ptt],
    };
    for &op in ops {
        if op.target(source).is_some() {
            spec = spec.boundary(op);
        }
    }
    Ok(spec)
}

/// Sampling plan for a report.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReportOptions {
    pub metric_points: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { metric_points: 5, samples: 200, seed: 0x5eed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Elliptic,
    NotElliptic,
    Indeterminate,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Interior {
        metric: Vec<Vec<f64>>,
        covector: Vec<f64>,
        kernel: Vec<[f64; 2]>,
    },
    Boundary {
        metric: Vec<Vec<f64>>,
        tangential_frame: Vec<f64>,
        normal_frame: Vec<f64>,
        initial_state: Vec<[f64; 2]>,
        decay_rates: Vec<[f64; 2]>,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityVerdict {
    pub system: SystemSpec,
    pub verdict: Verdict,
    pub interior_injective: bool,
    pub interior_min_singular: f64,
    pub boundary_injective: bool,
    pub boundary_min_singular: f64,
    pub boundary_samples: usize,
    pub vacuous_samples: usize,
    pub indeterminate_samples: usize,
    pub decaying_dims: Vec<usize>,
    pub max_residual: f64,
    pub metric_points: usize,
    pub seed: u64,
    pub witness: Option<Witness>,
}

/// Injectivity of the stacked interior symbol at one metric point.
#[derive(Clone, Debug)]
pub struct InteriorCheck {
    pub injective: bool,
    pub min_singular: f64,
    pub witness: Option<(Vec<f64>, Vec<C>)>,
}

fn pairs(v: &[C]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn rows_of(g: &DMatrix<f64>) -> Vec<Vec<f64>> {
    g.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Generalized golden-ratio increments for a Kronecker sequence in `dim` dimensions.
fn kronecker_steps(dim: usize) -> Vec<f64> {
    let mut phi: f64 = 2.0;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (1..=dim).map(|i| phi.powi(-(i as i32)).fract()).collect()
}

/// `j`-th point of a shifted low-discrepancy sequence on the unit sphere `S^{dim−1}`.
pub fn sphere_point(dim: usize, j: usize, shift: &[f64]) -> Vec<f64> {
    use std::f64::consts::TAU;
    let u = |i: usize| {
        let steps = kronecker_steps(dim.saturating_sub(1).max(1));
        (shift.get(i).copied().unwrap_or(0.0) + (j as f64 + 1.0) * steps[i]).fract()
    };
    match dim {
        1 => vec![if j % 2 == 0 { 1.0 } else { -1.0 }],
        2 => {
            let t = TAU * u(0);
            vec![t.cos(), t.sin()]
        }
        3 => {
            let z = 1.0 - 2.0 * u(0);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let t = TAU * u(1);
            vec![r * t.cos(), r * t.sin(), z]
        }
        4 => {
            let a = u(0).sqrt();
            let b = (1.0 - u(0)).sqrt();
            let (t1, t2) = (TAU * u(1), TAU * u(2));
            vec![a * t1.cos(), a * t1.sin(), b * t2.cos(), b * t2.sin()]
        }
        _ => panic!("sphere sampling supports dimensions 1..=4"),
    }
}

/// Orthonormal basis of the complement of `normal`, as columns.
fn complement_basis(normal: &[f64]) -> DMatrix<f64> {
    let d = normal.len();
    let n = DVector::from_column_slice(normal);
    let proj = DMatrix::<f64>::identity(d, d) - &n * n.transpose();
    linalg::projector_range(&proj)
}

pub fn interior_injectivity(family: &SymbolFamily, samples: usize, seed: u64) -> InteriorCheck {
    let d = family.source().d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
    let mut out = InteriorCheck { injective: true, min_singular: f64::INFINITY, witness: None };
    for j in 0..samples.max(1) {
        let xi_frame = sphere_point(d, j, &shift);
        let sym = family.evaluate(&CotangentPoint::interior(&xi_frame));
        let svd = linalg::sorted_svd(&sym);
        let n = family.fiber_dim();
        let (smin, kernel) = if svd.s.len() < n {
            (0.0, linalg::null_space_basis(&sym, 1e-300).column(0).into_owned())
        } else {
            (svd.s[n - 1], svd.v.column(n - 1).into_owned())
        };
        if smin < out.min_singular {
            out.min_singular = smin;
            if smin <= INJECTIVITY_TOL && out.witness.is_none() {
                let covector = family.metric().covector_from_frame(&DVector::from_vec(xi_frame.clone()));
                let ambient = family.basis() * kernel;
                out.witness = Some((covector.iter().copied().collect(), ambient.iter().copied().collect()));
            }
        }
    }
    out.injective = out.min_singular > INJECTIVITY_TOL;
    out
}

fn random_metric(d: usize, rng: &mut impl Rng, first: bool) -> MetricAtPoint {
    if first {
        return MetricAtPoint::euclidean(d);
    }
    let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
    let g = &b * b.transpose() + DMatrix::identity(d, d) * 0.4;
    MetricAtPoint::new((&g + g.transpose()) * 0.5).expect("positive by construction")
}

fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.2 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Interior injectivity and Lopatinskii–Shapiro condition over sampled metrics,
/// conormals and tangential covectors.
pub fn od_ellipticity_report(spec: &SystemSpec, opts: &ReportOptions) -> Result<EllipticityVerdict, SymbolError> {
    let d = spec.d;
    let points = opts.metric_points.max(1);
    let per_point = opts.samples.div_ceil(points).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shift: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();

    let mut report = EllipticityVerdict {
        system: spec.clone(),
        verdict: Verdict::Elliptic,
        interior_injective: true,
        interior_min_singular: f64::INFINITY,
        boundary_injective: true,
        boundary_min_singular: f64::INFINITY,
        boundary_samples: 0,
        vacuous_samples: 0,
        indeterminate_samples: 0,
        decaying_dims: Vec::new(),
        max_residual: 0.0,
        metric_points: points,
        seed: opts.seed,
        witness: None,
    };

    for p in 0..points {
        let metric = random_metric(d, &mut rng, p == 0);
        let conormal_frame = if p == 0 {
            let mut e = vec![0.0; d];
            e[d - 1] = 1.0;
            e
        } else {
            random_unit(d, &mut rng)
        };
        let (interior, boundary) = spec.families(&metric)?;

        let check = interior_injectivity(&interior, per_point, rng.random());
        report.interior_min_singular = report.interior_min_singular.min(check.min_singular);
        if !check.injective {
            report.interior_injective = false;
            if report.witness.is_none() {
                let (covector, kernel) = check.witness.expect("recorded on failure");
                report.witness = Some(Witness::Interior { metric: rows_of(metric.g()), covector, kernel: pairs(&kernel) });
            }
            continue;
        }

        if d < 2 {
            continue;
        }
        let tangent = complement_basis(&conormal_frame);
        for j in 0..per_point {
            let t = sphere_point(d - 1, j, &shift);
            let xi_t = &tangent * DVector::from_vec(t);
            let split = BoundarySplit::from_frame(xi_t.as_slice(), &conormal_frame)?;
            let space = match decaying_space(&interior, &split) {
                Ok(s) => s,
                Err(SymbolError::SingularLeading { .. }) => {
                    report.indeterminate_samples += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            report.boundary_samples += 1;
            if space.is_indeterminate() {
                report.indeterminate_samples += 1;
                continue;
            }
            report.max_residual = report.max_residual.max(space.residual());
            if !report.decaying_dims.contains(&space.dim()) {
                report.decaying_dims.push(space.dim());
            }
            let check = match &boundary {
                Some(b) => lopatinskii_injectivity(b, &space, &split),
                None if space.dim() == 0 => lopatinskii_injectivity(&interior, &space, &split),
                None => super::decay::BoundaryCheck {
                    injective: false,
                    vacuous: false,
                    min_singular: 0.0,
                    witness: Some(space.initial_states().column(0).iter().copied().collect()),
                },
            };
            if check.vacuous {
                report.vacuous_samples += 1;
                continue;
            }
            report.boundary_min_singular = report.boundary_min_singular.min(check.min_singular);
            if !check.injective {
                report.boundary_injective = false;
                if report.witness.is_none() {
                    let state = check.witness.expect("recorded on failure");
                    report.witness = Some(Witness::Boundary {
                        metric: rows_of(metric.g()),
                        tangential_frame: split.tangential().to_vec(),
                        normal_frame: split.normal().to_vec(),
                        initial_state: pairs(&state),
                        decay_rates: pairs(space.rates()),
                    });
                }
            }
        }
    }
    report.decaying_dims.sort_unstable();
    report.verdict = if !report.interior_injective || !report.boundary_injective {
        Verdict::NotElliptic
    } else if report.indeterminate_samples > 0 {
        Verdict::Indeterminate
    } else {
        Verdict::Elliptic
    };
    Ok(report)
}

/// Largest relative size of `σ_{A_{i+1}}(ξ) σ_{A_i}(ξ)` over sampled unit covectors and levels.
pub fn chain_symbol_defect(chain: ChainKind, metric: &MetricAtPoint, samples: usize, seed: u64) -> Result<f64, SymbolError> {
    let d = metric.dim();
    let levels = chain.levels(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..levels.len().saturating_sub(2) {
        let first = build_symbol(chain.operator(i), levels[i], metric)?.restrict(chain.restriction())?;
        let second = build_symbol(chain.operator(i + 1), levels[i + 1], metric)?;
        for j in 0..samples {
            let xi = sphere_point(d, j, &shift);
            let point = CotangentPoint::interior(&xi);
            let a = first.evaluate(&point);
            let b = second.evaluate(&point);
            let scale = (linalg::spectral_norm(&a) * linalg::spectral_norm(&b)).max(1e-300);
            worst = worst.max(linalg::spectral_norm(&(&b * &a)) / scale);
        }
    }
    Ok(worst)
}
