//! Randomized check of the (anti)commutation relations among `𝔊`, `𝔊_V`,
//! interior products, `g∧` and `tr_g`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Bidegree, DoubleForm, FiberMap, MetricAtPoint, Scalar, Slot};

#[derive(Clone, Debug, Serialize)]
pub struct RelationCheck {
    pub relation: String,
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug)]
enum Step {
    G,
    GV,
    GWedge,
    Trace,
    IX,
    IXV,
}

impl Step {
    fn shift(self) -> (isize, isize) {
        match self {
            Step::G => (1, -1),
            Step::GV => (-1, 1),
            Step::GWedge => (1, 1),
            Step::Trace => (-1, -1),
            Step::IX => (-1, 0),
            Step::IXV => (0, -1),
        }
    }
}

struct Context<T: Scalar> {
    metric: MetricAtPoint,
    x: Vec<T>,
}

impl<T: Scalar> Context<T> {
    fn map(&self, step: Step, b: Bidegree) -> Option<FiberMap<T>> {
        match step {
            Step::G => FiberMap::bianchi(b).ok(),
            Step::GV => FiberMap::bianchi_v(b).ok(),
            Step::GWedge => FiberMap::metric_wedge(b, &self.metric).ok(),
            Step::Trace => FiberMap::trace(b, &self.metric).ok(),
            Step::IX => FiberMap::interior(b, &self.x, Slot::Form).ok(),
            Step::IXV => FiberMap::interior(b, &self.x, Slot::Vector).ok(),
        }
    }

    /// Composite matrix of a chain applied left to right; `None` when it is the zero map.
    fn chain(&self, b: Bidegree, steps: &[Step]) -> Option<DMatrix<T>> {
        let mut acc = DMatrix::<T>::identity(b.dim(), b.dim());
        let mut slot = b;
        for &s in steps {
            let m = self.map(s, slot)?;
            acc = m.matrix() * acc;
            slot = m.target();
        }
        Some(acc)
    }
}

type Term = (f64, &'static [Step]);

/// A relation `Σ coef · chain = 0`; the `diag` coefficient multiplies the identity
/// and may depend on `(k, m)`.
struct Relation {
    name: &'static str,
    terms: &'static [Term],
    diag: fn(usize, usize) -> f64,
}

fn relations() -> Vec<Relation> {
    use Step::*;
    vec![
        Relation { name: "[G,G_V] = (k-m) Id", terms: &[(1.0, &[GV, G]), (-1.0, &[G, GV])], diag: |k, m| -(k as f64 - m as f64) },
        Relation { name: "[G, g^] = 0", terms: &[(1.0, &[GWedge, G]), (-1.0, &[G, GWedge])], diag: |_, _| 0.0 },
        Relation { name: "[G_V, g^] = 0", terms: &[(1.0, &[GWedge, GV]), (-1.0, &[GV, GWedge])], diag: |_, _| 0.0 },
        Relation { name: "[G, tr_g] = 0", terms: &[(1.0, &[Trace, G]), (-1.0, &[G, Trace])], diag: |_, _| 0.0 },
        Relation { name: "[G_V, tr_g] = 0", terms: &[(1.0, &[Trace, GV]), (-1.0, &[GV, Trace])], diag: |_, _| 0.0 },
        Relation { name: "{G, i_X} = i_X^V", terms: &[(1.0, &[IX, G]), (1.0, &[G, IX]), (-1.0, &[IXV])], diag: |_, _| 0.0 },
        Relation { name: "{G, i_X^V} = 0", terms: &[(1.0, &[IXV, G]), (1.0, &[G, IXV])], diag: |_, _| 0.0 },
        Relation { name: "{G_V, i_X^V} = i_X", terms: &[(1.0, &[IXV, GV]), (1.0, &[GV, IXV]), (-1.0, &[IX])], diag: |_, _| 0.0 },
        Relation { name: "{G_V, i_X} = 0", terms: &[(1.0, &[IX, GV]), (1.0, &[GV, IX])], diag: |_, _| 0.0 },
    ]
}

/// Random symmetric positive-definite metric with entries of order one.
pub fn random_metric(d: usize, rng: &mut impl Rng) -> MetricAtPoint {
    let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-0.5..0.5));
    let g = &b * b.transpose() + DMatrix::<f64>::identity(d, d) * 0.5;
    MetricAtPoint::new((&g + g.transpose()) * 0.5).expect("SPD by construction")
}

/// Run every relation on `samples` random forms for each `(k, m)` at dimension `d`.
/// `sampler` draws one random scalar.
pub fn check_relations<T: Scalar>(
    d: usize,
    samples: usize,
    seed: u64,
    tolerance: f64,
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> T,
) -> Vec<RelationCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = Vec::new();
    for k in 0..=d {
        for m in 0..=d {
            let b = Bidegree::new(d, k, m).expect("in range");
            let mut errors = vec![0.0f64; relations().len() + 2];
            for _ in 0..samples {
                let metric = random_metric(d, &mut rng);
                let x: Vec<T> = (0..d).map(|_| sampler(&mut rng)).collect();
                let ctx = Context { metric, x };
                let psi = DoubleForm::from_fn(b, |_| sampler(&mut rng));
                let scale = 1.0 + modulus(psi.max_abs());
                for (r, rel) in relations().iter().enumerate() {
                    if let Some(err) = relation_error(&ctx, b, rel, &psi) {
                        errors[r] = errors[r].max(err / scale);
                    }
                }
                let n = relations().len();
                errors[n] = errors[n].max(duality_error(&ctx, b, &psi, &mut rng, &mut sampler));
                let back = FiberMap::<T>::involution(b.transpose()).matrix() * (FiberMap::<T>::involution(b).matrix() * psi.coeffs());
                errors[n + 1] = errors[n + 1].max(modulus((back - psi.coeffs()).camax()) / scale);
            }
            let mut names: Vec<String> = relations().iter().map(|r| r.name.to_string()).collect();
            names.push("(G psi, eta) = (psi, G_V eta)".into());
            names.push("(psi^T)^T = psi".into());
            for (name, err) in names.into_iter().zip(errors) {
                out.push(RelationCheck { relation: name, d, k, m, samples, max_error: err, tolerance, pass: err <= tolerance });
            }
        }
    }
    out
}

fn modulus<R: nalgebra::RealField>(x: R) -> f64 {
    nalgebra::try_convert::<R, f64>(x).unwrap_or(f64::NAN)
}

fn relation_error<T: Scalar>(ctx: &Context<T>, b: Bidegree, rel: &Relation, psi: &DoubleForm<T>) -> Option<f64> {
    let (dk, dm) = rel.terms[0].1.iter().fold((0, 0), |(a, c), s| (a + s.shift().0, c + s.shift().1));
    let target = b.shifted(dk, dm)?;
    let mut total = nalgebra::DVector::<T>::zeros(target.dim());
    for &(coef, steps) in rel.terms {
        if let Some(m) = ctx.chain(b, steps) {
            total += (m * psi.coeffs()) * T::from_subset(&coef);
        }
    }
    let diag = (rel.diag)(b.k(), b.m());
    if diag != 0.0 {
        total += psi.coeffs() * T::from_subset(&diag);
    }
    Some(modulus(total.camax()))
}

fn duality_error<T: Scalar>(
    ctx: &Context<T>,
    b: Bidegree,
    psi: &DoubleForm<T>,
    rng: &mut ChaCha8Rng,
    sampler: &mut impl FnMut(&mut ChaCha8Rng) -> T,
) -> f64 {
    let Ok(g) = FiberMap::<T>::bianchi(b) else { return 0.0 };
    let eta = DoubleForm::from_fn(g.target(), |_| sampler(rng));
    let gv = FiberMap::<T>::bianchi_v(g.target()).expect("inverse shift of a valid step");
    let lhs = g.apply(psi).and_then(|gp| gp.inner(&eta, &ctx.metric)).expect("conformable");
    let rhs = psi.inner(&gv.apply(&eta).expect("conformable"), &ctx.metric).expect("conformable");
    let scale = 1.0 + modulus(psi.max_abs()) * modulus(eta.max_abs());
    modulus((lhs - rhs).modulus()) / scale
}

/// Orthogonal projector onto the Bianchi forms built straight from the kernel of
/// `𝔊` (k ≥ m) and `𝔊_V` (k ≤ m) by a rank-revealing decomposition.
pub fn kernel_projector(b: Bidegree) -> DMatrix<f64> {
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    if b.k() >= b.m() {
        if let Ok(g) = FiberMap::<f64>::bianchi(b) {
            rows.push(g.into_matrix());
        }
    }
    if b.k() <= b.m() {
        if let Ok(gv) = FiberMap::<f64>::bianchi_v(b) {
            rows.push(gv.into_matrix());
        }
    }
    if rows.is_empty() {
        return DMatrix::identity(b.dim(), b.dim());
    }
    let refs: Vec<&DMatrix<f64>> = rows.iter().collect();
    crate::linalg::null_space_projector(&crate::linalg::vstack(&refs), 1e-10)
}

/// Compares the closed-form Bianchi projector and the explicit formulas for
/// `P_𝒢(ξ∧ψ)` and `P_𝒢 i_ξψ` against [`kernel_projector`] on random inputs.
pub fn check_projector_formulas(d: usize, samples: usize, seed: u64, tolerance: f64) -> Vec<RelationCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let mut out = Vec::new();
    for k in 0..=d {
        for m in 0..=d {
            let b = Bidegree::new(d, k, m).expect("in range");
            let oracle = kernel_projector(b);
            let closed = super::bianchi_projector::<f64>(b).into_matrix();
            let push = |out: &mut Vec<RelationCheck>, name: &str, err: f64, samples| {
                out.push(RelationCheck { relation: name.into(), d, k, m, samples, max_error: err, tolerance, pass: err <= tolerance })
            };
            push(&mut out, "P_G = kernel projector", (&closed - &oracle).amax(), 1);
            if k == m {
                continue;
            }
            let mut worst: f64 = 0.0;
            for _ in 0..samples {
                let raw = DMatrix::from_fn(b.dim(), 1, |_, _| rng.random_range(-1.0..1.0));
                let psi = DoubleForm::new(b, (&oracle * raw).column(0).into_owned()).expect("dimension");
                let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (got, plain) = if k < m {
                    let plain = super::wedge(&DoubleForm::covector(&xi).expect("covector"), &psi);
                    (super::bianchi_wedge(&xi, &psi), plain)
                } else {
                    (super::bianchi_interior(&xi, &psi), super::interior_product(&psi, &xi, Slot::Form))
                };
                let (Ok(got), Ok(plain)) = (got, plain) else { continue };
                let want = kernel_projector(plain.bidegree()) * plain.coeffs();
                worst = worst.max((got.coeffs() - want).amax());
            }
            push(&mut out, if k < m { "P_G(xi ^ psi) explicit" } else { "P_G(i_xi psi) explicit" }, worst, samples);
        }
    }
    out
}
