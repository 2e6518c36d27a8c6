use nalgebra::{DMatrix, DVector};
use precomplex::discrete_geometry::{build_domain, smooth_field, DomainSpec, Layout};
use precomplex::precomplex_engine::{
    build_chain, cohomology_dims, correct_chain, formal_adjoint, harmonic_space, hodge_decompose, load_chain,
    mass_inner, range_projector, solve_bvp, BvpData, BvpOptions, ChainKind, ChainOptions, CorrectedChain, Dimension,
    EngineError, IntegrabilityCondition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain(spec: DomainSpec, kind: ChainKind) -> (precomplex::discrete_geometry::Domain, CorrectedChain) {
    let dom = build_domain(&spec).unwrap();
    let c = correct_chain(build_chain(&dom, kind).unwrap(), ChainOptions::default()).unwrap();
    (dom, c)
}

fn exact_dims(c: &CorrectedChain) -> Vec<usize> {
    cohomology_dims(c).unwrap().iter().map(|d| d.exact().expect("integer dimension")).collect()
}

fn random(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn field(dom: &precomplex::discrete_geometry::Domain, c: &CorrectedChain, k: usize, seed: u64) -> DVector<f64> {
    smooth_field(dom, &Layout::new(dom, c.spec.spaces[k]).unwrap(), seed)
}

#[test]
fn projector_of_zero_and_isometry() {
    let z = DMatrix::<f64>::zeros(3, 2);
    let r = range_projector(&z, &[1.0; 2], &[1.0; 3], 1e-8).unwrap();
    assert_eq!(r.rank, 0);
    assert_eq!(r.pseudo_inverse.amax(), 0.0);
    assert_eq!(r.projector.amax(), 0.0);
    let q = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.6, 0.0, 0.8]);
    let r = range_projector(&q, &[1.0; 2], &[1.0; 3], 1e-8).unwrap();
    assert!((&r.pseudo_inverse - q.transpose()).amax() < 1e-14);
    assert!((&r.projector - &q * q.transpose()).amax() < 1e-14);
    assert!(!r.rank_ambiguous);
    assert!(range_projector(&q, &[1.0, -1.0], &[1.0; 3], 1e-8).is_err());
}

#[test]
fn gradient_projector_is_m_orthogonal() {
    let (_, c) = chain(DomainSpec::flat_box(2, 8), ChainKind::DeRham);
    let pi = &c.projectors[0].projector;
    assert!((pi * pi - pi).amax() <= 1e-10);
    // M-self-adjoint: M Π = Πᵀ M
    let m = DMatrix::from_diagonal(&DVector::from_vec(c.mass(1).to_vec()));
    assert!((&m * pi - pi.transpose() * &m).amax() <= 1e-10);
    // A P A = A
    let a = &c.corrected[0];
    assert!((a * &c.projectors[0].pseudo_inverse * a - a).amax() <= 1e-8 * a.amax());
}

#[test]
fn flat_de_rham_needs_no_correction() {
    let (_, c) = chain(DomainSpec::flat_box(2, 16), ChainKind::DeRham);
    assert_eq!(c.corrected[0], c.original[0]);
    assert!(c.max_correction_norm() <= 1e-10, "{:?}", c.levels);
    assert_eq!(exact_dims(&c), vec![1, 0, 0]);
    for k in 0..c.len() {
        assert!(harmonic_space(&c, k).unwrap().routes_agree());
    }
}

#[test]
fn annulus_de_rham_has_one_loop() {
    let (_, c) = chain(DomainSpec::annulus(16), ChainKind::DeRham);
    assert_eq!(exact_dims(&c), vec![1, 1, 0]);
    for k in 0..c.len() {
        let h = harmonic_space(&c, k).unwrap();
        assert!(h.gap >= 1e3 && h.routes_agree());
    }
}

#[test]
fn twisted_chain_is_repaired() {
    let (_, c) = chain(DomainSpec::flat_box(2, 16).with_twist(20.0), ChainKind::TwistedDeRham);
    let l = &c.levels[0];
    eprintln!("{:?}", c.levels);
    assert!(l.uncorrected_nilpotency.unwrap() >= 1e-2);
    assert!(l.nilpotency.unwrap() <= 1e-8);
    assert!(l.nilpotency_bound_ratio.unwrap() <= 10.0);
    assert!(c.levels[1].correction_norm > 0.0);
    assert!(c.levels[1].recursion_defect <= 1e-10);
}

#[test]
fn bianchi_chains_have_rigid_kernels() {
    let (_, c) = chain(DomainSpec::flat_box(2, 16), ChainKind::Bianchi { m: 0 });
    let dims = cohomology_dims(&c).unwrap();
    assert_eq!(dims[0], Dimension::Exact { value: 3 });
    let (_, c) = chain(DomainSpec::flat_box(2, 16), ChainKind::Bianchi { m: 1 });
    let dims = cohomology_dims(&c).unwrap();
    assert_eq!(dims[0], Dimension::Exact { value: 3 });
    assert_eq!(dims[1], Dimension::Exact { value: 0 });
    assert!(c.max_correction_norm() <= 1e-10);
}

#[test]
fn hodge_parts_are_orthogonal_and_complete() {
    let (dom, c) = chain(DomainSpec::annulus(12), ChainKind::DeRham);
    let k = 1;
    let psi = field(&dom, &c, k, 3);
    let parts = hodge_decompose(&c, k, &psi).unwrap();
    assert!(parts.report.orthogonality_defect <= 1e-9);
    assert!(parts.report.reconstruction_error <= 1e-10);
    assert!(!parts.report.flagged);
    // exact input has no other parts
    let omega = field(&dom, &c, 0, 9);
    let ex = &c.corrected[0] * omega;
    let p = hodge_decompose(&c, k, &ex).unwrap();
    let n = mass_inner(&ex, &ex, c.mass(k)).sqrt();
    assert!(mass_inner(&p.coexact, &p.coexact, c.mass(k)).sqrt() <= 1e-9 * n);
    assert!(mass_inner(&p.harmonic, &p.harmonic, c.mass(k)).sqrt() <= 1e-9 * n);
    // harmonic input
    let h = harmonic_space(&c, k).unwrap().basis.column(0).into_owned();
    let p = hodge_decompose(&c, k, &h).unwrap();
    assert!(mass_inner(&p.exact, &p.exact, c.mass(k)).sqrt() <= 1e-9);
    assert!(mass_inner(&p.coexact, &p.coexact, c.mass(k)).sqrt() <= 1e-9);
}

fn manufactured(c: &CorrectedChain, dom: &precomplex::discrete_geometry::Domain, k: usize, seed: u64) -> (DVector<f64>, BvpData) {
    let psi = field(dom, c, k, seed);
    let chi = (k < c.corrected.len()).then(|| &c.corrected[k] * &psi);
    let xi = (k > 0).then(|| formal_adjoint(c, k).unwrap() * &psi);
    (psi.clone(), BvpData { chi, xi, phi: Some(psi) })
}

fn modulo_harmonic(c: &CorrectedChain, k: usize, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let h = harmonic_space(c, k).unwrap();
    let m = c.mass(k);
    let d = a - b;
    let d = &d - h.project(&d, m);
    mass_inner(&d, &d, m).sqrt() / mass_inner(b, b, m).sqrt()
}

#[test]
fn calabi_round_trip_and_uniqueness() {
    let (dom, c) = chain(DomainSpec::flat_box(2, 16), ChainKind::Bianchi { m: 1 });
    for k in 0..c.len() {
        let (psi, data) = manufactured(&c, &dom, k, 21 + k as u64);
        let sol = solve_bvp(&c, k, &data, &BvpOptions::default()).unwrap();
        let err = modulo_harmonic(&c, k, &sol.psi, &psi);
        eprintln!("calabi k={k}: err={err:e} {:?} {:?}", sol.integrability, sol.residuals);
        assert!(err <= 1e-6);
        assert!(sol.harmonic_norm <= 1e-9 * mass_inner(&psi, &psi, c.mass(k)).sqrt());
    }
    // two harmonic seeds differ only inside the harmonic space
    let (_, data) = manufactured(&c, &dom, 0, 5);
    let n = c.mass(0).len();
    let a = solve_bvp(&c, 0, &data, &BvpOptions { harmonic_seed: Some(random(n, 1)), ..Default::default() }).unwrap();
    let b = solve_bvp(&c, 0, &data, &BvpOptions { harmonic_seed: Some(random(n, 2)), ..Default::default() }).unwrap();
    let diff = &a.psi - &b.psi;
    let h = harmonic_space(&c, 0).unwrap();
    let outside = &diff - h.project(&diff, c.mass(0));
    assert!(mass_inner(&diff, &diff, c.mass(0)).sqrt() > 1e-3);
    assert!(mass_inner(&outside, &outside, c.mass(0)).sqrt() <= 1e-8);
}

#[test]
fn stress_potential_exists_for_equilibrated_data() {
    let (dom, c) = chain(DomainSpec::flat_box(2, 16), ChainKind::Bianchi { m: 1 });
    // σ ∈ 𝒞^{1,1} with vanishing weak divergence and traction, orthogonal to ℋ¹
    let raw = field(&dom, &c, 1, 77);
    let mut sigma = &raw - &c.projectors[0].projector * &raw;
    sigma -= harmonic_space(&c, 1).unwrap().project(&sigma, c.mass(1));
    let data = BvpData { xi: Some(sigma.clone()), ..Default::default() };
    let sol = solve_bvp(&c, 2, &data, &BvpOptions::default()).unwrap();
    assert!(sol.residuals.adjoint_equation <= 1e-8, "{:?}", sol.residuals);
}

fn refused(r: Result<precomplex::precomplex_engine::BvpSolution, EngineError>) -> IntegrabilityCondition {
    match r {
        Err(EngineError::Integrability { condition, .. }) => condition,
        other => panic!("expected refusal, got {:?}", other.map(|s| s.integrability)),
    }
}

#[test]
fn violated_conditions_are_named() {
    let (_, c) = chain(DomainSpec::annulus(12), ChainKind::DeRham);
    let loop_form = harmonic_space(&c, 1).unwrap().basis.column(0).into_owned();
    let data = BvpData { chi: Some(loop_form), ..Default::default() };
    assert_eq!(refused(solve_bvp(&c, 0, &data, &BvpOptions::default())), IntegrabilityCondition::ChiInRange);

    let (_, c) = chain(DomainSpec::flat_box(2, 12), ChainKind::Bianchi { m: 0 });
    let data = BvpData { xi: Some(random(c.mass(1).len(), 4)), ..Default::default() };
    assert_eq!(refused(solve_bvp(&c, 2, &data, &BvpOptions::default())), IntegrabilityCondition::XiInAdjointKernel);

    let (dom, c) = chain(DomainSpec::flat_box(2, 12), ChainKind::Bianchi { m: 1 });
    let l = Layout::new(&dom, c.spec.spaces[0]).unwrap();
    let e0 = precomplex::fiber_algebra::MultiIndex::from_indices(&[0]);
    let rotation = l.sample(&dom, |x, _, v, _| if v == e0 { -x[1] } else { x[0] });
    let data = BvpData { xi: Some(rotation), ..Default::default() };
    assert_eq!(refused(solve_bvp(&c, 1, &data, &BvpOptions::default())), IntegrabilityCondition::XiOrthogonalToHarmonic);
}

#[test]
fn persisted_chain_round_trips() {
    let (_, c) = chain(DomainSpec::flat_box(2, 8), ChainKind::DeRham);
    harmonic_space(&c, 0).unwrap();
    let dir = std::env::temp_dir().join(format!("precomplex-persist-{}", std::process::id()));
    let manifest = c.save(&dir).unwrap();
    let back = load_chain(&dir).unwrap();
    assert_eq!(back.manifest, manifest);
    for k in 0..c.corrected.len() {
        assert_eq!(back.corrected[k], c.corrected[k]);
        assert_eq!(back.projectors[k], c.projectors[k].projector);
    }
    assert_eq!(back.masses[1], c.mass(1));
    assert_eq!(back.harmonic[0].as_ref().unwrap(), &harmonic_space(&c, 0).unwrap().basis);
    std::fs::remove_dir_all(&dir).unwrap();
}
