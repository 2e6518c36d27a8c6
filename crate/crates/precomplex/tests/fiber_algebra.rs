mod common;

use nalgebra::{DMatrix, DVector};
use precomplex::fiber_algebra::identities::check_relations;
use precomplex::fiber_algebra::*;
use precomplex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bd(d: usize, k: usize, m: usize) -> Bidegree {
    Bidegree::new(d, k, m).unwrap()
}

fn form(b: Bidegree, c: DVector<f64>) -> DoubleForm<f64> {
    DoubleForm::new(b, c).unwrap()
}

fn random_form(b: Bidegree, rng: &mut impl Rng) -> DoubleForm<f64> {
    form(b, common::random_vector(b.dim(), rng))
}

fn all_bidegrees(d: usize) -> impl Iterator<Item = Bidegree> {
    (0..=d).flat_map(move |k| (0..=d).map(move |m| bd(d, k, m)))
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * (1.0 + b.amax())
}

#[test]
fn basis_enumeration_examples() {
    let pairs = basis_enumerate(bd(2, 1, 1));
    let listed: Vec<(Vec<usize>, Vec<usize>)> = pairs.iter().map(|(i, j)| (i.indices(), j.indices())).collect();
    assert_eq!(listed, vec![(vec![0], vec![0]), (vec![0], vec![1]), (vec![1], vec![0]), (vec![1], vec![1])]);
    assert_eq!(basis_enumerate(bd(3, 2, 1)).len(), 9);
    let scalar = basis_enumerate(bd(2, 0, 0));
    assert_eq!(scalar.len(), 1);
    assert!(scalar[0].0.is_empty() && scalar[0].1.is_empty());
    assert_eq!(basis_enumerate(bd(4, 2, 3)), basis_enumerate(bd(4, 2, 3)));
}

#[test]
fn wedge_of_coordinate_covectors() {
    let b = bd(2, 1, 0);
    let t1 = DoubleForm::<f64>::basis_element(b, &[0], &[]).unwrap();
    let t2 = DoubleForm::<f64>::basis_element(b, &[1], &[]).unwrap();
    let w = wedge(&t1, &t2).unwrap();
    assert_eq!(w.bidegree(), bd(2, 2, 0));
    assert_eq!(w.coefficient(&[0, 1], &[]), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xi = random_form(bd(3, 1, 0), &mut rng);
    assert!(wedge(&xi, &xi).unwrap().max_abs() < 1e-15);
}

#[test]
fn wedge_matches_alternation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for d in 2..=4 {
        for bp in all_bidegrees(d) {
            for be in all_bidegrees(d) {
                if bp.k() + be.k() > d || bp.m() + be.m() > d || bp.k() + be.k() + bp.m() + be.m() > 5 {
                    continue;
                }
                let p = random_form(bp, &mut rng);
                let e = random_form(be, &mut rng);
                let got = wedge(&p, &e).unwrap();
                let (ob, oc) = common::wedge(bp, p.coeffs(), be, e.coeffs());
                assert_eq!(got.bidegree(), ob);
                assert!(close(got.coeffs(), &oc, 1e-12), "{bp} ∧ {be}");
            }
        }
    }
}

#[test]
fn wedge_graded_commutativity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let psi = random_form(bd(3, 1, 1), &mut rng);
        let eta = random_form(bd(3, 1, 0), &mut rng);
        let lhs = wedge(&psi, &eta).unwrap();
        let rhs = wedge(&eta, &psi).unwrap();
        // (−1)^{kℓ + mn} with (k,m)=(1,1), (ℓ,n)=(1,0)
        assert!(close(lhs.coeffs(), &(-rhs.coeffs()), 1e-14));
    }
}

#[test]
fn wedge_rejects_overflow() {
    let a = DoubleForm::<f64>::zeros(bd(2, 2, 0));
    let b = DoubleForm::<f64>::zeros(bd(2, 1, 0));
    assert!(matches!(wedge(&a, &b), Err(AlgebraError::DegreeOverflow(_))));
}

#[test]
fn involution_examples() {
    let b = bd(2, 1, 1);
    let t = DoubleForm::<f64>::basis_element(b, &[0], &[1]).unwrap();
    let expected = DoubleForm::<f64>::basis_element(b, &[1], &[0]).unwrap();
    assert_eq!(involution(&t), expected);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let metric = common::random_metric(3, &mut rng);
    let g = DoubleForm::<f64>::metric(&metric);
    assert!(close(involution(&g).coeffs(), g.coeffs(), 0.0));
    for d in 2..=4 {
        for b in all_bidegrees(d) {
            for _ in 0..50 {
                let psi = random_form(b, &mut rng);
                let once = involution(&psi);
                let (ob, oc) = common::transpose(b, psi.coeffs());
                assert_eq!(once.bidegree(), ob);
                assert!(close(once.coeffs(), &oc, 1e-14));
                assert_eq!(involution(&once), psi);
            }
        }
    }
}

#[test]
fn interior_examples() {
    let e1 = [1.0, 0.0];
    let e2 = [0.0, 1.0];
    let top = DoubleForm::<f64>::basis_element(bd(2, 2, 0), &[0, 1], &[]).unwrap();
    let got = interior_product(&top, &e1, Slot::Form).unwrap();
    assert_eq!(got, DoubleForm::basis_element(bd(2, 1, 0), &[1], &[]).unwrap());
    let t12 = DoubleForm::<f64>::basis_element(bd(2, 1, 1), &[0], &[1]).unwrap();
    let got = interior_product(&t12, &e2, Slot::Vector).unwrap();
    assert_eq!(got, DoubleForm::basis_element(bd(2, 1, 0), &[0], &[]).unwrap());
    let scalar = DoubleForm::<f64>::scalar(2, 1.0).unwrap();
    assert!(matches!(interior_product(&scalar, &e1, Slot::Form), Err(AlgebraError::DegreeUnderflow(_))));
}

#[test]
fn interior_matches_oracle_and_is_an_antiderivation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in 2..=4 {
        for b in all_bidegrees(d) {
            let x = common::random_vector(d, &mut rng);
            let psi = random_form(b, &mut rng);
            for (slot, vector) in [(Slot::Form, false), (Slot::Vector, true)] {
                if (vector && b.m() == 0) || (!vector && b.k() == 0) {
                    continue;
                }
                let got = interior_product(&psi, x.as_slice(), slot).unwrap();
                let (_, oc) = common::interior(b, psi.coeffs(), &x, vector);
                assert!(close(got.coeffs(), &oc, 1e-12));
            }
            if b.k() >= 1 && b.m() == 0 && b.k() < d {
                let eta = random_form(bd(d, 1, 1), &mut rng);
                if b.k() + 1 > d {
                    continue;
                }
                let lhs = interior_product(&wedge(&psi, &eta).unwrap(), x.as_slice(), Slot::Form).unwrap();
                let a = wedge(&interior_product(&psi, x.as_slice(), Slot::Form).unwrap(), &eta).unwrap();
                let sign = if b.k() % 2 == 0 { 1.0 } else { -1.0 };
                let c = wedge(&psi, &interior_product(&eta, x.as_slice(), Slot::Form).unwrap()).unwrap().scale(sign);
                assert!(close(lhs.coeffs(), a.add(&c).unwrap().coeffs(), 1e-12));
            }
        }
    }
}

#[test]
fn bianchi_sum_examples() {
    let t12 = DoubleForm::<f64>::basis_element(bd(2, 1, 1), &[0], &[1]).unwrap();
    let got = bianchi_sum(&t12, BianchiVariant::Raise).unwrap();
    assert_eq!(got.bidegree(), bd(2, 2, 0));
    assert_eq!(got.coefficient(&[0, 1], &[]), -1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for d in 2..=4 {
        let metric = common::random_metric(d, &mut rng);
        let g = DoubleForm::<f64>::metric(&metric);
        assert!(bianchi_sum(&g, BianchiVariant::Raise).unwrap().max_abs() < 1e-14);
    }
    let psi = random_form(bd(3, 2, 1), &mut rng);
    let gv_g = bianchi_sum(&bianchi_sum(&psi, BianchiVariant::Raise).unwrap(), BianchiVariant::Lower).unwrap();
    let g_gv = bianchi_sum(&bianchi_sum(&psi, BianchiVariant::Lower).unwrap(), BianchiVariant::Raise).unwrap();
    assert!(close(g_gv.sub(&gv_g).unwrap().coeffs(), psi.coeffs(), 1e-13));
    let s = DoubleForm::<f64>::zeros(bd(3, 2, 0));
    assert!(matches!(bianchi_sum(&s, BianchiVariant::Raise), Err(AlgebraError::BianchiDegree(_))));
}

#[test]
fn bianchi_sum_is_the_frame_sum_in_any_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in 2..=4 {
        for b in all_bidegrees(d) {
            if b.m() == 0 || b.k() == d || b.k() + b.m() > 6 {
                continue;
            }
            let metric = common::random_metric(d, &mut rng);
            let psi = random_form(b, &mut rng);
            let got = bianchi_sum(&psi, BianchiVariant::Raise).unwrap();
            let (_, oc) = common::bianchi(b, psi.coeffs(), &metric);
            assert!(close(got.coeffs(), &oc, 1e-11), "{b}");
            // 𝔊_V through the involution, on the transposed slot
            let (tb, tc) = common::transpose(b, psi.coeffs());
            let (gb, gc) = common::bianchi(b, psi.coeffs(), &metric);
            let (_, lower) = common::transpose(gb, &gc);
            let got_v = bianchi_sum(&form(tb, tc), BianchiVariant::Lower).unwrap();
            assert!(close(got_v.coeffs(), &lower, 1e-11), "{b} lower");
        }
    }
}

#[test]
fn trace_and_metric_wedge() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for d in 2..=4 {
        let metric = common::random_metric(d, &mut rng);
        let g = DoubleForm::<f64>::metric(&metric);
        let tr = metric_op(&g, MetricOp::Trace, &metric).unwrap();
        assert!((tr.coeffs()[0] - d as f64).abs() < 1e-12);
        for b in all_bidegrees(d) {
            if b.k() == 0 || b.m() == 0 || b.k() + b.m() > 6 {
                continue;
            }
            let psi = random_form(b, &mut rng);
            let got = metric_op(&psi, MetricOp::Trace, &metric).unwrap();
            let (_, oc) = common::trace(b, psi.coeffs(), &metric);
            assert!(close(got.coeffs(), &oc, 1e-11), "{b}");
        }
    }
    let metric = common::random_metric(3, &mut rng);
    for _ in 0..100 {
        let k = rng.random_range(0..3);
        let m = rng.random_range(0..3);
        let psi = random_form(bd(3, k, m), &mut rng);
        let eta = random_form(bd(3, k + 1, m + 1), &mut rng);
        let lhs = metric_op(&psi, MetricOp::MetricWedge, &metric).unwrap().inner(&eta, &metric).unwrap();
        let rhs = psi.inner(&metric_op(&eta, MetricOp::Trace, &metric).unwrap(), &metric).unwrap();
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
    }
}

#[test]
fn fiber_inner_product_matches_frame_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for d in 2..=4 {
        let metric = common::random_metric(d, &mut rng);
        for b in all_bidegrees(d) {
            let p = random_form(b, &mut rng);
            let q = random_form(b, &mut rng);
            let got = p.inner(&q, &metric).unwrap();
            let want = common::inner(b, p.coeffs(), q.coeffs(), &metric);
            assert!((got - want).abs() < 1e-11 * (1.0 + want.abs()), "{b}");
        }
    }
}

#[test]
fn hodge_star_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for d in 2..=4 {
        let metric = common::random_metric(d, &mut rng);
        let one = DoubleForm::<f64>::scalar(d, 1.0).unwrap();
        let vol = metric_op(&one, MetricOp::Hodge, &metric).unwrap();
        assert!((vol.coeffs()[0] - metric.sqrt_det()).abs() < 1e-12);
        for k in 0..=d {
            let b = bd(d, k, 0);
            let psi = random_form(b, &mut rng);
            let star = metric_op(&psi, MetricOp::Hodge, &metric).unwrap();
            let want = common::hodge_forms(b, psi.coeffs(), &metric);
            assert!(close(star.coeffs(), &want, 1e-10), "d={d} k={k}");
            let twice = metric_op(&star, MetricOp::Hodge, &metric).unwrap();
            let sign = if (k * (d - k)) % 2 == 0 { 1.0 } else { -1.0 };
            assert!(close(twice.coeffs(), &(psi.coeffs() * sign), 1e-11));
        }
        let psi = random_form(bd(d, 1, 2.min(d)), &mut rng);
        let sv = metric_op(&psi, MetricOp::HodgeV, &metric).unwrap();
        let via = involution(&metric_op(&involution(&psi), MetricOp::Hodge, &metric).unwrap());
        assert!(close(sv.coeffs(), via.coeffs(), 1e-13));
    }
}

#[test]
fn bianchi_projection_example() {
    let t12 = DoubleForm::<f64>::basis_element(bd(2, 1, 1), &[0], &[1]).unwrap();
    let got = project_bianchi(&t12);
    let n = 4;
    let g = FiberMap::<f64>::bianchi(bd(2, 1, 1)).unwrap().into_matrix();
    let gv = FiberMap::<f64>::bianchi_v(bd(2, 1, 1)).unwrap().into_matrix();
    let oracle = common::kernel_projector(&[g, gv], n) * t12.coeffs();
    assert!(close(got.coeffs(), &oracle, 1e-12));
    assert!((got.coefficient(&[0], &[1]) - 0.5).abs() < 1e-12);
    assert!((got.coefficient(&[1], &[0]) - 0.5).abs() < 1e-12);
    assert!(got.coefficient(&[0], &[0]).abs() < 1e-12);
}

/// Orthogonal projector onto the Bianchi forms computed straight from the kernel definition.
fn oracle_projector(b: Bidegree) -> DMatrix<f64> {
    let mut blocks = Vec::new();
    if b.k() >= b.m() {
        if let Ok(g) = FiberMap::<f64>::bianchi(b) {
            blocks.push(g.into_matrix());
        }
    }
    if b.k() <= b.m() {
        if let Ok(gv) = FiberMap::<f64>::bianchi_v(b) {
            blocks.push(gv.into_matrix());
        }
    }
    common::kernel_projector(&blocks, b.dim())
}

#[test]
fn projector_matches_kernel_oracle() {
    for d in 2..=4 {
        for b in all_bidegrees(d) {
            let p = bianchi_projector::<f64>(b).into_matrix();
            assert!((p - oracle_projector(b)).amax() < 1e-10, "{b}");
        }
    }
}

#[test]
fn explicit_formulas_match_projection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for d in 2..=4 {
        for b in all_bidegrees(d) {
            let proj = oracle_projector(b);
            for _ in 0..100 {
                let psi = form(b, &proj * common::random_vector(b.dim(), &mut rng));
                let xi = common::random_vector(d, &mut rng);
                if b.k() < b.m() {
                    let got = bianchi_wedge(xi.as_slice(), &psi).unwrap();
                    let raw = wedge(&DoubleForm::covector(xi.as_slice()).unwrap(), &psi).unwrap();
                    let want = oracle_projector(raw.bidegree()) * raw.coeffs();
                    worst = worst.max((got.coeffs() - want).amax());
                }
                if b.k() > b.m() {
                    let got = bianchi_interior(xi.as_slice(), &psi).unwrap();
                    let raw = interior_product(&psi, xi.as_slice(), Slot::Form).unwrap();
                    let want = oracle_projector(raw.bidegree()) * raw.coeffs();
                    worst = worst.max((got.coeffs() - want).amax());
                }
            }
        }
    }
    assert!(worst <= 1e-10, "worst {worst:e}");
    let diag = DoubleForm::<f64>::zeros(bd(3, 1, 1));
    assert!(bianchi_wedge(&[1.0, 0.0, 0.0], &diag).is_err());
    assert!(bianchi_interior(&[1.0, 0.0, 0.0], &diag).is_err());
}

#[test]
fn bianchi_sums_injective_off_the_diagonal() {
    for d in 2..=4 {
        for b in all_bidegrees(d) {
            if b.k() < b.m() {
                let g = FiberMap::<f64>::bianchi(b).unwrap().into_matrix();
                let kernel = common::kernel_projector(&[g], b.dim());
                assert!(kernel.trace().abs() < 1e-10, "{b}");
            }
            if b.k() > b.m() {
                let gv = FiberMap::<f64>::bianchi_v(b).unwrap().into_matrix();
                let kernel = common::kernel_projector(&[gv], b.dim());
                assert!(kernel.trace().abs() < 1e-10, "{b}");
            }
        }
    }
}

#[test]
fn relation_suite_real() {
    for d in 2..=4 {
        let report = check_relations::<f64>(d, 100, 17, 1e-12, |r| r.random_range(-1.0..1.0));
        for r in &report {
            assert!(r.pass, "{} at ({},{},{}) err {:e}", r.relation, r.d, r.k, r.m, r.max_error);
        }
    }
}

#[test]
fn relation_suite_complex() {
    for d in 2..=3 {
        let report = check_relations::<Complex64>(d, 30, 18, 1e-12, |r| {
            Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
        });
        assert!(report.iter().all(|r| r.pass));
    }
}

#[test]
fn relation_suite_single_precision() {
    let report = check_relations::<f32>(3, 20, 19, 1e-4, |r| r.random_range(-1.0f32..1.0));
    assert!(report.iter().all(|r| r.pass));
}

#[test]
fn complex_projection_agrees_with_real() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let b = bd(3, 1, 2);
    let re = common::random_vector(b.dim(), &mut rng);
    let im = common::random_vector(b.dim(), &mut rng);
    let z = DoubleForm::new(b, DVector::from_fn(b.dim(), |i, _| Complex64::new(re[i], im[i]))).unwrap();
    let pz = project_bianchi(&z);
    let pr = project_bianchi(&form(b, re));
    let pi = project_bianchi(&form(b, im));
    for i in 0..b.dim() {
        assert!((pz.coeffs()[i] - Complex64::new(pr.coeffs()[i], pi.coeffs()[i])).norm() < 1e-13);
    }
}

fn bidegree_strategy() -> impl Strategy<Value = Bidegree> {
    (2usize..=4).prop_flat_map(|d| (Just(d), 0..=d, 0..=d)).prop_map(|(d, k, m)| bd(d, k, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projector_is_idempotent_and_orthogonal(b in bidegree_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let metric = common::random_metric(b.d(), &mut rng);
        let psi = random_form(b, &mut rng);
        let p = project_bianchi(&psi);
        let pp = project_bianchi(&p);
        prop_assert!(close(pp.coeffs(), p.coeffs(), 1e-12));
        let rest = psi.sub(&p).unwrap();
        let cross = p.inner(&rest, &metric).unwrap();
        prop_assert!(cross.abs() < 1e-11 * (1.0 + psi.inner(&psi, &metric).unwrap()));
        if b.k() >= b.m() && b.m() >= 1 && b.k() < b.d() {
            prop_assert!(bianchi_sum(&p, BianchiVariant::Raise).unwrap().max_abs() < 1e-12);
        }
        if b.k() <= b.m() && b.k() >= 1 && b.m() < b.d() {
            prop_assert!(bianchi_sum(&p, BianchiVariant::Lower).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn projector_is_self_adjoint_and_commutes_with_involution(b in bidegree_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let metric = common::random_metric(b.d(), &mut rng);
        let psi = random_form(b, &mut rng);
        let eta = random_form(b, &mut rng);
        let lhs = project_bianchi(&psi).inner(&eta, &metric).unwrap();
        let rhs = psi.inner(&project_bianchi(&eta), &metric).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
        let a = involution(&project_bianchi(&psi));
        let c = project_bianchi(&involution(&psi));
        prop_assert!(close(a.coeffs(), c.coeffs(), 1e-12));
    }

    #[test]
    fn bianchi_duality_in_random_metrics(b in bidegree_strategy(), seed in any::<u64>()) {
        prop_assume!(b.m() >= 1 && b.k() < b.d());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let metric = common::random_metric(b.d(), &mut rng);
        let psi = random_form(b, &mut rng);
        let eta = random_form(b.shifted(1, -1).unwrap(), &mut rng);
        let lhs = bianchi_sum(&psi, BianchiVariant::Raise).unwrap().inner(&eta, &metric).unwrap();
        let rhs = psi.inner(&bianchi_sum(&eta, BianchiVariant::Lower).unwrap(), &metric).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
    }
}
