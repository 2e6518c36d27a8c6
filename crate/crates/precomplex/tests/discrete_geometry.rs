mod common;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;
use precomplex::discrete_geometry::{
    assemble, build_domain, greens_residual, smooth_field, twisted_curvature, DomainSpec, FieldSpace, Layout,
    OperatorKind, TWIST_RANK,
};
use precomplex::fiber_algebra::{bianchi_sum, BianchiVariant, Bidegree, DoubleForm, MultiIndex};

fn norm_sparse(m: &CsrMatrix<f64>) -> f64 {
    m.values().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn product_max(a: &CsrMatrix<f64>, b: &CsrMatrix<f64>) -> f64 {
    norm_sparse(&(a * b))
}

#[test]
fn mass_totals_match_volume_and_area() {
    for d in [2, 3] {
        let dom = build_domain(&DomainSpec::flat_box(d, 8)).unwrap();
        let l = Layout::new(&dom, FieldSpace::forms(0, 0)).unwrap();
        let total: f64 = l.mass_diagonal(&dom).iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "box d={d}: {total}");
    }
    let dom = build_domain(&DomainSpec::annulus(16)).unwrap();
    let l = Layout::new(&dom, FieldSpace::forms(0, 0)).unwrap();
    let total: f64 = l.mass_diagonal(&dom).iter().sum();
    // trapezoid in r on a linear integrand is exact
    assert!((total - 3.0 * std::f64::consts::PI).abs() < 1e-12, "annulus: {total}");
}

#[test]
fn flat_derivatives_square_to_zero() {
    for d in [2, 3] {
        let dom = build_domain(&DomainSpec::flat_box(d, 8)).unwrap();
        for k in 0..d - 1 {
            for m in 0..=d {
                let s = FieldSpace::forms(k, m);
                let a = assemble(&dom, OperatorKind::D, s).unwrap();
                let b = assemble(&dom, OperatorKind::D, s.shifted(1, 0).unwrap()).unwrap();
                assert!(product_max(&b.matrix, &a.matrix) <= 1e-12, "d∘d on {s}");
                let s = FieldSpace::forms(m, k);
                let a = assemble(&dom, OperatorKind::DV, s).unwrap();
                let b = assemble(&dom, OperatorKind::DV, s.shifted(0, 1).unwrap()).unwrap();
                assert!(product_max(&b.matrix, &a.matrix) <= 1e-12, "d_V∘d_V on {s}");
            }
        }
        // d^G d^G on the Bianchi chains below the diagonal
        for k in 0..d - 1 {
            for m in 0..=k.min(d) {
                let s = FieldSpace::bianchi(k, m);
                let (Ok(a), Ok(b)) =
                    (assemble(&dom, OperatorKind::DG, s), assemble(&dom, OperatorKind::DG, s.shifted(1, 0).unwrap()))
                else {
                    continue;
                };
                assert!(product_max(&b.matrix, &a.matrix) <= 1e-12, "d_G∘d_G on {s}");
            }
        }
    }
}

#[test]
fn killing_field_is_annihilated() {
    let dom = build_domain(&DomainSpec::flat_box(2, 8)).unwrap();
    let s = FieldSpace::bianchi(0, 1);
    let op = assemble(&dom, OperatorKind::DG, s).unwrap();
    let l = Layout::new(&dom, s).unwrap();
    let e1 = MultiIndex::from_indices(&[0]);
    let psi = l.sample(&dom, |x, _form, vector, _| if vector == e1 { -x[1] } else { x[0] });
    let out = &op.matrix * &psi;
    assert!(out.amax() <= 1e-12, "{}", out.amax());
    // a non-Killing field is not annihilated
    let psi = l.sample(&dom, |x, _form, vector, _| if vector == e1 { x[1] } else { x[0] });
    assert!((&op.matrix * &psi).amax() > 0.5);
}

#[test]
fn hessian_of_quadratic() {
    let dom = build_domain(&DomainSpec::flat_box(2, 8)).unwrap();
    let s = FieldSpace::forms(0, 0);
    let op = assemble(&dom, OperatorKind::H, s).unwrap();
    let l = Layout::new(&dom, s).unwrap();
    let f = l.sample(&dom, |x, _, _, _| x[0] * x[0]);
    let hf = &op.matrix * &f;
    let t = Layout::new(&dom, op.target[0]).unwrap();
    let e0 = MultiIndex::from_indices(&[0]);
    let expected = t.sample(&dom, |_, form, vector, _| if form == e0 && vector == e0 { 2.0 } else { 0.0 });
    assert!((hf - expected).amax() <= 1e-10);
}

#[test]
fn restricted_values_satisfy_bianchi_identity() {
    let dom = build_domain(&DomainSpec::flat_box(3, 8)).unwrap();
    for (k, m) in [(1, 1), (2, 1), (2, 2), (1, 2)] {
        let s = FieldSpace::bianchi(k, m);
        let l = Layout::new(&dom, s).unwrap();
        let y = smooth_field(&dom, &l, 7);
        let full = l.extend(&y);
        let block = &l.blocks[0];
        let b = Bidegree::new(3, k, m).unwrap();
        let pairs = precomplex::fiber_algebra::basis_enumerate(b);
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for c in &block.components {
            if !classes.contains(&c.mu) {
                classes.push(c.mu.clone());
            }
        }
        for mu in classes {
            let len = dom.grid.point_count(&mu);
            for p in [0, len / 2, len - 1] {
                let form = DoubleForm::<f64>::from_fn(b, |i| {
                    let (fi, vi) = pairs[i];
                    block
                        .components
                        .iter()
                        .find(|c| c.form == fi && c.vector == vi && c.mu == mu)
                        .map_or(0.0, |c| full[c.offset + p])
                });
                let variant = if k >= m { BianchiVariant::Raise } else { BianchiVariant::Lower };
                let g = bianchi_sum(&form, variant).unwrap();
                assert!(g.max_abs() <= 1e-12, "({k},{m}) mu={mu:?}");
            }
        }
        // the image of the restricted derivative stays restricted
        if let Ok(op) = assemble(&dom, OperatorKind::DG, s) {
            let t = Layout::new(&dom, op.target[0]).unwrap();
            let image = t.extend(&(&op.matrix * &y));
            let back = t.extend(&t.restrict(&image));
            assert!((image - back).amax() <= 1e-12);
        }
    }
}

#[test]
fn curvature_of_polar_and_conformal_metrics() {
    let dom = build_domain(&DomainSpec::annulus(16)).unwrap();
    let worst = (0..dom.connection.nodes.len()).map(|i| dom.gauss_curvature(i).unwrap().abs()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "polar curvature {worst}");
    let mut errors = Vec::new();
    for n in [16, 32] {
        let dom = build_domain(&DomainSpec::conformal_box(2, n, "0.1*(x1*x1 + x2*x2)")).unwrap();
        let mut worst = 0.0f64;
        for (i, x) in dom.connection.nodes.iter().enumerate() {
            let phi = 0.1 * (x[0] * x[0] + x[1] * x[1]);
            let exact = -0.4 * (-2.0 * phi).exp();
            worst = worst.max((dom.gauss_curvature(i).unwrap() - exact).abs());
        }
        assert!(dom.connection.max_torsion(2) < 1e-14);
        errors.push(worst);
    }
    eprintln!("conformal {errors:?}");
    assert!(errors[0] < 2e-2 && errors[1] < 0.6 * errors[0], "{errors:?}");
}

#[test]
fn green_identity_converges_at_first_order() {
    let spec = DomainSpec::flat_box(2, 8);
    let r = greens_residual(&spec, OperatorKind::DG, FieldSpace::bianchi(0, 1), &[8, 16, 32], 11).unwrap();
    eprintln!("d_G: {:?} {:?}", r.residuals, r.ratios);
    for q in &r.ratios {
        assert!((1.5..=3.0).contains(q), "{:?}", r);
    }
    let r = greens_residual(&DomainSpec::annulus(8), OperatorKind::H, FieldSpace::forms(0, 0), &[8, 16, 32], 5).unwrap();
    eprintln!("H: {:?} {:?}", r.residuals, r.ratios);
    for q in &r.ratios {
        assert!((1.5..=3.0).contains(q), "{:?}", r);
    }
}

#[test]
fn twisted_square_equals_curvature_action() {
    for n in [8, 16, 32] {
        let dom = build_domain(&DomainSpec::flat_box(2, n).with_twist(1.0)).unwrap();
        let s = FieldSpace::twisted(0, TWIST_RANK);
        let a = assemble(&dom, OperatorKind::TwistedD, s).unwrap();
        let b = assemble(&dom, OperatorKind::TwistedD, s.shifted(1, 0).unwrap()).unwrap();
        let r = twisted_curvature(&dom, 0).unwrap();
        let l = Layout::new(&dom, s).unwrap();
        let psi = smooth_field(&dom, &l, 3);
        let defect: DVector<f64> = &b.matrix * (&a.matrix * &psi) - &r * &psi;
        // constant connection: the staggered interpolations commute, so the identity is exact
        assert!(defect.amax() <= 1e-10 * (&r * &psi).amax(), "n={n}");
    }
}

#[test]
fn malformed_domains_are_rejected() {
    assert!(build_domain(&DomainSpec::flat_box(2, 4)).is_err());
    assert!(build_domain(&DomainSpec::flat_box(4, 8)).is_err());
    assert!(build_domain(&DomainSpec::conformal_box(2, 8, "x1 +* 2")).is_err());
    assert!(build_domain(&DomainSpec::conformal_box(2, 8, "-10*x1")).is_ok());
    let mut spec = DomainSpec::flat_box(2, 8);
    spec.metric = precomplex::discrete_geometry::MetricKind::Diagonal;
    spec.diagonal_metric = Some(vec!["1".into(), "x1 - 0.5".into()]);
    assert!(build_domain(&spec).is_err());
}

#[test]
fn hessian_and_calabi_chains_are_flat_complexes() {
    for d in [2, 3] {
        let dom = build_domain(&DomainSpec::flat_box(d, 8)).unwrap();
        let h = assemble(&dom, OperatorKind::H, FieldSpace::forms(0, 0)).unwrap();
        let dg = assemble(&dom, OperatorKind::DG, FieldSpace::bianchi(1, 1)).unwrap();
        assert_eq!(h.target[0].k, 1);
        let restricted_h = assemble(&dom, OperatorKind::H, FieldSpace::bianchi(0, 0)).unwrap();
        assert!(product_max(&dg.matrix, &restricted_h.matrix) <= 1e-12, "d={d} Hessian chain");
        assert_eq!(restricted_h.nrows(), Layout::new(&dom, FieldSpace::bianchi(1, 1)).unwrap().len);
        let killing = assemble(&dom, OperatorKind::DG, FieldSpace::bianchi(0, 1)).unwrap();
        let linearized_curvature = assemble(&dom, OperatorKind::H, FieldSpace::bianchi(1, 1)).unwrap();
        assert!(product_max(&linearized_curvature.matrix, &killing.matrix) <= 1e-12, "d={d} Calabi chain");
        assert_eq!(h.matrix.ncols(), Layout::new(&dom, FieldSpace::forms(0, 0)).unwrap().len);
    }
}

#[test]
fn every_listed_operator_assembles_somewhere() {
    let dom = build_domain(&DomainSpec::flat_box(2, 8).with_twist(1.0)).unwrap();
    for kind in OperatorKind::ALL {
        let ok = (0..=2).any(|k| {
            (0..=2).any(|m| {
                let s = if matches!(kind, OperatorKind::TwistedD | OperatorKind::TwistedDelta) {
                    FieldSpace::twisted(k, TWIST_RANK)
                } else {
                    FieldSpace::forms(k, m)
                };
                assemble(&dom, kind, s).is_ok()
            })
        });
        assert!(ok, "{}", kind.name());
        assert_eq!(OperatorKind::parse(kind.name()), Some(kind));
    }
}

#[test]
fn normal_projection_of_exact_form_reads_normal_derivative() {
    // on the low x1 face the inward normal is +∂_1, on the high face −∂_1
    let dom = build_domain(&DomainSpec::flat_box(2, 16)).unwrap();
    let s = FieldSpace::forms(1, 0);
    let op = assemble(&dom, OperatorKind::Pnt, s).unwrap();
    let l = Layout::new(&dom, s).unwrap();
    let e0 = MultiIndex::from_indices(&[0]);
    let psi = l.sample(&dom, |_, form, _, _| if form == e0 { 1.0 } else { 0.0 });
    let out = &op.matrix * &psi;
    let t = Layout::new(&dom, op.target[0]).unwrap();
    for (fi, face) in dom.faces.iter().enumerate() {
        let range = t.block_offsets[fi]..t.block_offsets[fi] + t.blocks[fi].len;
        let expected = match (face.axis, face.side) {
            (0, precomplex::discrete_geometry::Side::Low) => 1.0,
            (0, precomplex::discrete_geometry::Side::High) => -1.0,
            _ => 0.0,
        };
        for i in range {
            assert!((out[i] - expected).abs() < 1e-14);
        }
    }
}

/// `‖d^G ω − Sym∇ω‖_M / ‖ω‖_{H¹}` for a smooth covector on a conformal box, with the
/// symmetrized covariant derivative evaluated from the analytic conformal factor.
fn killing_defect(n: usize) -> f64 {
    // g = e^{2φ}δ, φ = 0.3 x1 − 0.2 x2
    let grad_phi = [0.3, -0.2];
    let dom = build_domain(&DomainSpec::conformal_box(2, n, "0.3*x1 - 0.2*x2")).unwrap();
    let s = FieldSpace::bianchi(0, 1);
    let op = assemble(&dom, OperatorKind::DG, s).unwrap();
    let src = Layout::new(&dom, s).unwrap();
    let tgt = Layout::new(&dom, op.target[0]).unwrap();
    let omega = |x: &[f64], b: usize| if b == 0 { (2.0 * x[1]).sin() + x[0] * x[0] } else { (x[0] * x[1]).cos() };
    let d_omega = |x: &[f64], a: usize, b: usize| match (a, b) {
        (0, 0) => 2.0 * x[0],
        (1, 0) => 2.0 * (2.0 * x[1]).cos(),
        (0, 1) => -x[1] * (x[0] * x[1]).sin(),
        _ => -x[0] * (x[0] * x[1]).sin(),
    };
    let gamma = |c: usize, a: usize, b: usize| {
        let mut s = 0.0;
        if c == a {
            s += grad_phi[b];
        }
        if c == b {
            s += grad_phi[a];
        }
        if a == b {
            s -= grad_phi[c];
        }
        s
    };
    let index = |v: MultiIndex| v.indices()[0];
    let w = src.sample(&dom, |x, _, v, _| omega(x, index(v)));
    let want = tgt.sample(&dom, |x, f, v, _| {
        let (a, b) = (index(f), index(v));
        0.5 * (d_omega(x, a, b) + d_omega(x, b, a)) - (0..2).map(|c| gamma(c, a, b) * omega(x, c)).sum::<f64>()
    });
    let grad = tgt.sample(&dom, |x, f, v, _| d_omega(x, index(f), index(v)));
    let norm = |v: &DVector<f64>, m: &[f64]| v.iter().zip(m).map(|(a, w)| a * a * w).sum::<f64>().sqrt();
    let (ms, mt) = (src.mass_diagonal(&dom), tgt.mass_diagonal(&dom));
    let err = &op.matrix * &w - want;
    norm(&err, &mt) / (norm(&w, &ms).powi(2) + norm(&grad, &mt).powi(2)).sqrt()
}

#[test]
fn killing_operator_converges_to_symmetrized_derivative() {
    let errs: Vec<f64> = [8, 16, 32].iter().map(|&n| killing_defect(n)).collect();
    eprintln!("{errs:?}");
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 0.8, "{errs:?}");
    }
}
