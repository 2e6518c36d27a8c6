//! Independent oracles shared by the integration tests.
//!
//! Double forms are evaluated as multilinear functions of two groups of
//! vectors, `ψ(v_1..v_k ; w_1..w_m) = Σ ψ_{IJ} det V[I] det W[J]`, which gives
//! reference values without touching the shuffle-sign tables of the crate.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use precomplex::fiber_algebra::{combinations, Bidegree, MetricAtPoint};
use rand::Rng;

/// All permutations of `0..n` with their signs.
pub fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out.into_iter()
        .map(|p| {
            let mut inv = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if p[i] > p[j] {
                        inv += 1;
                    }
                }
            }
            (p, if inv % 2 == 0 { 1.0 } else { -1.0 })
        })
        .collect()
}

fn minor(vs: &[DVector<f64>], rows: &[usize]) -> f64 {
    let k = rows.len();
    if k == 0 {
        return 1.0;
    }
    DMatrix::from_fn(k, k, |r, c| vs[c][rows[r]]).determinant()
}

/// Evaluate a double form on `(v; w)`.
pub fn eval(b: Bidegree, coeffs: &DVector<f64>, vs: &[DVector<f64>], ws: &[DVector<f64>]) -> f64 {
    assert_eq!(vs.len(), b.k());
    assert_eq!(ws.len(), b.m());
    let mut total = 0.0;
    let mut p = 0;
    for i in combinations(b.d(), b.k()) {
        let mi = minor(vs, &i.indices());
        for j in combinations(b.d(), b.m()) {
            total += coeffs[p] * mi * minor(ws, &j.indices());
            p += 1;
        }
    }
    total
}

pub fn unit(d: usize, a: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[a] = 1.0;
    e
}

/// Coefficients of the multilinear function `f` in the coordinate basis.
pub fn coefficients(b: Bidegree, f: impl Fn(&[DVector<f64>], &[DVector<f64>]) -> f64) -> DVector<f64> {
    let d = b.d();
    let mut out = Vec::new();
    for i in combinations(d, b.k()) {
        let vs: Vec<_> = i.indices().into_iter().map(|a| unit(d, a)).collect();
        for j in combinations(d, b.m()) {
            let ws: Vec<_> = j.indices().into_iter().map(|a| unit(d, a)).collect();
            out.push(f(&vs, &ws));
        }
    }
    DVector::from_vec(out)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product()
}

/// Wedge through the alternation formula on both groups.
pub fn wedge(bp: Bidegree, p: &DVector<f64>, be: Bidegree, e: &DVector<f64>) -> (Bidegree, DVector<f64>) {
    let (k, l, m, n) = (bp.k(), be.k(), bp.m(), be.m());
    let out = Bidegree::new(bp.d(), k + l, m + n).unwrap();
    let perms_v = permutations(k + l);
    let perms_w = permutations(m + n);
    let norm = factorial(k) * factorial(l) * factorial(m) * factorial(n);
    let c = coefficients(out, |vs, ws| {
        let mut total = 0.0;
        for (sv, sgn_v) in &perms_v {
            let v1: Vec<_> = sv[..k].iter().map(|&i| vs[i].clone()).collect();
            let v2: Vec<_> = sv[k..].iter().map(|&i| vs[i].clone()).collect();
            for (sw, sgn_w) in &perms_w {
                let w1: Vec<_> = sw[..m].iter().map(|&i| ws[i].clone()).collect();
                let w2: Vec<_> = sw[m..].iter().map(|&i| ws[i].clone()).collect();
                total += sgn_v * sgn_w * eval(bp, p, &v1, &w1) * eval(be, e, &v2, &w2);
            }
        }
        total / norm
    });
    (out, c)
}

/// `i_X` (form group) or `i_X^V` (vector group) by inserting `X` first.
pub fn interior(b: Bidegree, p: &DVector<f64>, x: &DVector<f64>, vector_slot: bool) -> (Bidegree, DVector<f64>) {
    let out = if vector_slot { Bidegree::new(b.d(), b.k(), b.m() - 1) } else { Bidegree::new(b.d(), b.k() - 1, b.m()) }.unwrap();
    let c = coefficients(out, |vs, ws| {
        if vector_slot {
            let mut w = vec![x.clone()];
            w.extend_from_slice(ws);
            eval(b, p, vs, &w)
        } else {
            let mut v = vec![x.clone()];
            v.extend_from_slice(vs);
            eval(b, p, &v, ws)
        }
    });
    (out, c)
}

/// The coframe covector `ϑ^i` as a `(1,0)` coefficient vector.
pub fn coframe_covector(metric: &MetricAtPoint, i: usize) -> DVector<f64> {
    metric.coframe().row(i).transpose()
}

/// `𝔊ψ = Σ_i ϑ^i ∧ i^V_{E_i} ψ` in the orthonormal frame of `metric`.
pub fn bianchi(b: Bidegree, p: &DVector<f64>, metric: &MetricAtPoint) -> (Bidegree, DVector<f64>) {
    let d = b.d();
    let frame = metric.frame();
    let cov = Bidegree::new(d, 1, 0).unwrap();
    let out = Bidegree::new(d, b.k() + 1, b.m() - 1).unwrap();
    let mut total = DVector::zeros(out.dim());
    for i in 0..d {
        let e_i = frame.column(i).into_owned();
        let (bi, inner) = interior(b, p, &e_i, true);
        let (_, w) = wedge(cov, &coframe_covector(metric, i), bi, &inner);
        total += w;
    }
    (out, total)
}

/// Swap the two groups.
pub fn transpose(b: Bidegree, p: &DVector<f64>) -> (Bidegree, DVector<f64>) {
    let out = b.transpose();
    (out, coefficients(out, |vs, ws| eval(b, p, ws, vs)))
}

/// `tr_g ψ = Σ_i ψ(E_i, · ; E_i, ·)`.
pub fn trace(b: Bidegree, p: &DVector<f64>, metric: &MetricAtPoint) -> (Bidegree, DVector<f64>) {
    let frame = metric.frame();
    let out = Bidegree::new(b.d(), b.k() - 1, b.m() - 1).unwrap();
    let c = coefficients(out, |vs, ws| {
        (0..b.d())
            .map(|i| {
                let e = frame.column(i).into_owned();
                let mut v = vec![e.clone()];
                v.extend_from_slice(vs);
                let mut w = vec![e];
                w.extend_from_slice(ws);
                eval(b, p, &v, &w)
            })
            .sum()
    });
    (out, c)
}

/// Fiber inner product as the sum over increasing frame multi-indices.
pub fn inner(b: Bidegree, p: &DVector<f64>, q: &DVector<f64>, metric: &MetricAtPoint) -> f64 {
    let frame = metric.frame();
    let d = b.d();
    let col = |a: usize| frame.column(a).into_owned();
    let mut total = 0.0;
    for i in combinations(d, b.k()) {
        let vs: Vec<_> = i.indices().into_iter().map(col).collect();
        for j in combinations(d, b.m()) {
            let ws: Vec<_> = j.indices().into_iter().map(col).collect();
            total += eval(b, p, &vs, &ws) * eval(b, q, &vs, &ws);
        }
    }
    total
}

/// Hodge star on `(k,0)` forms, solved from `α ∧ ⋆β = ⟨α,β⟩ Vol` over all basis `α`.
pub fn hodge_forms(b: Bidegree, beta: &DVector<f64>, metric: &MetricAtPoint) -> DVector<f64> {
    let d = b.d();
    let target = Bidegree::new(d, d - b.k(), 0).unwrap();
    let vol = metric.sqrt_det();
    let n = b.dim();
    let mut lhs = DMatrix::zeros(n, target.dim());
    let mut rhs = DVector::zeros(n);
    for r in 0..n {
        let alpha = unit(n, r);
        for c in 0..target.dim() {
            let (_, w) = wedge(b, &alpha, target, &unit(target.dim(), c));
            lhs[(r, c)] = w[0];
        }
        rhs[r] = inner(b, &alpha, beta, metric) * vol;
    }
    lhs.lu().solve(&rhs).expect("pairing is nondegenerate")
}

/// Orthogonal projector onto the kernel of the stacked matrices, by dense SVD.
pub fn kernel_projector(blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    if rows == 0 {
        return DMatrix::identity(n, n);
    }
    let mut a = DMatrix::zeros(rows, n);
    let mut r0 = 0;
    for b in blocks {
        a.rows_mut(r0, b.nrows()).copy_from(b);
        r0 += b.nrows();
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.unwrap();
    let top = svd.singular_values.max();
    let mut p = DMatrix::identity(n, n);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-10 * top.max(1e-300) {
            let v = vt.row(i).transpose();
            p -= &v * v.transpose();
        }
    }
    p
}

pub fn random_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_metric(d: usize, rng: &mut impl Rng) -> MetricAtPoint {
    let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6));
    let g = &b * b.transpose() + DMatrix::identity(d, d) * 0.4;
    MetricAtPoint::new((&g + g.transpose()) * 0.5).unwrap()
}
