use std::f64::consts::PI;
use std::sync::Arc;

use evalexpr::{ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use super::grid::{Axis, Side};
use super::GeometryError;

pub const MIN_RESOLUTION: usize = 8;
pub const ANNULUS_INNER: f64 = 1.0;
pub const ANNULUS_OUTER: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    /// `[0,1]^d`.
    Box,
    /// `(r, θ) ∈ [1,2] × [0,2π)`, periodic in `θ`.
    Annulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Flat,
    /// `dr² + r²dθ²`; only on the annulus.
    Polar,
    /// `e^{2φ}δ` with `φ` from `phi_expression`.
    Conformal,
    /// `Σ g_aa(x) (dx^a)²` with entries from `diagonal_metric`.
    Diagonal,
}

/// Domain description as read from a config file. Expressions use the
/// variables `x1, x2, x3` and evalexpr syntax (`math::exp`, `math::sin`, …).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub chart: ChartKind,
    #[serde(default = "default_dim")]
    pub d: usize,
    /// Cells per axis; bounded axes carry `n+1` nodes.
    pub n: usize,
    pub metric: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_expression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_metric: Option<Vec<String>>,
    /// Strength `c` of the constant `so(3)` connection `ω = c Σ_a L_a dx^a`
    /// used by the twisted de Rham chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twist_strength: Option<f64>,
}

fn default_dim() -> usize {
    2
}

impl DomainSpec {
    pub fn flat_box(d: usize, n: usize) -> Self {
        DomainSpec {
            chart: ChartKind::Box,
            d,
            n,
            metric: MetricKind::Flat,
            phi_expression: None,
            diagonal_metric: None,
            twist_strength: None,
        }
    }

    pub fn annulus(n: usize) -> Self {
        DomainSpec { chart: ChartKind::Annulus, metric: MetricKind::Polar, ..Self::flat_box(2, n) }
    }

    pub fn conformal_box(d: usize, n: usize, phi: &str) -> Self {
        DomainSpec { metric: MetricKind::Conformal, phi_expression: Some(phi.to_string()), ..Self::flat_box(d, n) }
    }

    pub fn with_twist(mut self, strength: f64) -> Self {
        self.twist_strength = Some(strength);
        self
    }
}

/// Diagonal metric entries `g_aa(x)`.
pub type MetricFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A structured grid with a diagonal metric.
#[derive(Clone)]
pub struct Grid {
    pub axes: Vec<Axis>,
    metric: MetricFn,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("axes", &self.axes).finish_non_exhaustive()
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>, metric: MetricFn) -> Self {
        Grid { axes, metric }
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn metric_diag(&self, x: &[f64]) -> Vec<f64> {
        (self.metric)(x)
    }

    pub fn sqrt_det(&self, x: &[f64]) -> f64 {
        self.metric_diag(x).iter().product::<f64>().sqrt()
    }

    /// `∂_c g_bb` at `x`: central difference with the grid step, one-sided
    /// second order where a central stencil would leave a bounded axis.
    pub fn metric_derivative(&self, x: &[f64], c: usize) -> Vec<f64> {
        let ax = &self.axes[c];
        let h = ax.h();
        let at = |s: f64| {
            let mut y = x.to_vec();
            y[c] += s;
            self.metric_diag(&y)
        };
        let tol = 1e-12 * ax.length;
        let central = ax.periodic || (x[c] - h >= ax.start - tol && x[c] + h <= ax.end() + tol);
        if central {
            let (p, m) = (at(h), at(-h));
            return p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        }
        let s = if x[c] - h < ax.start - tol { 1.0 } else { -1.0 };
        let (f0, f1, f2) = (at(0.0), at(s * h), at(2.0 * s * h));
        (0..f0.len()).map(|b| s * (-3.0 * f0[b] + 4.0 * f1[b] - f2[b]) / (2.0 * h)).collect()
    }

    /// Christoffel symbols `Γ^c_{ab}` stored at `[c*d*d + a*d + b]`.
    pub fn christoffel(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d();
        let g = self.metric_diag(x);
        let dg: Vec<Vec<f64>> = (0..d).map(|c| self.metric_derivative(x, c)).collect();
        let mut out = vec![0.0; d * d * d];
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    // ½ g^{cc} (∂_a g_cb + ∂_b g_ca − ∂_c g_ab), diagonal g
                    let mut s = 0.0;
                    if c == b {
                        s += dg[a][c];
                    }
                    if c == a {
                        s += dg[b][c];
                    }
                    if a == b {
                        s -= dg[c][a];
                    }
                    out[c * d * d + a * d + b] = 0.5 * s / g[c];
                }
            }
        }
        out
    }

    /// `R^a_{bcd}` stored at `[((a*d + b)*d + c)*d + e]`, from finite differences of `Γ`.
    pub fn riemann(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d();
        let gam = self.christoffel(x);
        let dgam: Vec<Vec<f64>> = (0..d).map(|c| self.christoffel_derivative(x, c)).collect();
        let idx = |c: usize, a: usize, b: usize| c * d * d + a * d + b;
        let mut out = vec![0.0; d * d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        let mut r = dgam[c][idx(a, e, b)] - dgam[e][idx(a, c, b)];
                        for f in 0..d {
                            r += gam[idx(a, c, f)] * gam[idx(f, e, b)] - gam[idx(a, e, f)] * gam[idx(f, c, b)];
                        }
                        out[((a * d + b) * d + c) * d + e] = r;
                    }
                }
            }
        }
        out
    }

    fn christoffel_derivative(&self, x: &[f64], c: usize) -> Vec<f64> {
        let ax = &self.axes[c];
        let h = ax.h();
        let at = |s: f64| {
            let mut y = x.to_vec();
            y[c] += s;
            self.christoffel(&y)
        };
        let tol = 1e-12 * ax.length;
        if ax.periodic || (x[c] - h >= ax.start - tol && x[c] + h <= ax.end() + tol) {
            let (p, m) = (at(h), at(-h));
            return p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        }
        let s = if x[c] - h < ax.start - tol { 1.0 } else { -1.0 };
        let (f0, f1, f2) = (at(0.0), at(s * h), at(2.0 * s * h));
        (0..f0.len()).map(|i| s * (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2.0 * h)).collect()
    }

    /// Coordinates of every point of a component with multiplicities `mu`, axis 0 slowest.
    pub fn points(&self, mu: &[usize]) -> Vec<Vec<f64>> {
        let counts: Vec<usize> = self.axes.iter().zip(mu).map(|(ax, &m)| ax.count(m)).collect();
        let total: usize = counts.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.d()];
        for _ in 0..total {
            out.push(idx.iter().enumerate().map(|(a, &i)| self.axes[a].position(mu[a], i)).collect());
            for a in (0..self.d()).rev() {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    pub fn point_count(&self, mu: &[usize]) -> usize {
        self.axes.iter().zip(mu).map(|(ax, &m)| ax.count(m)).product()
    }
}

/// One boundary face: a bounded axis held at one of its ends.
#[derive(Clone, Debug)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
    /// The face as a `(d−1)`-dimensional grid with the induced metric.
    pub grid: Grid,
}

impl Face {
    /// Ambient coordinates of a face point.
    pub fn embed(&self, y: &[f64], value: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(y.len() + 1);
        x.extend_from_slice(&y[..self.axis]);
        x.push(value);
        x.extend_from_slice(&y[self.axis..]);
        x
    }

    /// Face axis of ambient axis `b ≠ axis`.
    pub fn face_axis(&self, b: usize) -> usize {
        if b < self.axis {
            b
        } else {
            b - 1
        }
    }
}

/// Constant `so(3)` connection on the trivial rank-3 bundle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub strength: f64,
}

pub const TWIST_RANK: usize = 3;

impl Twist {
    /// `ω_a = c·L_a` with `(L_a)_{ij} = −ε_{aij}` (zero for `a ≥ 3`).
    pub fn omega(&self, a: usize) -> [[f64; 3]; 3] {
        let mut l = [[0.0; 3]; 3];
        if a < 3 {
            for (i, row) in l.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = -self.strength * levi_civita(a, i, j);
                }
            }
        }
        l
    }

    /// Curvature `R_{ab} = [ω_a, ω_b]`.
    pub fn curvature(&self, a: usize, b: usize) -> [[f64; 3]; 3] {
        let (wa, wb) = (self.omega(a), self.omega(b));
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    r[i][j] += wa[i][k] * wb[k][j] - wb[i][k] * wa[k][j];
                }
            }
        }
        r
    }
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Connection data sampled at the nodes (multiplicity zero on every axis).
#[derive(Clone, Debug)]
pub struct ConnectionData {
    pub nodes: Vec<Vec<f64>>,
    /// `Γ^c_{ab}` per node, layout as in [`Grid::christoffel`].
    pub christoffel: Vec<Vec<f64>>,
    /// `R^a_{bcd}` per node, layout as in [`Grid::riemann`].
    pub riemann: Vec<Vec<f64>>,
    pub twist: Option<Twist>,
}

impl ConnectionData {
    pub fn max_abs_riemann(&self) -> f64 {
        self.riemann.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest violation of `Γ^c_{ab} = Γ^c_{ba}`.
    pub fn max_torsion(&self, d: usize) -> f64 {
        let mut worst = 0.0f64;
        for g in &self.christoffel {
            for c in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        worst = worst.max((g[c * d * d + a * d + b] - g[c * d * d + b * d + a]).abs());
                    }
                }
            }
        }
        worst
    }
}

/// A built domain: grid, faces and connection.
#[derive(Clone, Debug)]
pub struct Domain {
    pub spec: DomainSpec,
    pub grid: Grid,
    pub faces: Vec<Face>,
    pub connection: ConnectionData,
}

impl Domain {
    pub fn d(&self) -> usize {
        self.grid.d()
    }

    pub fn twist(&self) -> Option<Twist> {
        self.connection.twist
    }

    /// Gauss curvature `R_{1212}/det g` at node `i` (two-dimensional domains).
    pub fn gauss_curvature(&self, node: usize) -> Option<f64> {
        if self.d() != 2 {
            return None;
        }
        let x = &self.connection.nodes[node];
        let g = self.grid.metric_diag(x);
        let r = &self.connection.riemann[node];
        // R^0_{101} lowered with g_00
        let r0101 = g[0] * r[((0 * 2 + 1) * 2) * 2 + 1];
        Some(r0101 / (g[0] * g[1]))
    }
}

pub fn build_domain(spec: &DomainSpec) -> Result<Domain, GeometryError> {
    if spec.n < MIN_RESOLUTION {
        return Err(GeometryError::Resolution(spec.n));
    }
    let d = spec.d;
    let (axes, metric): (Vec<Axis>, MetricFn) = match spec.chart {
        ChartKind::Box => {
            if !(2..=3).contains(&d) {
                return Err(GeometryError::Dimension(d));
            }
            let axes = (0..d).map(|_| Axis::bounded(0.0, 1.0, spec.n)).collect();
            let metric = match spec.metric {
                MetricKind::Flat => flat_metric(d),
                MetricKind::Polar => return Err(GeometryError::MetricChart("polar", "box")),
                MetricKind::Conformal => conformal_metric(d, spec.phi_expression.as_deref())?,
                MetricKind::Diagonal => diagonal_metric(d, spec.diagonal_metric.as_deref())?,
            };
            (axes, metric)
        }
        ChartKind::Annulus => {
            if d != 2 {
                return Err(GeometryError::Dimension(d));
            }
            let axes = vec![
                Axis::bounded(ANNULUS_INNER, ANNULUS_OUTER, spec.n),
                Axis::periodic(0.0, 2.0 * PI, spec.n),
            ];
            let metric = match spec.metric {
                // the flat metric written in the polar chart
                MetricKind::Flat | MetricKind::Polar => Arc::new(|x: &[f64]| vec![1.0, x[0] * x[0]]) as MetricFn,
                MetricKind::Conformal => return Err(GeometryError::MetricChart("conformal", "annulus")),
                MetricKind::Diagonal => diagonal_metric(d, spec.diagonal_metric.as_deref())?,
            };
            (axes, metric)
        }
    };
    let grid = Grid::new(axes, metric);

    let nodes = grid.points(&vec![0; d]);
    for x in &nodes {
        let g = grid.metric_diag(x);
        if g.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(GeometryError::NotPositive { point: x.clone(), entries: g });
        }
    }

    let mut faces = Vec::new();
    for (a, ax) in grid.axes.iter().enumerate() {
        if ax.periodic {
            continue;
        }
        for side in [Side::Low, Side::High] {
            let value = ax.boundary_coordinate(side);
            let parent = grid.metric.clone();
            let face_axes: Vec<Axis> =
                grid.axes.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, x)| x.clone()).collect();
            let metric: MetricFn = Arc::new(move |y: &[f64]| {
                let mut x = y.to_vec();
                x.insert(a, value);
                let mut g = parent(&x);
                g.remove(a);
                g
            });
            faces.push(Face { axis: a, side, grid: Grid::new(face_axes, metric) });
        }
    }

    let christoffel = nodes.iter().map(|x| grid.christoffel(x)).collect();
    let riemann = nodes.iter().map(|x| grid.riemann(x)).collect();
    let twist = spec.twist_strength.map(|strength| Twist { strength });
    Ok(Domain {
        spec: spec.clone(),
        grid,
        faces,
        connection: ConnectionData { nodes, christoffel, riemann, twist },
    })
}

fn flat_metric(d: usize) -> MetricFn {
    Arc::new(move |_x: &[f64]| vec![1.0; d])
}

fn parse(expr: &str) -> Result<Node<DefaultNumericTypes>, GeometryError> {
    evalexpr::build_operator_tree::<DefaultNumericTypes>(expr)
        .map_err(|e| GeometryError::Expression { expr: expr.to_string(), message: e.to_string() })
}

/// Evaluates a parsed expression at a point; evaluation failures become NaN,
/// which the positivity check then reports with the point.
fn evaluate(node: &Node<DefaultNumericTypes>, x: &[f64]) -> f64 {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    for (i, &v) in x.iter().enumerate() {
        let _ = ctx.set_value(format!("x{}", i + 1), Value::Float(v));
    }
    node.eval_number_with_context(&ctx).unwrap_or(f64::NAN)
}

fn check_expression(node: &Node<DefaultNumericTypes>, expr: &str, d: usize) -> Result<(), GeometryError> {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    for i in 0..d {
        let _ = ctx.set_value(format!("x{}", i + 1), Value::Float(0.5));
    }
    node.eval_number_with_context(&ctx)
        .map(|_| ())
        .map_err(|e| GeometryError::Expression { expr: expr.to_string(), message: e.to_string() })
}

fn conformal_metric(d: usize, phi: Option<&str>) -> Result<MetricFn, GeometryError> {
    let phi = phi.ok_or(GeometryError::MissingField("phi_expression"))?;
    let node = parse(phi)?;
    check_expression(&node, phi, d)?;
    Ok(Arc::new(move |x: &[f64]| {
        let f = (2.0 * evaluate(&node, x)).exp();
        vec![f; d]
    }))
}

fn diagonal_metric(d: usize, entries: Option<&[String]>) -> Result<MetricFn, GeometryError> {
    let entries = entries.ok_or(GeometryError::MissingField("diagonal_metric"))?;
    if entries.len() != d {
        return Err(GeometryError::DiagonalLength { expected: d, got: entries.len() });
    }
    let nodes = entries
        .iter()
        .map(|e| {
            let n = parse(e)?;
            check_expression(&n, e, d)?;
            Ok(n)
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    Ok(Arc::new(move |x: &[f64]| nodes.iter().map(|n| evaluate(n, x)).collect()))
}
