use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SymbolError;
use crate::fiber_algebra::{bianchi_projector, sum_exterior, Bidegree, FiberMap, MetricAtPoint, Slot};
use crate::linalg;
use crate::Complex64;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// Operators whose principal symbols are available.
///
/// The first group are interior operators, the `P*` and `T*` entries boundary
/// operators, and `BG`, `BGStar`, `BH`, `BHStar` the stacked boundary systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolOp {
    D,
    DV,
    Delta,
    DeltaV,
    DG,
    DeltaG,
    H,
    HStar,
    Ptt,
    Ptn,
    Pnt,
    Pnn,
    PtnG,
    PntG,
    T,
    TStar,
    BG,
    BGStar,
    BH,
    BHStar,
}

impl SymbolOp {
    /// Expansion into elementary blocks with scalar prefactors.
    fn blocks(self) -> Vec<(SymbolOp, f64)> {
        use SymbolOp::*;
        match self {
            BG => vec![(Ptt, 1.0), (PtnG, 1.0)],
            BGStar => vec![(PntG, 1.0), (Pnn, 1.0)],
            BH => vec![(Ptt, 1.0), (T, -1.0)],
            BHStar => vec![(TStar, 1.0), (Pnn, 1.0)],
            other => vec![(other, 1.0)],
        }
    }

    fn is_composite(self) -> bool {
        matches!(self, SymbolOp::BG | SymbolOp::BGStar | SymbolOp::BH | SymbolOp::BHStar)
    }

    /// Differential order of an elementary operator.
    pub fn order(self) -> usize {
        use SymbolOp::*;
        match self {
            H | HStar => 2,
            Ptt | Ptn | Pnt | Pnn | PtnG | PntG => 0,
            BG | BGStar => 0,
            _ => 1,
        }
    }

    pub fn is_boundary(self) -> bool {
        use SymbolOp::*;
        matches!(self, Ptt | Ptn | Pnt | Pnn | PtnG | PntG | T | TStar | BG | BGStar | BH | BHStar)
    }

    fn shift(self) -> (isize, isize) {
        use SymbolOp::*;
        match self {
            D | DG => (1, 0),
            DV => (0, 1),
            Delta | DeltaG | Pnt | PntG => (-1, 0),
            DeltaV | Ptn | PtnG => (0, -1),
            H => (1, 1),
            HStar | Pnn | TStar => (-1, -1),
            Ptt | T => (0, 0),
            BG | BGStar | BH | BHStar => unreachable!("composite"),
        }
    }

    pub fn target(self, source: Bidegree) -> Option<Bidegree> {
        let (dk, dm) = self.shift();
        source.shifted(dk, dm)
    }

    pub fn name(self) -> &'static str {
        use SymbolOp::*;
        match self {
            D => "d",
            DV => "d_V",
            Delta => "delta",
            DeltaV => "delta_V",
            DG => "d^G",
            DeltaG => "delta^G",
            H => "H",
            HStar => "H*",
            Ptt => "P^tt",
            Ptn => "P^tn",
            Pnt => "P^nt",
            Pnn => "P^nn",
            PtnG => "P^tn_G",
            PntG => "P^nt_G",
            T => "T",
            TStar => "T*",
            BG => "B_G",
            BGStar => "B_G*",
            BH => "B_H",
            BHStar => "B_H*",
        }
    }
}

/// Subspace of the source fiber on which a family acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    Full,
    Bianchi,
    /// `ψ^T = ψ`, only for `k = m`.
    Symmetric,
}

/// Cotangent data at which a symbol is evaluated, in orthonormal-frame components.
///
/// `zeta` replaces the derivative, `tangential` the derivative along the boundary
/// (used by boundary operators built from boundary derivatives) and `normal` is the
/// inward unit conormal.
#[derive(Clone, Debug)]
pub struct CotangentPoint {
    pub zeta: Vec<C>,
    pub tangential: Vec<C>,
    pub normal: Vec<f64>,
}

impl CotangentPoint {
    /// Interior evaluation at a real frame covector: `ζ = ıξ`.
    pub fn interior(xi: &[f64]) -> Self {
        let d = xi.len();
        let mut normal = vec![0.0; d];
        normal[d - 1] = 1.0;
        CotangentPoint { zeta: xi.iter().map(|&x| I * x).collect(), tangential: vec![C::new(0.0, 0.0); d], normal }
    }
}

/// Boundary-adapted cotangent split `ξ = ξ′ + λ·ν` in the orthonormal frame.
#[derive(Clone, Debug, Serialize)]
pub struct BoundarySplit {
    tangential: Vec<f64>,
    normal: Vec<f64>,
}

impl BoundarySplit {
    /// From coordinate covectors; `ξ′` is projected orthogonally to the conormal and
    /// both are normalised in `g`.
    pub fn new(metric: &MetricAtPoint, xi_prime: &[f64], conormal: &[f64]) -> Result<Self, SymbolError> {
        let to_frame = |v: &[f64]| metric.covector_to_frame(&DVector::from_column_slice(v));
        Self::from_frame(to_frame(xi_prime).as_slice(), to_frame(conormal).as_slice())
    }

    pub fn from_frame(tangential: &[f64], normal: &[f64]) -> Result<Self, SymbolError> {
        let n = DVector::from_column_slice(normal);
        let nn = n.norm();
        if nn == 0.0 || tangential.len() != normal.len() {
            return Err(SymbolError::DegenerateSplit);
        }
        let n = n / nn;
        let t = DVector::from_column_slice(tangential);
        let t = &t - &n * n.dot(&t);
        let tn = t.norm();
        if tn < 1e-12 {
            return Err(SymbolError::DegenerateSplit);
        }
        Ok(BoundarySplit { tangential: (t / tn).as_slice().to_vec(), normal: n.as_slice().to_vec() })
    }

    pub fn tangential(&self) -> &[f64] {
        &self.tangential
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    /// `ζ = ıξ′ + λν`.
    pub fn point(&self, lambda: C) -> CotangentPoint {
        let zeta = self.tangential.iter().zip(&self.normal).map(|(&t, &n)| I * t + lambda * n).collect();
        CotangentPoint { zeta, tangential: self.tangential.iter().map(|&t| I * t).collect(), normal: self.normal.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct SymbolBlock {
    pub op: SymbolOp,
    pub scale: f64,
    pub target: Bidegree,
}

/// Stacked principal symbols sharing a source slot, as matrices on orthonormal-frame
/// coefficients. Factors `ı^r` are kept implicitly by evaluating at `ζ = ıξ`.
#[derive(Clone, Debug)]
pub struct SymbolFamily {
    source: Bidegree,
    restriction: Restriction,
    basis: DMatrix<C>,
    blocks: Vec<SymbolBlock>,
    metric: MetricAtPoint,
    projectors: Vec<(Bidegree, DMatrix<C>)>,
}

/// Principal symbol of `op` on `source` anchored at `metric`.
pub fn build_symbol(op: SymbolOp, source: Bidegree, metric: &MetricAtPoint) -> Result<SymbolFamily, SymbolError> {
    if metric.dim() != source.d() {
        return Err(SymbolError::DimensionMismatch(metric.dim(), source.d()));
    }
    let mut blocks = Vec::new();
    for (elem, scale) in op.blocks() {
        match elem.target(source) {
            Some(target) => blocks.push(SymbolBlock { op: elem, scale, target }),
            None if op.is_composite() => {}
            None => return Err(SymbolError::Unsupported { op: op.name(), bidegree: source }),
        }
    }
    let n = source.dim();
    let mut family = SymbolFamily {
        source,
        restriction: Restriction::Full,
        basis: DMatrix::identity(n, n),
        blocks,
        metric: metric.clone(),
        projectors: Vec::new(),
    };
    family.cache_projectors();
    Ok(family)
}

impl SymbolFamily {
    pub fn source(&self) -> Bidegree {
        self.source
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn blocks(&self) -> &[SymbolBlock] {
        &self.blocks
    }

    pub fn metric(&self) -> &MetricAtPoint {
        &self.metric
    }

    /// Orthonormal basis (columns, ambient coefficients) of the restricted source.
    pub fn basis(&self) -> &DMatrix<C> {
        &self.basis
    }

    /// Dimension of the restricted source.
    pub fn fiber_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rows(&self) -> usize {
        self.blocks.iter().map(|b| b.target.dim()).sum()
    }

    pub fn max_order(&self) -> usize {
        self.blocks.iter().map(|b| b.op.order()).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Row range and order of every block in the stacked matrix.
    pub fn block_rows(&self) -> Vec<(usize, usize, usize)> {
        let mut r0 = 0;
        self.blocks
            .iter()
            .map(|b| {
                let out = (r0, b.target.dim(), b.op.order());
                r0 += b.target.dim();
                out
            })
            .collect()
    }

    pub fn restrict(mut self, restriction: Restriction) -> Result<Self, SymbolError> {
        let b = self.source;
        let n = b.dim();
        self.basis = match restriction {
            Restriction::Full => DMatrix::identity(n, n),
            Restriction::Bianchi => linalg::projector_range(bianchi_projector::<C>(b).matrix()),
            Restriction::Symmetric => {
                if b.k() != b.m() {
                    return Err(SymbolError::NotSymmetricSlot(b));
                }
                let t = FiberMap::<C>::involution(b).into_matrix();
                let sym = (DMatrix::<C>::identity(n, n) + t) * C::new(0.5, 0.0);
                linalg::projector_range(&sym)
            }
        };
        self.restriction = restriction;
        Ok(self)
    }

    /// Append the blocks of `other`, which must share source and metric.
    pub fn stack(mut self, other: &SymbolFamily) -> Result<Self, SymbolError> {
        if other.source != self.source {
            return Err(SymbolError::SourceMismatch(self.source, other.source));
        }
        self.blocks.extend(other.blocks.iter().cloned());
        self.cache_projectors();
        Ok(self)
    }

    fn cache_projectors(&mut self) {
        let mut needed: Vec<Bidegree> = Vec::new();
        for b in &self.blocks {
            if matches!(b.op, SymbolOp::DG | SymbolOp::DeltaG | SymbolOp::PtnG | SymbolOp::PntG) && !needed.contains(&b.target) {
                needed.push(b.target);
            }
        }
        for t in needed {
            if !self.projectors.iter().any(|(b, _)| *b == t) {
                self.projectors.push((t, bianchi_projector::<C>(t).into_matrix()));
            }
        }
    }

    fn projector(&self, b: Bidegree) -> &DMatrix<C> {
        &self.projectors.iter().find(|(t, _)| *t == b).expect("cached at construction").1
    }

    /// Stacked symbol matrix on the restricted source.
    pub fn evaluate(&self, point: &CotangentPoint) -> DMatrix<C> {
        let blocks = self.evaluate_blocks(point);
        let refs: Vec<&DMatrix<C>> = blocks.iter().collect();
        if refs.is_empty() {
            return DMatrix::zeros(0, self.fiber_dim());
        }
        linalg::vstack(&refs)
    }

    pub fn evaluate_blocks(&self, point: &CotangentPoint) -> Vec<DMatrix<C>> {
        let ops = Ops { point };
        self.blocks
            .iter()
            .map(|blk| {
                let ambient = self.elementary(&ops, blk);
                ambient * &self.basis * C::new(blk.scale, 0.0)
            })
            .collect()
    }

    /// Evaluation at a real coordinate covector `ξ`.
    pub fn at_covector(&self, xi: &[f64]) -> DMatrix<C> {
        let frame = self.metric.covector_to_frame(&DVector::from_column_slice(xi));
        self.evaluate(&CotangentPoint::interior(frame.as_slice()))
    }

    /// Coefficients `[A_0, A_1, A_2]` of the stacked symbol as a polynomial in `λ`
    /// along the boundary split, recovered by polarization (all orders are at most two).
    pub fn lambda_coefficients(&self, split: &BoundarySplit) -> [DMatrix<C>; 3] {
        let p0 = self.evaluate(&split.point(C::new(0.0, 0.0)));
        let p1 = self.evaluate(&split.point(C::new(1.0, 0.0)));
        let pm = self.evaluate(&split.point(C::new(-1.0, 0.0)));
        let half = C::new(0.5, 0.0);
        let c1 = (&p1 - &pm) * half;
        let c2 = (&p1 + &pm) * half - &p0;
        [p0, c1, c2]
    }

    fn elementary(&self, ops: &Ops, blk: &SymbolBlock) -> DMatrix<C> {
        use SymbolOp::*;
        let b = self.source;
        let p = ops.point;
        let zeta = &p.zeta;
        let tang = &p.tangential;
        let nu = &p.normal;
        let half = C::new(0.5, 0.0);
        match blk.op {
            D => ops.ext(b, zeta, Slot::Form),
            DV => ops.ext(b, zeta, Slot::Vector),
            Delta => -ops.int(b, zeta, Slot::Form),
            DeltaV => -ops.int(b, zeta, Slot::Vector),
            DG => self.projector(blk.target) * ops.ext(b, zeta, Slot::Form),
            DeltaG => self.projector(blk.target) * -ops.int(b, zeta, Slot::Form),
            H => {
                let inner = ops.ext(b, zeta, Slot::Vector);
                ops.ext(b.shifted(0, 1).expect("target checked"), zeta, Slot::Form) * inner
            }
            HStar => {
                let inner = ops.int(b, zeta, Slot::Vector);
                ops.int(b.shifted(0, -1).expect("target checked"), zeta, Slot::Form) * inner
            }
            Ptt => ops.tangential(b, nu),
            Pnt => ops.pnt(b, nu),
            Ptn => ops.ptn(b, nu),
            Pnn => ops.pnn(b, nu),
            PntG => self.projector(blk.target) * ops.pnt(b, nu),
            PtnG => self.projector(blk.target) * ops.ptn(b, nu),
            T => {
                // ½(P^nt d − ∂d P^nt) + ½(P^tn d_V − ∂d_V P^tn), ∂d the boundary derivative
                let mut out = DMatrix::<C>::zeros(b.dim(), b.dim());
                if let Some(up) = b.shifted(1, 0) {
                    out += ops.pnt(up, nu) * ops.ext(b, zeta, Slot::Form);
                }
                if let Some(down) = b.shifted(-1, 0) {
                    out -= ops.ext(down, tang, Slot::Form) * ops.pnt(b, nu);
                }
                if let Some(up) = b.shifted(0, 1) {
                    out += ops.ptn(up, nu) * ops.ext(b, zeta, Slot::Vector);
                }
                if let Some(down) = b.shifted(0, -1) {
                    out -= ops.ext(down, tang, Slot::Vector) * ops.ptn(b, nu);
                }
                out * half
            }
            TStar => {
                // −½(P^tn δ + ∂δ P^tn) − ½(P^nt δ_V + ∂δ_V P^nt)
                let target = blk.target;
                let mut out = DMatrix::<C>::zeros(target.dim(), b.dim());
                let down_k = b.shifted(-1, 0).expect("target checked");
                let down_m = b.shifted(0, -1).expect("target checked");
                out += ops.ptn(down_k, nu) * -ops.int(b, zeta, Slot::Form);
                out += -ops.int(down_m, tang, Slot::Form) * ops.ptn(b, nu);
                out += ops.pnt(down_m, nu) * -ops.int(b, zeta, Slot::Vector);
                out += -ops.int(down_k, tang, Slot::Vector) * ops.pnt(b, nu);
                out * -half
            }
            BG | BGStar | BH | BHStar => unreachable!("composites are expanded"),
        }
    }
}

/// Frame-component fiber maps at one cotangent point.
struct Ops<'a> {
    point: &'a CotangentPoint,
}

impl Ops<'_> {
    fn ext(&self, b: Bidegree, v: &[C], slot: Slot) -> DMatrix<C> {
        sum_exterior(b, v, slot).expect("degree checked by caller").into_matrix()
    }

    fn int(&self, b: Bidegree, v: &[C], slot: Slot) -> DMatrix<C> {
        FiberMap::interior(b, v, slot).expect("degree checked by caller").into_matrix()
    }

    fn normal(&self) -> Vec<C> {
        self.point.normal.iter().map(|&x| C::new(x, 0.0)).collect()
    }

    /// `(1 − ν∧i_ν)` on one factor; identity when the factor cannot carry `ν`.
    fn tangential_slot(&self, b: Bidegree, slot: Slot) -> DMatrix<C> {
        let n = b.dim();
        let nu = self.normal();
        let degree = match slot {
            Slot::Form => b.k(),
            Slot::Vector => b.m(),
        };
        if degree == 0 {
            return DMatrix::identity(n, n);
        }
        let inner = self.int(b, &nu, slot);
        let lowered = match slot {
            Slot::Form => b.shifted(-1, 0),
            Slot::Vector => b.shifted(0, -1),
        }
        .expect("degree positive");
        DMatrix::identity(n, n) - self.ext(lowered, &nu, slot) * inner
    }

    /// `ℙ^{tt}`: the pullback, represented by the tangential part in both factors.
    fn tangential(&self, b: Bidegree, _nu: &[f64]) -> DMatrix<C> {
        self.tangential_slot(b, Slot::Form) * self.tangential_slot(b, Slot::Vector)
    }

    fn pnt(&self, b: Bidegree, nu: &[f64]) -> DMatrix<C> {
        let t = b.shifted(-1, 0).expect("degree checked by caller");
        self.tangential(t, nu) * self.int(b, &self.normal(), Slot::Form)
    }

    fn ptn(&self, b: Bidegree, nu: &[f64]) -> DMatrix<C> {
        let t = b.shifted(0, -1).expect("degree checked by caller");
        self.tangential(t, nu) * self.int(b, &self.normal(), Slot::Vector)
    }

    fn pnn(&self, b: Bidegree, nu: &[f64]) -> DMatrix<C> {
        let mid = b.shifted(0, -1).expect("degree checked by caller");
        let t = b.shifted(-1, -1).expect("degree checked by caller");
        let n = self.normal();
        self.tangential(t, nu) * self.int(mid, &n, Slot::Form) * self.int(b, &n, Slot::Vector)
    }
}
