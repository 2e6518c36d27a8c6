use nalgebra_sparse::CsrMatrix;
use serde::{Deserialize, Serialize};

use super::domain::{Domain, Grid, TWIST_RANK};
use super::grid::Side;
use super::layout::{Block, FieldRestriction, FieldSpace, Layout, Location};
use super::stencil::{drop_zeros, ext_on, find, int_on, Emitter, Factor};
use super::GeometryError;
use crate::fiber_algebra::MultiIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
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
    PttG,
    PtnG,
    PntG,
    PnnG,
    T,
    TStar,
    BG,
    BGStar,
    BH,
    BHStar,
    /// Covariant exterior derivative on bundle-valued forms.
    TwistedD,
    /// Its codifferential.
    TwistedDelta,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 24] = [
        OperatorKind::D,
        OperatorKind::DV,
        OperatorKind::Delta,
        OperatorKind::DeltaV,
        OperatorKind::DG,
        OperatorKind::DeltaG,
        OperatorKind::H,
        OperatorKind::HStar,
        OperatorKind::Ptt,
        OperatorKind::Ptn,
        OperatorKind::Pnt,
        OperatorKind::Pnn,
        OperatorKind::PttG,
        OperatorKind::PtnG,
        OperatorKind::PntG,
        OperatorKind::PnnG,
        OperatorKind::T,
        OperatorKind::TStar,
        OperatorKind::BG,
        OperatorKind::BGStar,
        OperatorKind::BH,
        OperatorKind::BHStar,
        OperatorKind::TwistedD,
        OperatorKind::TwistedDelta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::D => "d",
            OperatorKind::DV => "d_V",
            OperatorKind::Delta => "delta",
            OperatorKind::DeltaV => "delta_V",
            OperatorKind::DG => "d_G",
            OperatorKind::DeltaG => "delta_G",
            OperatorKind::H => "H",
            OperatorKind::HStar => "H_star",
            OperatorKind::Ptt => "P_tt",
            OperatorKind::Ptn => "P_tn",
            OperatorKind::Pnt => "P_nt",
            OperatorKind::Pnn => "P_nn",
            OperatorKind::PttG => "P_tt_G",
            OperatorKind::PtnG => "P_tn_G",
            OperatorKind::PntG => "P_nt_G",
            OperatorKind::PnnG => "P_nn_G",
            OperatorKind::T => "T",
            OperatorKind::TStar => "T_star",
            OperatorKind::BG => "B_G",
            OperatorKind::BGStar => "B_G_star",
            OperatorKind::BH => "B_H",
            OperatorKind::BHStar => "B_H_star",
            OperatorKind::TwistedD => "d_twisted",
            OperatorKind::TwistedDelta => "delta_twisted",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }

    pub fn order(self) -> usize {
        match self {
            OperatorKind::H | OperatorKind::HStar => 2,
            OperatorKind::Ptt
            | OperatorKind::Ptn
            | OperatorKind::Pnt
            | OperatorKind::Pnn
            | OperatorKind::PttG
            | OperatorKind::PtnG
            | OperatorKind::PntG
            | OperatorKind::PnnG
            | OperatorKind::BG
            | OperatorKind::BGStar => 0,
            _ => 1,
        }
    }
}

/// Boundary pairing data of a first- or second-order operator `A`:
/// `⟨Aψ,η⟩ = ⟨ψ,A*η⟩ + sign·⟨B_Aψ, B_{A*}η⟩_∂` in the continuum.
#[derive(Clone, Debug)]
pub struct GreenPairing {
    /// Directly discretized formal adjoint, target → source.
    pub adjoint: CsrMatrix<f64>,
    /// `B_A`: source → stacked boundary sections.
    pub trace: CsrMatrix<f64>,
    /// `B_{A*}`: target → the same stacked boundary sections.
    pub adjoint_trace: CsrMatrix<f64>,
    pub boundary_mass: CsrMatrix<f64>,
    pub boundary_spaces: Vec<FieldSpace>,
    /// `−1` for first-order operators: the mixed projections use the inward
    /// unit normal, under which the first-order boundary term enters with a minus sign.
    pub sign: f64,
}

/// Assembled operator in the coordinates of its source and target layouts.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub kind: OperatorKind,
    pub source: FieldSpace,
    /// Stacked target blocks; a single entry except for the composite boundary operators.
    pub target: Vec<FieldSpace>,
    pub order: usize,
    pub matrix: CsrMatrix<f64>,
    pub pairing: Option<GreenPairing>,
}

impl DiscreteOperator {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Operator builder over a domain; all maps are first built in full
/// coordinates and then compressed to the layouts' own coordinates.
pub(crate) struct Builder<'a> {
    pub domain: &'a Domain,
}

struct Map {
    matrix: CsrMatrix<f64>,
    source: FieldSpace,
    target: FieldSpace,
}

fn unsupported(op: OperatorKind, s: FieldSpace) -> GeometryError {
    GeometryError::Unsupported { op: op.name(), space: s.to_string() }
}

impl<'a> Builder<'a> {
    fn layout(&self, s: FieldSpace) -> Result<Layout, GeometryError> {
        Layout::new(self.domain, s)
    }

    fn d(&self) -> usize {
        self.domain.d()
    }

    fn in_range(&self, s: FieldSpace) -> bool {
        let d = match s.location {
            Location::Interior => self.d(),
            Location::Boundary => self.d() - 1,
        };
        s.k <= d && s.m <= d
    }

    /// Covariant exterior derivative on one factor over an arbitrary grid.
    /// The connection term of the differentiated factor cancels by symmetry of `Γ`.
    fn exterior(grid: &Grid, src: &Block, tgt: &Block, factor: Factor, twist: Option<super::domain::Twist>) -> CsrMatrix<f64> {
        let d = grid.d();
        let mut em = Emitter::new(tgt.len, src.len);
        for c in &src.components {
            let pair = (c.form, c.vector);
            for a in 0..d {
                if let Some((tp, s)) = ext_on(factor, pair, a) {
                    if let Some(t) = find(tgt, tp, c.fiber) {
                        em.term(grid, c, 0, t, 0, s, None, Some(a));
                    }
                    if let Some(tw) = twist {
                        let w = tw.omega(a);
                        for (u, row) in w.iter().enumerate() {
                            if row[c.fiber] != 0.0 {
                                if let Some(t) = find(tgt, tp, u) {
                                    em.term(grid, c, 0, t, 0, s * row[c.fiber], None, None);
                                }
                            }
                        }
                    }
                }
                let other = factor.other();
                for ci in other.get(c).indices() {
                    for b in 0..d {
                        let Some((p1, s1)) = int_on(other, pair, ci) else { continue };
                        let Some((p2, s2)) = ext_on(other, p1, b) else { continue };
                        let Some((p3, s3)) = ext_on(factor, p2, a) else { continue };
                        let Some(t) = find(tgt, p3, c.fiber) else { continue };
                        let idx = ci * d * d + a * d + b;
                        let mut coef = |em: &mut Emitter, x: &[f64]| -em.christoffel(grid, x)[idx];
                        em.term(grid, c, 0, t, 0, s1 * s2 * s3, Some(&mut coef), None);
                    }
                }
            }
        }
        em.finish()
    }

    /// Codifferential `−Σ_a g^{aa} i_{∂_a} ∇_a` on one factor.
    fn codifferential(grid: &Grid, src: &Block, tgt: &Block, factor: Factor, twist: Option<super::domain::Twist>) -> CsrMatrix<f64> {
        let d = grid.d();
        let mut em = Emitter::new(tgt.len, src.len);
        for c in &src.components {
            let pair = (c.form, c.vector);
            for a in 0..d {
                let ginv = move |x: &[f64], g: &Grid| 1.0 / g.metric_diag(x)[a];
                if let Some((tp, s)) = int_on(factor, pair, a) {
                    if let Some(t) = find(tgt, tp, c.fiber) {
                        let mut coef = |_: &mut Emitter, x: &[f64]| -ginv(x, grid);
                        em.term(grid, c, 0, t, 0, s, Some(&mut coef), Some(a));
                    }
                    if let Some(tw) = twist {
                        let w = tw.omega(a);
                        for (u, row) in w.iter().enumerate() {
                            if row[c.fiber] != 0.0 {
                                if let Some(t) = find(tgt, tp, u) {
                                    let mut coef = |_: &mut Emitter, x: &[f64]| -ginv(x, grid);
                                    em.term(grid, c, 0, t, 0, s * row[c.fiber], Some(&mut coef), None);
                                }
                            }
                        }
                    }
                }
                for slot in [factor, factor.other()] {
                    for ci in slot.get(c).indices() {
                        for b in 0..d {
                            let Some((p1, s1)) = int_on(slot, pair, ci) else { continue };
                            let Some((p2, s2)) = ext_on(slot, p1, b) else { continue };
                            let Some((p3, s3)) = int_on(factor, p2, a) else { continue };
                            let Some(t) = find(tgt, p3, c.fiber) else { continue };
                            let idx = ci * d * d + a * d + b;
                            let mut coef =
                                |em: &mut Emitter, x: &[f64]| ginv(x, grid) * em.christoffel(grid, x)[idx];
                            em.term(grid, c, 0, t, 0, s1 * s2 * s3, Some(&mut coef), None);
                        }
                    }
                }
            }
        }
        em.finish()
    }

    /// Block-diagonal assembly of a grid operator over the interior or every face.
    fn per_grid(
        &self,
        src: &Layout,
        tgt: &Layout,
        f: impl Fn(&Grid, &Block, &Block) -> CsrMatrix<f64>,
    ) -> CsrMatrix<f64> {
        let mut coo = nalgebra_sparse::CooMatrix::new(tgt.full_len, src.full_len);
        for (bi, (sb, tb)) in src.blocks.iter().zip(&tgt.blocks).enumerate() {
            let grid = src.grid(self.domain, bi);
            let m = f(grid, sb, tb);
            for (r, c, &v) in m.triplet_iter() {
                coo.push(tgt.block_offsets[bi] + r, src.block_offsets[bi] + c, v);
            }
        }
        CsrMatrix::from(&coo)
    }

    /// Compresses a full-coordinate map to layout coordinates.
    fn compress(&self, full: &CsrMatrix<f64>, src: &Layout, tgt: &Layout) -> CsrMatrix<f64> {
        let mut m = full.clone();
        if src.is_restricted() {
            m = &m * &src.embedding;
        }
        if tgt.is_restricted() {
            m = &tgt.embedding.transpose() * &m;
        }
        drop_zeros(m)
    }

    fn first_order(&self, s: FieldSpace, factor: Factor, raise: bool, restricted: bool) -> Result<Map, GeometryError> {
        let (dk, dm) = match (factor, raise) {
            (Factor::Form, true) => (1, 0),
            (Factor::Form, false) => (-1, 0),
            (Factor::Vector, true) => (0, 1),
            (Factor::Vector, false) => (0, -1),
        };
        let op = if raise { OperatorKind::D } else { OperatorKind::Delta };
        let t = s.shifted(dk, dm).filter(|t| self.in_range(*t)).ok_or_else(|| unsupported(op, s))?;
        let (s, t) = if restricted {
            (FieldSpace { restriction: FieldRestriction::Bianchi, ..s }, FieldSpace { restriction: FieldRestriction::Bianchi, ..t })
        } else {
            (s, t)
        };
        let sl = self.layout(s)?;
        let tl = self.layout(t)?;
        let twist = if s.bundle > 1 && factor == Factor::Form { self.domain.twist() } else { None };
        let full = self.per_grid(&sl, &tl, |g, sb, tb| {
            if raise {
                Self::exterior(g, sb, tb, factor, twist)
            } else {
                Self::codifferential(g, sb, tb, factor, twist)
            }
        });
        Ok(Map { matrix: self.compress(&full, &sl, &tl), source: s, target: t })
    }

    fn compose(&self, outer: &Map, inner: &Map) -> CsrMatrix<f64> {
        drop_zeros(&outer.matrix * &inner.matrix)
    }

    /// Full-coordinate `H` or `H*`; the restricted version is the compression.
    fn curl_curl(&self, s: FieldSpace, adjoint: bool) -> Result<Map, GeometryError> {
        let raise = !adjoint;
        let sf = s.full();
        let a1 = self.first_order(sf, Factor::Vector, raise, false)?;
        let a2 = self.first_order(a1.target, Factor::Form, raise, false)?;
        let b1 = self.first_order(sf, Factor::Form, raise, false)?;
        let b2 = self.first_order(b1.target, Factor::Vector, raise, false)?;
        let full = (self.compose(&a2, &a1) + self.compose(&b2, &b1)) * 0.5;
        let t = a2.target;
        let t = FieldSpace { restriction: s.restriction, ..t };
        let sl = self.layout(s)?;
        let tl = self.layout(t)?;
        Ok(Map { matrix: self.compress(&full, &sl, &tl), source: s, target: t })
    }

    /// Mixed projection `ℙ^{xy}` in full coordinates; `normal_form`/`normal_vector`
    /// select which factors are contracted with the inward unit normal.
    fn projection(&self, s: FieldSpace, normal_form: bool, normal_vector: bool, op: OperatorKind) -> Result<Map, GeometryError> {
        let sf = s.full();
        let (k, m) = (sf.k as isize - normal_form as isize, sf.m as isize - normal_vector as isize);
        if k < 0 || m < 0 || k as usize > self.d() - 1 || m as usize > self.d() - 1 {
            return Err(unsupported(op, s));
        }
        let t = FieldSpace { location: Location::Boundary, k: k as usize, m: m as usize, ..sf };
        let sl = self.layout(sf)?;
        let tl = self.layout(t)?;
        let grid = &self.domain.grid;
        let src = &sl.blocks[0];
        let mut em = Emitter::new(tl.full_len, sl.full_len);
        for (fi, face) in self.domain.faces.iter().enumerate() {
            let a = face.axis;
            let tb = &tl.blocks[fi];
            let off = tl.block_offsets[fi];
            let dir = if face.side == Side::Low { 1.0 } else { -1.0 };
            for c in &src.components {
                let mut pair = (c.form, c.vector);
                let mut sign = 1.0;
                let mut power = 0;
                for (slot, normal) in [(Factor::Form, normal_form), (Factor::Vector, normal_vector)] {
                    let has = slot.get(c).contains(a);
                    if normal != has {
                        sign = 0.0;
                        break;
                    }
                    if normal {
                        let (p, s1) = int_on(slot, pair, a).expect("contains axis");
                        pair = p;
                        sign *= s1 * dir;
                        power += 1;
                    }
                }
                if sign == 0.0 {
                    continue;
                }
                let fpair = (face_index(a, pair.0), face_index(a, pair.1));
                let Some(t) = find(tb, fpair, c.fiber) else { continue };
                if power == 0 {
                    em.trace_term(grid, face, c, 0, t, off, sign, None);
                } else {
                    let mut coef = |_: &mut Emitter, x: &[f64]| grid.metric_diag(x)[a].powf(-0.5 * power as f64);
                    em.trace_term(grid, face, c, 0, t, off, sign, Some(&mut coef));
                }
            }
        }
        let full = em.finish();
        let t = FieldSpace { restriction: s.restriction, ..t };
        let tl = self.layout(t)?;
        let sl = self.layout(s)?;
        Ok(Map { matrix: self.compress(&full, &sl, &tl), source: s, target: t })
    }

    /// Boundary exterior derivative or codifferential on one factor, face by face.
    fn boundary_first_order(&self, s: FieldSpace, factor: Factor, raise: bool) -> Result<Map, GeometryError> {
        let (dk, dm) = match (factor, raise) {
            (Factor::Form, true) => (1, 0),
            (Factor::Form, false) => (-1, 0),
            (Factor::Vector, true) => (0, 1),
            (Factor::Vector, false) => (0, -1),
        };
        let sf = s.full();
        let t = sf.shifted(dk, dm).filter(|t| self.in_range(*t)).ok_or_else(|| unsupported(OperatorKind::T, s))?;
        let sl = self.layout(sf)?;
        let tl = self.layout(t)?;
        let full = self.per_grid(&sl, &tl, |g, sb, tb| {
            if raise {
                Self::exterior(g, sb, tb, factor, None)
            } else {
                Self::codifferential(g, sb, tb, factor, None)
            }
        });
        Ok(Map { matrix: full, source: sf, target: t })
    }

    /// `𝔗` (or `𝔗*` when `adjoint`) in full coordinates, compressed at the end.
    fn t_operator(&self, s: FieldSpace, adjoint: bool) -> Result<Map, GeometryError> {
        let sf = s.full();
        let op = if adjoint { OperatorKind::TStar } else { OperatorKind::T };
        let target = if adjoint {
            FieldSpace { location: Location::Boundary, ..sf.shifted(-1, -1).ok_or_else(|| unsupported(op, s))? }
        } else {
            FieldSpace { location: Location::Boundary, ..sf }
        };
        if target.k > self.d() - 1 || target.m > self.d() - 1 {
            return Err(unsupported(op, s));
        }
        let tl_full = self.layout(target)?;
        let mut acc = CsrMatrix::<f64>::zeros(tl_full.full_len, self.layout(sf)?.full_len);
        // (normal_form, normal_vector, interior factor, boundary factor)
        let halves = if adjoint {
            [(false, true, Factor::Form, Factor::Form), (true, false, Factor::Vector, Factor::Vector)]
        } else {
            [(true, false, Factor::Form, Factor::Form), (false, true, Factor::Vector, Factor::Vector)]
        };
        for (nf, nv, inner_factor, bdry_factor) in halves {
            // interior operator then projection
            if let Ok(inner) = self.first_order(sf, inner_factor, !adjoint, false) {
                if let Ok(proj) = self.projection(inner.target, nf, nv, op) {
                    acc = acc + self.compose(&proj, &inner) * 0.5;
                }
            }
            // projection then boundary operator
            if let Ok(proj) = self.projection(sf, nf, nv, op) {
                if let Ok(bd) = self.boundary_first_order(proj.target, bdry_factor, !adjoint) {
                    let sign = if adjoint { 0.5 } else { -0.5 };
                    acc = acc + self.compose(&bd, &proj) * sign;
                }
            }
        }
        if adjoint {
            acc = acc * -1.0;
        }
        let t = FieldSpace { restriction: s.restriction, ..target };
        let sl = self.layout(s)?;
        let tl = self.layout(t)?;
        Ok(Map { matrix: self.compress(&drop_zeros(acc), &sl, &tl), source: s, target: t })
    }
}

fn face_index(axis: usize, idx: MultiIndex) -> MultiIndex {
    MultiIndex::from_indices(
        &idx.indices().iter().filter(|&&b| b != axis).map(|&b| if b < axis { b } else { b - 1 }).collect::<Vec<_>>(),
    )
}

fn vstack(parts: &[&CsrMatrix<f64>]) -> CsrMatrix<f64> {
    let cols = parts.first().map(|m| m.ncols()).unwrap_or(0);
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut coo = nalgebra_sparse::CooMatrix::new(rows, cols);
    let mut off = 0;
    for m in parts {
        for (r, c, &v) in m.triplet_iter() {
            coo.push(off + r, c, v);
        }
        off += m.nrows();
    }
    CsrMatrix::from(&coo)
}

fn block_diag(parts: &[CsrMatrix<f64>]) -> CsrMatrix<f64> {
    let n: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut coo = nalgebra_sparse::CooMatrix::new(n, n);
    let mut off = 0;
    for m in parts {
        for (r, c, &v) in m.triplet_iter() {
            coo.push(off + r, off + c, v);
        }
        off += m.nrows();
    }
    CsrMatrix::from(&coo)
}

fn with_restriction(s: FieldSpace, r: FieldRestriction) -> FieldSpace {
    FieldSpace { restriction: r, ..s }
}

/// Assembles `kind` acting on fields of `source`.
///
/// Bianchi-restricted kinds (`DG`, `DeltaG`, the `G` projections, `BG`, `BGStar`)
/// force the Bianchi restriction on their source; `H`, `H*`, `𝔗`, `𝔗*`, `B_H`,
/// `B_H*` keep the restriction of `source`. Twisted kinds need a twisted domain
/// and a bundle of rank 3.
pub fn assemble(domain: &Domain, kind: OperatorKind, source: FieldSpace) -> Result<DiscreteOperator, GeometryError> {
    let b = Builder { domain };
    if source.location != Location::Interior {
        return Err(unsupported(kind, source));
    }
    if !b.in_range(source) {
        return Err(unsupported(kind, source));
    }
    let twisted = matches!(kind, OperatorKind::TwistedD | OperatorKind::TwistedDelta);
    if twisted {
        if domain.twist().is_none() {
            return Err(GeometryError::MissingField("twist_strength"));
        }
        if source.bundle != TWIST_RANK || source.m != 0 || source.restriction != FieldRestriction::Full {
            return Err(unsupported(kind, source));
        }
    } else if source.bundle != 1 {
        return Err(unsupported(kind, source));
    }
    let bianchi = FieldRestriction::Bianchi;
    let map_err = |e: GeometryError| match e {
        GeometryError::Unsupported { .. } => unsupported(kind, source),
        other => other,
    };
    let single = |m: Map, pairing: Option<GreenPairing>| DiscreteOperator {
        kind,
        source: m.source,
        target: vec![m.target],
        order: kind.order(),
        matrix: m.matrix,
        pairing,
    };
    let op = match kind {
        OperatorKind::D | OperatorKind::TwistedD => {
            let m = b.first_order(source, Factor::Form, true, false).map_err(map_err)?;
            let p = first_order_pairing(&b, source, Factor::Form, false).map_err(map_err)?;
            single(m, Some(p))
        }
        OperatorKind::DV => {
            let m = b.first_order(source, Factor::Vector, true, false).map_err(map_err)?;
            let p = first_order_pairing(&b, source, Factor::Vector, false).map_err(map_err)?;
            single(m, Some(p))
        }
        OperatorKind::Delta | OperatorKind::TwistedDelta => {
            single(b.first_order(source, Factor::Form, false, false).map_err(map_err)?, None)
        }
        OperatorKind::DeltaV => single(b.first_order(source, Factor::Vector, false, false).map_err(map_err)?, None),
        OperatorKind::DG => {
            let s = with_restriction(source, bianchi);
            let m = b.first_order(s, Factor::Form, true, true).map_err(map_err)?;
            let p = first_order_pairing(&b, s, Factor::Form, true).map_err(map_err)?;
            single(m, Some(p))
        }
        OperatorKind::DeltaG => {
            single(b.first_order(with_restriction(source, bianchi), Factor::Form, false, true).map_err(map_err)?, None)
        }
        OperatorKind::H => {
            let m = b.curl_curl(source, false).map_err(map_err)?;
            let p = curl_curl_pairing(&b, source).map_err(map_err)?;
            single(m, Some(p))
        }
        OperatorKind::HStar => single(b.curl_curl(source, true).map_err(map_err)?, None),
        OperatorKind::Ptt | OperatorKind::Ptn | OperatorKind::Pnt | OperatorKind::Pnn => {
            let (nf, nv) = normals(kind);
            single(b.projection(source.full(), nf, nv, kind).map_err(map_err)?, None)
        }
        OperatorKind::PttG | OperatorKind::PtnG | OperatorKind::PntG | OperatorKind::PnnG => {
            let (nf, nv) = normals(kind);
            single(b.projection(with_restriction(source, bianchi), nf, nv, kind).map_err(map_err)?, None)
        }
        OperatorKind::T => single(b.t_operator(source, false).map_err(map_err)?, None),
        OperatorKind::TStar => single(b.t_operator(source, true).map_err(map_err)?, None),
        OperatorKind::BG | OperatorKind::BGStar => {
            let s = with_restriction(source, bianchi);
            let parts = if kind == OperatorKind::BG { [(false, false), (false, true)] } else { [(true, false), (true, true)] };
            let maps: Vec<Map> = parts
                .iter()
                .filter_map(|&(nf, nv)| b.projection(s, nf, nv, kind).ok())
                .collect();
            stacked(kind, s, maps)?
        }
        OperatorKind::BH => {
            let mut maps = Vec::new();
            if let Ok(p) = b.projection(source, false, false, kind) {
                maps.push(p);
            }
            let mut t = b.t_operator(source, false).map_err(map_err)?;
            t.matrix = t.matrix * -1.0;
            maps.push(t);
            stacked(kind, source, maps)?
        }
        OperatorKind::BHStar => {
            let mut maps = vec![b.t_operator(source, true).map_err(map_err)?];
            if let Ok(p) = b.projection(source, true, true, kind) {
                maps.push(p);
            }
            stacked(kind, source, maps)?
        }
    };
    Ok(op)
}

fn normals(kind: OperatorKind) -> (bool, bool) {
    match kind {
        OperatorKind::Ptt | OperatorKind::PttG => (false, false),
        OperatorKind::Ptn | OperatorKind::PtnG => (false, true),
        OperatorKind::Pnt | OperatorKind::PntG => (true, false),
        _ => (true, true),
    }
}

fn stacked(kind: OperatorKind, source: FieldSpace, maps: Vec<Map>) -> Result<DiscreteOperator, GeometryError> {
    if maps.is_empty() {
        return Err(unsupported(kind, source));
    }
    let parts: Vec<&CsrMatrix<f64>> = maps.iter().map(|m| &m.matrix).collect();
    Ok(DiscreteOperator {
        kind,
        source: maps[0].source,
        target: maps.iter().map(|m| m.target).collect(),
        order: kind.order(),
        matrix: vstack(&parts),
        pairing: None,
    })
}

/// `(tt ⊕ tn, nt ⊕ nn)` for `d` on the form factor; factors swap for `d_V`.
fn first_order_pairing(b: &Builder, s: FieldSpace, factor: Factor, restricted: bool) -> Result<GreenPairing, GeometryError> {
    let adj = b.first_order(s.shifted(if factor == Factor::Form { 1 } else { 0 }, if factor == Factor::Vector { 1 } else { 0 }).expect("raised"), factor, false, restricted)?;
    let target = adj.source;
    let mut traces = Vec::new();
    let mut adj_traces = Vec::new();
    let mut spaces = Vec::new();
    for other_normal in [false, true] {
        let (tf, tv, nf, nv) = match factor {
            Factor::Form => (false, other_normal, true, other_normal),
            Factor::Vector => (other_normal, false, other_normal, true),
        };
        let (Ok(t), Ok(n)) = (b.projection(s, tf, tv, OperatorKind::BG), b.projection(target, nf, nv, OperatorKind::BGStar))
        else {
            continue;
        };
        spaces.push(t.target);
        traces.push(t.matrix);
        adj_traces.push(n.matrix);
    }
    let masses: Vec<CsrMatrix<f64>> =
        spaces.iter().map(|sp| Layout::new(b.domain, *sp).map(|l| l.mass(b.domain))).collect::<Result<_, _>>()?;
    Ok(GreenPairing {
        adjoint: adj.matrix,
        trace: vstack(&traces.iter().collect::<Vec<_>>()),
        adjoint_trace: vstack(&adj_traces.iter().collect::<Vec<_>>()),
        boundary_mass: block_diag(&masses),
        boundary_spaces: spaces,
        sign: -1.0,
    })
}

/// `B_H = ℙ^{tt} ⊕ (−𝔗)` against `B_H* = 𝔗* ⊕ ℙ^{nn}`.
fn curl_curl_pairing(b: &Builder, s: FieldSpace) -> Result<GreenPairing, GeometryError> {
    let adj = b.curl_curl(s.shifted(1, 1).ok_or_else(|| unsupported(OperatorKind::H, s))?, true)?;
    let target = adj.source;
    let mut traces = Vec::new();
    let mut adj_traces = Vec::new();
    let mut spaces = Vec::new();
    if let (Ok(tt), Ok(ts)) = (b.projection(s, false, false, OperatorKind::BH), b.t_operator(target, true)) {
        spaces.push(tt.target);
        traces.push(tt.matrix);
        adj_traces.push(ts.matrix);
    }
    if let (Ok(t), Ok(nn)) = (b.t_operator(s, false), b.projection(target, true, true, OperatorKind::BHStar)) {
        spaces.push(t.target);
        traces.push(t.matrix * -1.0);
        adj_traces.push(nn.matrix);
    }
    let masses: Vec<CsrMatrix<f64>> =
        spaces.iter().map(|sp| Layout::new(b.domain, *sp).map(|l| l.mass(b.domain))).collect::<Result<_, _>>()?;
    Ok(GreenPairing {
        adjoint: adj.matrix,
        trace: vstack(&traces.iter().collect::<Vec<_>>()),
        adjoint_trace: vstack(&adj_traces.iter().collect::<Vec<_>>()),
        boundary_mass: block_diag(&masses),
        boundary_spaces: spaces,
        sign: 1.0,
    })
}

/// Nodewise curvature action `ψ ↦ R^∇ ∧ ψ` of the twisted connection, from
/// `k`-forms to `(k+2)`-forms, with values interpolated to the target points.
pub fn twisted_curvature(domain: &Domain, k: usize) -> Result<CsrMatrix<f64>, GeometryError> {
    let tw = domain.twist().ok_or(GeometryError::MissingField("twist_strength"))?;
    let s = FieldSpace::twisted(k, TWIST_RANK);
    let t = FieldSpace::twisted(k + 2, TWIST_RANK);
    let sl = Layout::new(domain, s)?;
    let tl = Layout::new(domain, t)?;
    let grid = &domain.grid;
    let (src, tgt) = (&sl.blocks[0], &tl.blocks[0]);
    let d = domain.d();
    let mut em = Emitter::new(tl.full_len, sl.full_len);
    for c in &src.components {
        for a in 0..d {
            for bb in (a + 1)..d {
                let r = tw.curvature(a, bb);
                let pair = (c.form, c.vector);
                let Some((p1, s1)) = ext_on(Factor::Form, pair, bb) else { continue };
                let Some((p2, s2)) = ext_on(Factor::Form, p1, a) else { continue };
                for (u, row) in r.iter().enumerate() {
                    if row[c.fiber] == 0.0 {
                        continue;
                    }
                    if let Some(t) = find(tgt, p2, u) {
                        em.term(grid, c, 0, t, 0, s1 * s2 * row[c.fiber], None, None);
                    }
                }
            }
        }
    }
    Ok(em.finish())
}
