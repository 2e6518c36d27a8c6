//! Sparse emission of staggered-grid operators in full coordinates.

use std::collections::HashMap;

use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::domain::{Face, Grid};
use super::grid::{Axis, Row};
use super::layout::{Block, Component};
use crate::fiber_algebra::{ext_index, int_index, MultiIndex};

/// Which factor of a double form an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Factor {
    Form,
    Vector,
}

impl Factor {
    pub(crate) fn other(self) -> Self {
        match self {
            Factor::Form => Factor::Vector,
            Factor::Vector => Factor::Form,
        }
    }

    pub(crate) fn get(self, c: &Component) -> MultiIndex {
        match self {
            Factor::Form => c.form,
            Factor::Vector => c.vector,
        }
    }

    pub(crate) fn set(self, pair: (MultiIndex, MultiIndex), idx: MultiIndex) -> (MultiIndex, MultiIndex) {
        match self {
            Factor::Form => (idx, pair.1),
            Factor::Vector => (pair.0, idx),
        }
    }
}

pub(crate) fn ext_on(factor: Factor, pair: (MultiIndex, MultiIndex), a: usize) -> Option<((MultiIndex, MultiIndex), f64)> {
    let idx = match factor {
        Factor::Form => pair.0,
        Factor::Vector => pair.1,
    };
    ext_index(idx, a).map(|(n, s)| (factor.set(pair, n), s))
}

pub(crate) fn int_on(factor: Factor, pair: (MultiIndex, MultiIndex), a: usize) -> Option<((MultiIndex, MultiIndex), f64)> {
    let idx = match factor {
        Factor::Form => pair.0,
        Factor::Vector => pair.1,
    };
    int_index(idx, a).map(|(n, s)| (factor.set(pair, n), s))
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    Value,
    Slope,
}

/// Accumulates triplets for a map between two full layouts.
pub(crate) struct Emitter {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
    cache: HashMap<(usize, usize, usize, Kind), Vec<Row>>,
    gamma: HashMap<Vec<u64>, Vec<f64>>,
}

impl Emitter {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        Emitter { rows, cols, triplets: Vec::new(), cache: HashMap::new(), gamma: HashMap::new() }
    }

    fn rows_for(&mut self, axis_id: usize, ax: &Axis, mu_s: usize, mu_t: usize, kind: Kind) -> Vec<Row> {
        self.cache
            .entry((axis_id, mu_s, mu_t, kind))
            .or_insert_with(|| match kind {
                Kind::Value => ax.interpolation(mu_s, mu_t),
                Kind::Slope => ax.derivative(mu_s, mu_t),
            })
            .clone()
    }

    /// Christoffel symbols with memoization by point.
    pub(crate) fn christoffel(&mut self, grid: &Grid, x: &[f64]) -> Vec<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        self.gamma.entry(key).or_insert_with(|| grid.christoffel(x)).clone()
    }

    /// Emits `factor · coef(x) · (∂_deriv or value)` from component `src` at
    /// `src_off` to component `tgt` at `tgt_off`, both on `grid`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn term(
        &mut self,
        grid: &Grid,
        src: &Component,
        src_off: usize,
        tgt: &Component,
        tgt_off: usize,
        factor: f64,
        coef: Option<&mut dyn FnMut(&mut Self, &[f64]) -> f64>,
        deriv: Option<usize>,
    ) {
        if factor == 0.0 {
            return;
        }
        let d = grid.d();
        let per_axis: Vec<Vec<Row>> = (0..d)
            .map(|a| {
                let kind = if deriv == Some(a) { Kind::Slope } else { Kind::Value };
                self.rows_for(a, &grid.axes[a], src.mu[a], tgt.mu[a], kind)
            })
            .collect();
        let src_counts: Vec<usize> = (0..d).map(|a| grid.axes[a].count(src.mu[a])).collect();
        self.emit(grid, &per_axis, &src_counts, src_off + src.offset, tgt, tgt_off, factor, coef, None);
    }

    /// Trace from an interior component onto a face component: the normal axis
    /// reads the point nearest the face, tangential axes interpolate.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn trace_term(
        &mut self,
        grid: &Grid,
        face: &Face,
        src: &Component,
        src_off: usize,
        tgt: &Component,
        tgt_off: usize,
        factor: f64,
        coef: Option<&mut dyn FnMut(&mut Self, &[f64]) -> f64>,
    ) {
        if factor == 0.0 {
            return;
        }
        let a = face.axis;
        let ax = &grid.axes[a];
        let mut per_axis = Vec::with_capacity(grid.d());
        for b in 0..grid.d() {
            if b == a {
                per_axis.push(vec![vec![(ax.end_index(src.mu[a], face.side), 1.0)]]);
            } else {
                let fb = face.face_axis(b);
                per_axis.push(self.rows_for(b, &grid.axes[b], src.mu[b], tgt.mu[fb], Kind::Value));
            }
        }
        let src_counts: Vec<usize> = (0..grid.d()).map(|b| grid.axes[b].count(src.mu[b])).collect();
        let value = ax.boundary_coordinate(face.side);
        self.emit(&face.grid, &per_axis, &src_counts, src_off + src.offset, tgt, tgt_off, factor, coef, Some((face, value)));
    }

    /// `per_axis` has one entry per source axis. For a trace the normal axis has a
    /// single target row and the target grid is the face.
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        tgt_grid: &Grid,
        per_axis: &[Vec<Row>],
        src_counts: &[usize],
        src_base: usize,
        tgt: &Component,
        tgt_off: usize,
        factor: f64,
        mut coef: Option<&mut dyn FnMut(&mut Self, &[f64]) -> f64>,
        face: Option<(&Face, f64)>,
    ) {
        let ds = per_axis.len();
        let mut strides = vec![1usize; ds];
        for a in (0..ds.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * src_counts[a + 1];
        }
        let tgt_counts: Vec<usize> = per_axis.iter().map(|r| r.len()).collect();
        let total: usize = tgt_counts.iter().product();
        let mut idx = vec![0usize; ds];
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut next: Vec<(usize, f64)> = Vec::new();
        for t in 0..total {
            let mut scale = factor;
            if let Some(f) = coef.as_deref_mut() {
                let x = match face {
                    None => idx.iter().enumerate().map(|(a, &i)| tgt_grid.axes[a].position(tgt.mu[a], i)).collect::<Vec<_>>(),
                    Some((face, value)) => {
                        let y: Vec<f64> = (0..ds)
                            .filter(|&b| b != face.axis)
                            .map(|b| {
                                let fb = face.face_axis(b);
                                tgt_grid.axes[fb].position(tgt.mu[fb], idx[b])
                            })
                            .collect();
                        face.embed(&y, value)
                    }
                };
                scale *= f(self, &x);
            }
            if scale != 0.0 {
                entries.clear();
                entries.push((0, scale));
                for a in 0..ds {
                    next.clear();
                    for &(base, w) in &entries {
                        for &(j, v) in &per_axis[a][idx[a]] {
                            next.push((base + j * strides[a], w * v));
                        }
                    }
                    std::mem::swap(&mut entries, &mut next);
                }
                for &(s, w) in &entries {
                    if w != 0.0 {
                        self.triplets.push((tgt_off + tgt.offset + t, src_base + s, w));
                    }
                }
            }
            for a in (0..ds).rev() {
                idx[a] += 1;
                if idx[a] < tgt_counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    pub(crate) fn finish(self) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(self.rows, self.cols);
        for (r, c, v) in self.triplets {
            coo.push(r, c, v);
        }
        let csr = CsrMatrix::from(&coo);
        drop_zeros(csr)
    }
}

pub(crate) fn drop_zeros(m: CsrMatrix<f64>) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(m.nrows(), m.ncols());
    for (r, c, &v) in m.triplet_iter() {
        if v != 0.0 {
            coo.push(r, c, v);
        }
    }
    CsrMatrix::from(&coo)
}

pub(crate) fn find(block: &Block, pair: (MultiIndex, MultiIndex), fiber: usize) -> Option<&Component> {
    block.position(pair.0, pair.1, fiber).map(|i| &block.components[i])
}
