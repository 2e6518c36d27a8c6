use std::collections::BTreeMap;

use nalgebra::DMatrix;
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use super::domain::{Domain, Face, Grid};
use super::GeometryError;
use crate::fiber_algebra::{basis_enumerate, Bidegree, MultiIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRestriction {
    /// Every `(k,m)` component.
    Full,
    /// Pointwise Bianchi forms `𝒞^{k,m}`.
    Bianchi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Interior,
    /// Sections over all boundary faces, with `(k,m)` the boundary bidegree.
    Boundary,
}

/// Field descriptor: which double forms live on which part of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldSpace {
    pub k: usize,
    pub m: usize,
    /// Rank of the coefficient bundle (1 for scalar double forms).
    pub bundle: usize,
    pub restriction: FieldRestriction,
    pub location: Location,
}

impl FieldSpace {
    pub fn forms(k: usize, m: usize) -> Self {
        FieldSpace { k, m, bundle: 1, restriction: FieldRestriction::Full, location: Location::Interior }
    }

    pub fn bianchi(k: usize, m: usize) -> Self {
        FieldSpace { restriction: FieldRestriction::Bianchi, ..Self::forms(k, m) }
    }

    pub fn twisted(k: usize, rank: usize) -> Self {
        FieldSpace { bundle: rank, ..Self::forms(k, 0) }
    }

    pub fn on_boundary(self, k: usize, m: usize) -> Self {
        FieldSpace { k, m, location: Location::Boundary, ..self }
    }

    pub fn full(self) -> Self {
        FieldSpace { restriction: FieldRestriction::Full, ..self }
    }

    pub fn shifted(self, dk: isize, dm: isize) -> Option<Self> {
        let k = self.k as isize + dk;
        let m = self.m as isize + dm;
        (k >= 0 && m >= 0).then(|| FieldSpace { k: k as usize, m: m as usize, ..self })
    }
}

impl std::fmt::Display for FieldSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.restriction {
            FieldRestriction::Full => "Ω",
            FieldRestriction::Bianchi => "𝒞",
        };
        let loc = match self.location {
            Location::Interior => "",
            Location::Boundary => " on ∂M",
        };
        write!(f, "{kind}^({},{})", self.k, self.m)?;
        if self.bundle > 1 {
            write!(f, "⊗ℝ^{}", self.bundle)?;
        }
        write!(f, "{loc}")
    }
}

/// One coefficient block: a basis pair and a bundle index, sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub form: MultiIndex,
    pub vector: MultiIndex,
    pub fiber: usize,
    pub mu: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Components of one `(k,m)` bundle over one grid, in the full coordinate basis.
#[derive(Clone, Debug)]
pub struct Block {
    pub bidegree: Bidegree,
    pub bundle: usize,
    pub components: Vec<Component>,
    pub len: usize,
}

fn multiplicities(d: usize, i: MultiIndex, j: MultiIndex) -> Vec<usize> {
    (0..d).map(|a| i.contains(a) as usize + j.contains(a) as usize).collect()
}

impl Block {
    pub fn new(grid: &Grid, d: usize, k: usize, m: usize, bundle: usize) -> Result<Self, GeometryError> {
        let bidegree = Bidegree::new(d, k, m).map_err(|_| GeometryError::Bidegree { d, k, m })?;
        let mut components = Vec::new();
        let mut offset = 0;
        for (i, j) in basis_enumerate(bidegree) {
            let mu = multiplicities(d, i, j);
            let len = grid.point_count(&mu);
            for fiber in 0..bundle {
                components.push(Component { form: i, vector: j, fiber, mu: mu.clone(), offset, len });
                offset += len;
            }
        }
        Ok(Block { bidegree, bundle, components, len: offset })
    }

    pub fn position(&self, form: MultiIndex, vector: MultiIndex, fiber: usize) -> Option<usize> {
        self.components.iter().position(|c| c.form == form && c.vector == vector && c.fiber == fiber)
    }
}

/// Maps a face multi-index to ambient axis labels (skipping the normal axis).
pub fn lift_index(face: &Face, idx: MultiIndex) -> MultiIndex {
    MultiIndex::from_indices(
        &idx.indices().iter().map(|&b| if b < face.axis { b } else { b + 1 }).collect::<Vec<_>>(),
    )
}

/// Full and restricted coordinates of a field space over a domain.
#[derive(Clone, Debug)]
pub struct Layout {
    pub space: FieldSpace,
    /// One block per grid: the interior, or each face in order.
    pub blocks: Vec<Block>,
    /// Start of each block in the full vector.
    pub block_offsets: Vec<usize>,
    pub full_len: usize,
    /// Full ← restricted embedding with orthonormal columns (identity when unrestricted).
    pub embedding: CsrMatrix<f64>,
    pub len: usize,
}

impl Layout {
    pub fn new(domain: &Domain, space: FieldSpace) -> Result<Self, GeometryError> {
        let d = domain.d();
        let mut blocks = Vec::new();
        match space.location {
            Location::Interior => blocks.push(Block::new(&domain.grid, d, space.k, space.m, space.bundle)?),
            Location::Boundary => {
                for face in &domain.faces {
                    blocks.push(Block::new(&face.grid, d - 1, space.k, space.m, space.bundle)?);
                }
            }
        }
        let mut block_offsets = Vec::new();
        let mut full_len = 0;
        for b in &blocks {
            block_offsets.push(full_len);
            full_len += b.len;
        }
        let (embedding, len) = match space.restriction {
            FieldRestriction::Full => (CsrMatrix::identity(full_len), full_len),
            FieldRestriction::Bianchi => restricted_embedding(&blocks, &block_offsets, full_len),
        };
        Ok(Layout { space, blocks, block_offsets, full_len, embedding, len })
    }

    pub fn is_restricted(&self) -> bool {
        self.space.restriction == FieldRestriction::Bianchi
    }

    /// Grid of block `b`.
    pub fn grid<'a>(&self, domain: &'a Domain, b: usize) -> &'a Grid {
        match self.space.location {
            Location::Interior => &domain.grid,
            Location::Boundary => &domain.faces[b].grid,
        }
    }

    /// Diagonal of the mass matrix in full coordinates: quadrature weight ×
    /// `√det g` × `Π_a (g^{aa})^{μ_a}`.
    pub fn full_mass_diagonal(&self, domain: &Domain) -> Vec<f64> {
        let mut out = vec![0.0; self.full_len];
        for (bi, block) in self.blocks.iter().enumerate() {
            let grid = self.grid(domain, bi);
            for c in &block.components {
                let counts: Vec<usize> = grid.axes.iter().zip(&c.mu).map(|(ax, &m)| ax.count(m)).collect();
                for (p, x) in grid.points(&c.mu).iter().enumerate() {
                    let g = grid.metric_diag(x);
                    let mut w = g.iter().product::<f64>().sqrt();
                    let mut rem = p;
                    for a in (0..grid.d()).rev() {
                        let i = rem % counts[a];
                        rem /= counts[a];
                        w *= grid.axes[a].weight(c.mu[a], i) * g[a].powi(-(c.mu[a] as i32));
                    }
                    out[self.block_offsets[bi] + c.offset + p] = w;
                }
            }
        }
        out
    }

    /// Mass matrix in the layout's own coordinates. Diagonal in both cases:
    /// the fiber Gram is constant on each multiplicity class.
    pub fn mass(&self, domain: &Domain) -> CsrMatrix<f64> {
        let full = self.full_mass_diagonal(domain);
        let diag = self.restrict_diagonal(&full);
        diagonal(&diag)
    }

    pub fn mass_diagonal(&self, domain: &Domain) -> Vec<f64> {
        let full = self.full_mass_diagonal(domain);
        self.restrict_diagonal(&full)
    }

    fn restrict_diagonal(&self, full: &[f64]) -> Vec<f64> {
        if !self.is_restricted() {
            return full.to_vec();
        }
        let mut diag = vec![0.0; self.len];
        let e = &self.embedding;
        for (row, col, v) in e.triplet_iter() {
            diag[col] += v * v * full[row];
        }
        diag
    }

    /// Samples a field given as a function of `(ambient point, form, vector, fiber)`
    /// in full coordinates, then projects to the layout coordinates.
    pub fn sample(
        &self,
        domain: &Domain,
        mut f: impl FnMut(&[f64], MultiIndex, MultiIndex, usize) -> f64,
    ) -> nalgebra::DVector<f64> {
        let mut full = nalgebra::DVector::zeros(self.full_len);
        for (bi, block) in self.blocks.iter().enumerate() {
            let grid = self.grid(domain, bi);
            for c in &block.components {
                let (form, vector, face) = match self.space.location {
                    Location::Interior => (c.form, c.vector, None),
                    Location::Boundary => {
                        let face = &domain.faces[bi];
                        (lift_index(face, c.form), lift_index(face, c.vector), Some(face))
                    }
                };
                for (p, y) in grid.points(&c.mu).iter().enumerate() {
                    let x = match face {
                        None => y.clone(),
                        Some(face) => {
                            face.embed(y, domain.grid.axes[face.axis].boundary_coordinate(face.side))
                        }
                    };
                    full[self.block_offsets[bi] + c.offset + p] = f(&x, form, vector, c.fiber);
                }
            }
        }
        self.restrict(&full)
    }

    pub fn restrict(&self, full: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        if !self.is_restricted() {
            return full.clone();
        }
        self.embedding.transpose() * full
    }

    pub fn extend(&self, v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        if !self.is_restricted() {
            return v.clone();
        }
        &self.embedding * v
    }
}

/// Orthonormal Bianchi basis per multiplicity class. The projector is constant
/// on each class because diagonal metrics rescale a whole class uniformly.
fn restricted_embedding(blocks: &[Block], block_offsets: &[usize], full_len: usize) -> (CsrMatrix<f64>, usize) {
    let mut triplets = Vec::new();
    let mut cols = 0usize;
    for (bi, block) in blocks.iter().enumerate() {
        let b = block.bidegree;
        let p = crate::fiber_algebra::real_projector(b);
        let pairs = basis_enumerate(b);
        let mut classes: BTreeMap<(Vec<usize>, usize), Vec<usize>> = BTreeMap::new();
        for (ci, c) in block.components.iter().enumerate() {
            classes.entry((c.mu.clone(), c.fiber)).or_default().push(ci);
        }
        for comps in classes.values() {
            let pair_idx: Vec<usize> = comps
                .iter()
                .map(|&ci| {
                    let c = &block.components[ci];
                    pairs.iter().position(|&(i, j)| i == c.form && j == c.vector).expect("component in basis")
                })
                .collect();
            let sub = DMatrix::from_fn(comps.len(), comps.len(), |r, s| p[(pair_idx[r], pair_idx[s])]);
            let basis = crate::linalg::projector_range(&sub);
            let len = block.components[comps[0]].len;
            for r in 0..basis.ncols() {
                for pt in 0..len {
                    for (row, &ci) in comps.iter().enumerate() {
                        let v = basis[(row, r)];
                        if v.abs() > 1e-15 {
                            triplets.push((block_offsets[bi] + block.components[ci].offset + pt, cols + pt, v));
                        }
                    }
                }
                cols += len;
            }
        }
    }
    let mut coo = CooMatrix::new(full_len, cols);
    for (r, c, v) in triplets {
        coo.push(r, c, v);
    }
    (CsrMatrix::from(&coo), cols)
}

pub fn diagonal(v: &[f64]) -> CsrMatrix<f64> {
    let n = v.len();
    let mut coo = CooMatrix::new(n, n);
    for (i, &x) in v.iter().enumerate() {
        coo.push(i, i, x);
    }
    CsrMatrix::from(&coo)
}
