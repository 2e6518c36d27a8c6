use serde::{Deserialize, Serialize};

use super::AlgebraError;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 4;

/// A strictly increasing multi-index stored as a bitmask over `0..d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub u8);

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex(0);

    pub fn from_indices(indices: &[usize]) -> Self {
        MultiIndex(indices.iter().fold(0u8, |acc, &i| acc | (1 << i)))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, a: usize) -> bool {
        self.0 & (1 << a) != 0
    }

    /// Zero-based indices in increasing order.
    pub fn indices(self) -> Vec<usize> {
        (0..8).filter(|&i| self.contains(i)).collect()
    }

    pub fn with(self, a: usize) -> Self {
        MultiIndex(self.0 | (1 << a))
    }

    pub fn without(self, a: usize) -> Self {
        MultiIndex(self.0 & !(1 << a))
    }

    /// Number of members strictly below `a`.
    pub fn count_below(self, a: usize) -> usize {
        (self.0 & ((1u8 << a) - 1)).count_ones() as usize
    }

    /// Sign of the shuffle that sorts the concatenation `self ++ other`,
    /// or `None` when the two overlap.
    pub fn shuffle_sign(self, other: MultiIndex) -> Option<i32> {
        if self.0 & other.0 != 0 {
            return None;
        }
        let mut inversions = 0usize;
        for b in other.indices() {
            inversions += (self.0 >> (b + 1)).count_ones() as usize;
        }
        Some(if inversions % 2 == 0 { 1 } else { -1 })
    }

    pub fn complement(self, d: usize) -> Self {
        MultiIndex(!self.0 & (((1u16 << d) - 1) as u8))
    }
}

/// All `k`-subsets of `0..d` in lexicographic order of their sorted index lists.
pub fn combinations(d: usize, k: usize) -> Vec<MultiIndex> {
    fn rec(start: usize, d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if left == 0 {
            out.push(MultiIndex::from_indices(cur));
            return;
        }
        for i in start..d {
            if d - i < left {
                break;
            }
            cur.push(i);
            rec(i + 1, d, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= d {
        rec(0, d, k, &mut Vec::new(), &mut out);
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Bidegree `(k, m)` of a double form over an ambient space of dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bidegree {
    d: usize,
    k: usize,
    m: usize,
}

impl Bidegree {
    pub fn new(d: usize, k: usize, m: usize) -> Result<Self, AlgebraError> {
        if d == 0 || d > MAX_DIM {
            return Err(AlgebraError::UnsupportedDimension(d));
        }
        if k > d || m > d {
            return Err(AlgebraError::InvalidBidegree { d, k, m });
        }
        Ok(Bidegree { d, k, m })
    }

    /// Signed-offset constructor; `None` when the shifted degree leaves `0..=d`.
    pub fn shifted(self, dk: isize, dm: isize) -> Option<Self> {
        let k = self.k as isize + dk;
        let m = self.m as isize + dm;
        if k < 0 || m < 0 {
            return None;
        }
        Bidegree::new(self.d, k as usize, m as usize).ok()
    }

    pub fn d(self) -> usize {
        self.d
    }
    pub fn k(self) -> usize {
        self.k
    }
    pub fn m(self) -> usize {
        self.m
    }

    pub fn transpose(self) -> Self {
        Bidegree { d: self.d, k: self.m, m: self.k }
    }

    pub fn dim(self) -> usize {
        binomial(self.d, self.k) * binomial(self.d, self.m)
    }

    pub fn basis(self) -> Basis {
        Basis::new(self)
    }
}

impl std::fmt::Display for Bidegree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{}) in d={}", self.k, self.m, self.d)
    }
}

/// Ordered basis of pairs `(I, J)` together with a reverse lookup table.
#[derive(Clone, Debug)]
pub struct Basis {
    bidegree: Bidegree,
    pairs: Vec<(MultiIndex, MultiIndex)>,
    lookup: Vec<usize>,
}

impl Basis {
    fn new(bidegree: Bidegree) -> Self {
        let forms = combinations(bidegree.d, bidegree.k);
        let vectors = combinations(bidegree.d, bidegree.m);
        let mut pairs = Vec::with_capacity(forms.len() * vectors.len());
        let mut lookup = vec![usize::MAX; 256];
        for &i in &forms {
            for &j in &vectors {
                lookup[(i.0 as usize) << 4 | j.0 as usize] = pairs.len();
                pairs.push((i, j));
            }
        }
        Basis { bidegree, pairs, lookup }
    }

    pub fn bidegree(&self) -> Bidegree {
        self.bidegree
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(MultiIndex, MultiIndex)] {
        &self.pairs
    }

    pub fn position(&self, form: MultiIndex, vector: MultiIndex) -> Option<usize> {
        let p = self.lookup[(form.0 as usize) << 4 | vector.0 as usize];
        (p != usize::MAX).then_some(p)
    }
}

/// Deterministic lexicographic enumeration of the basis pairs.
pub fn basis_enumerate(bidegree: Bidegree) -> Vec<(MultiIndex, MultiIndex)> {
    Basis::new(bidegree).pairs
}
