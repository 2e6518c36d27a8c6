//! One-dimensional staggered axes.
//!
//! A component whose multi-indices hit axis `a` exactly `μ` times (`μ ∈ {0,1,2}`,
//! counting both slots) sits at offsets `(i + μ/2)·h` along that axis. On a
//! bounded axis with `n` cells this gives `n+1−μ` points, so `μ = 2` lives on
//! the interior nodes only. On a periodic axis every `μ` has `n` points.

use serde::{Deserialize, Serialize};

/// Sparse row of a 1D operator: `(source index, weight)`.
pub type Row = Vec<(usize, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub length: f64,
    pub cells: usize,
    pub periodic: bool,
}

/// Which end of a bounded axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Low,
    High,
}

impl Axis {
    pub fn bounded(start: f64, end: f64, cells: usize) -> Self {
        Axis { start, length: end - start, cells, periodic: false }
    }

    pub fn periodic(start: f64, length: f64, cells: usize) -> Self {
        Axis { start, length, cells, periodic: true }
    }

    pub fn h(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn end(&self) -> f64 {
        self.start + self.length
    }

    pub fn count(&self, mu: usize) -> usize {
        if self.periodic {
            self.cells
        } else {
            self.cells + 1 - mu
        }
    }

    pub fn position(&self, mu: usize, i: usize) -> f64 {
        self.start + (i as f64 + 0.5 * mu as f64) * self.h()
    }

    /// Quadrature weight of point `i` at multiplicity `mu`.
    pub fn weight(&self, mu: usize, i: usize) -> f64 {
        let h = self.h();
        if self.periodic {
            return h;
        }
        let last = self.count(mu) - 1;
        let end = i == 0 || i == last;
        match mu {
            0 if end => 0.5 * h,
            2 if end => 1.5 * h,
            _ => h,
        }
    }

    /// Index of the point nearest to the given end.
    pub fn end_index(&self, mu: usize, side: Side) -> usize {
        match side {
            Side::Low => 0,
            Side::High => self.count(mu) - 1,
        }
    }

    pub fn boundary_coordinate(&self, side: Side) -> f64 {
        match side {
            Side::Low => self.start,
            Side::High => self.end(),
        }
    }

    /// Source coordinate of target point `i`, in units of source indices.
    fn source_coordinate(&self, mu_s: usize, mu_t: usize, i: usize) -> f64 {
        i as f64 + 0.5 * (mu_t as f64 - mu_s as f64)
    }

    fn wrap(&self, j: isize) -> usize {
        j.rem_euclid(self.cells as isize) as usize
    }

    /// Linear interpolation from `mu_s` points to `mu_t` points, extrapolating
    /// from the two outermost points past a bounded end.
    pub fn interpolation(&self, mu_s: usize, mu_t: usize) -> Vec<Row> {
        (0..self.count(mu_t))
            .map(|i| {
                let u = self.source_coordinate(mu_s, mu_t, i);
                let (j, t) = self.bracket(mu_s, u);
                let mut row = Vec::with_capacity(2);
                if t != 1.0 {
                    row.push((j.0, 1.0 - t));
                }
                if t != 0.0 {
                    row.push((j.1, t));
                }
                row
            })
            .collect()
    }

    /// First derivative from `mu_s` points evaluated at `mu_t` points. Targets
    /// between two sources get the compact difference; targets on a source point
    /// get a central difference, one-sided at a bounded end.
    pub fn derivative(&self, mu_s: usize, mu_t: usize) -> Vec<Row> {
        let h = self.h();
        let n_s = self.count(mu_s) as isize;
        (0..self.count(mu_t))
            .map(|i| {
                let u = self.source_coordinate(mu_s, mu_t, i);
                if u.fract() == 0.0 {
                    let c = u as isize;
                    if self.periodic {
                        return vec![(self.wrap(c + 1), 0.5 / h), (self.wrap(c - 1), -0.5 / h)];
                    }
                    // targets past the last source (μ=2 skips the boundary nodes) reuse the end pair
                    let (lo, hi) = if c - 1 < 0 {
                        (c.max(0), c.max(0) + 1)
                    } else if c + 1 >= n_s {
                        (c.min(n_s - 1) - 1, c.min(n_s - 1))
                    } else {
                        (c - 1, c + 1)
                    };
                    let w = 1.0 / ((hi - lo) as f64 * h);
                    return vec![(hi as usize, w), (lo as usize, -w)];
                }
                let (j, _) = self.bracket(mu_s, u);
                vec![(j.1, 1.0 / h), (j.0, -1.0 / h)]
            })
            .collect()
    }

    /// The two source indices bracketing `u` and the fractional weight of the second.
    fn bracket(&self, mu_s: usize, u: f64) -> ((usize, usize), f64) {
        if self.periodic {
            let j = u.floor();
            let t = u - j;
            let j = j as isize;
            return ((self.wrap(j), self.wrap(j + 1)), t);
        }
        let last = self.count(mu_s) as isize - 1;
        let j = (u.floor() as isize).clamp(0, last - 1);
        let t = u - j as f64;
        ((j as usize, (j + 1) as usize), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_weights_integrate_length() {
        let ax = Axis::bounded(0.0, 1.0, 8);
        for mu in 0..3 {
            let total: f64 = (0..ax.count(mu)).map(|i| ax.weight(mu, i)).sum();
            assert!((total - 1.0).abs() < 1e-14, "mu={mu} total={total}");
        }
        assert_eq!(ax.count(0), 9);
        assert_eq!(ax.count(2), 7);
        assert!((ax.position(2, 0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn interpolation_is_exact_on_linears() {
        for ax in [Axis::bounded(0.0, 1.0, 8), Axis::bounded(1.0, 2.0, 9)] {
            for mu_s in 0..3 {
                for mu_t in 0..3 {
                    let rows = ax.interpolation(mu_s, mu_t);
                    for (i, row) in rows.iter().enumerate() {
                        let v: f64 = row.iter().map(|&(j, w)| w * (2.0 * ax.position(mu_s, j) - 1.0)).sum();
                        let x = ax.position(mu_t, i);
                        assert!((v - (2.0 * x - 1.0)).abs() < 1e-12);
                    }
                    let drows = ax.derivative(mu_s, mu_t);
                    for (i, row) in drows.iter().enumerate() {
                        let v: f64 = row.iter().map(|&(j, w)| w * (3.0 * ax.position(mu_s, j))).sum();
                        assert!((v - 3.0).abs() < 1e-10, "mu_s={mu_s} mu_t={mu_t} i={i} v={v} row={row:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn periodic_shift_by_full_cell() {
        let ax = Axis::periodic(0.0, 1.0, 8);
        let rows = ax.interpolation(0, 2);
        assert_eq!(rows[7], vec![(0, 1.0)]);
    }
}
