//! Uniform grids on the unit interval and the quadrature/interpolation
//! primitives every other module builds on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of grid nodes.
pub const DEFAULT_POINTS: usize = 1001;

/// An evenly spaced partition `0 = t_1 < ... < t_T = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    n_points: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    n_points: usize,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::new(r.n_points)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr {
            n_points: g.n_points,
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n_points: DEFAULT_POINTS,
        }
    }
}

impl Grid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        Ok(Grid { n_points })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing `w = 1 / (T - 1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_points - 1) as f64
    }

    pub fn node(&self, l: usize) -> f64 {
        if l + 1 == self.n_points {
            1.0
        } else {
            l as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|l| self.node(l)).collect()
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.n_points != other.n_points {
            return Err(Error::GridMismatch(self.n_points, other.n_points));
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_points {
            return Err(Error::GridMismatch(self.n_points, values.len()));
        }
        Ok(())
    }

    /// Trapezoid rule over `[0, 1]`.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        trapezoid(values, self.spacing())
    }

    /// Running trapezoid integral, starting at 0.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        cumulative_trapezoid(values, self.spacing())
    }

    /// Piecewise-linear interpolation of nodal values at `x`, clamped to `[0, 1]`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let last = self.n_points - 1;
        if x <= 0.0 {
            return values[0];
        }
        if x >= 1.0 {
            return values[last];
        }
        let pos = x * last as f64;
        let l = (pos.floor() as usize).min(last - 1);
        let frac = pos - l as f64;
        values[l] + frac * (values[l + 1] - values[l])
    }
}

pub fn trapezoid(values: &[f64], w: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            w * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

pub fn cumulative_trapezoid(values: &[f64], w: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for pair in values.windows(2) {
        acc += 0.5 * w * (pair[0] + pair[1]);
        out.push(acc);
    }
    out
}

/// Linear interpolation of `(xs, ys)` at `x`, where `xs` is nondecreasing.
///
/// Queries outside the range take the nearest end value. Zero-width
/// intervals are skipped.
pub fn interp_monotone(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    debug_assert_eq!(n, ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // first index with xs[i] > x
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let dx = xs[hi] - xs[lo];
    if dx <= 0.0 {
        return ys[hi];
    }
    ys[lo] + (x - xs[lo]) / dx * (ys[hi] - ys[lo])
}

/// Interpolates `(xs, ys)` at every query in `queries` (both sorted ascending)
/// with a single merge pass.
pub fn interp_sorted(xs: &[f64], ys: &[f64], queries: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = Vec::with_capacity(queries.len());
    let mut hi = 1usize;
    for &q in queries {
        if q <= xs[0] {
            out.push(ys[0]);
            continue;
        }
        if q >= xs[n - 1] {
            out.push(ys[n - 1]);
            continue;
        }
        while hi < n - 1 && xs[hi] <= q {
            hi += 1;
        }
        let lo = hi - 1;
        let dx = xs[hi] - xs[lo];
        if dx <= 0.0 {
            out.push(ys[hi]);
        } else {
            out.push(ys[lo] + (q - xs[lo]) / dx * (ys[hi] - ys[lo]));
        }
    }
    out
}
