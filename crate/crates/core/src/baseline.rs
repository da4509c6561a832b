//! Nadaraya–Watson baselines: direct distribution-to-distribution regression
//! (DDR) and distribution-to-warping-function regression (DWR), both using
//! the L1 distance between collaborator densities as the similarity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::density::{
    cdf_of, demix_uniform, mix_with_uniform, truncate_normalize, AlphaRange, DensityGrid,
    DensityPair, GridFunction, MixedDensityGrid,
};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Trapezoid integral of `|a - b|`.
pub fn l1_distance(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    a.grid().check_same(&b.grid())?;
    let d: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .collect();
    Ok(a.grid().trapezoid(&d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-u^2 / 2) / sqrt(2 pi)`
    Gaussian,
    /// `(1 - |u|)` on `|u| <= 1`
    Triangular,
}

impl KernelKind {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            KernelKind::Triangular => (1.0 - u.abs()).max(0.0),
        }
    }

    pub fn has_finite_support(self) -> bool {
        matches!(self, KernelKind::Triangular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthStrategy {
    Fixed(f64),
    /// Percentage of training pairs that must receive positive weight.
    NeighbourCount(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: BandwidthStrategy,
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Triangular => "triangular",
        };
        match self.bandwidth {
            BandwidthStrategy::Fixed(h) => write!(f, "{kind}:h={h}"),
            BandwidthStrategy::NeighbourCount(z) => write!(f, "{kind}:zeta={z}"),
        }
    }
}

impl KernelSpec {
    pub fn fixed(kind: KernelKind, h: f64) -> Self {
        KernelSpec {
            kind,
            bandwidth: BandwidthStrategy::Fixed(h),
        }
    }

    pub fn neighbours(kind: KernelKind, zeta_percent: f64) -> Self {
        KernelSpec {
            kind,
            bandwidth: BandwidthStrategy::NeighbourCount(zeta_percent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.bandwidth {
            BandwidthStrategy::Fixed(h) if !(h > 0.0 && h.is_finite()) => {
                Err(Error::InvalidKernel(format!("bandwidth must be positive, got {h}")))
            }
            BandwidthStrategy::NeighbourCount(z) if !(z > 0.0 && z <= 100.0) => Err(
                Error::InvalidKernel(format!("neighbour percentage must be in (0, 100], got {z}")),
            ),
            BandwidthStrategy::NeighbourCount(_) if !self.kind.has_finite_support() => Err(
                Error::InvalidKernel("neighbour-count bandwidth needs a finite-support kernel".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Bandwidth for one query, given its distances to the training predictors.
    pub fn resolve(&self, distances: &[f64]) -> Result<f64> {
        self.validate()?;
        match self.bandwidth {
            BandwidthStrategy::Fixed(h) => Ok(h),
            BandwidthStrategy::NeighbourCount(z) => bandwidth_from_neighbours(distances, z),
        }
    }

    /// Nadaraya–Watson weights for one query.
    pub fn weights(&self, distances: &[f64]) -> Result<Vec<f64>> {
        let h = self.resolve(distances)?;
        nw_weights(distances, self.kind, h)
    }
}

/// Normalized kernel weights `K(d_i / h) / sum_j K(d_j / h)`.
pub fn nw_weights(distances: &[f64], kind: KernelKind, h: f64) -> Result<Vec<f64>> {
    if distances.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(h > 0.0) {
        return Err(Error::InvalidKernel(format!("bandwidth must be positive, got {h}")));
    }
    let raw: Vec<f64> = match kind {
        // ratios of Gaussians, shifted by the nearest distance to avoid underflow
        KernelKind::Gaussian => {
            let nearest = distances.iter().copied().fold(f64::INFINITY, f64::min) / h;
            distances
                .iter()
                .map(|d| {
                    let u = d / h;
                    (-0.5 * (u - nearest) * (u + nearest)).exp()
                })
                .collect()
        }
        KernelKind::Triangular => distances.iter().map(|d| kind.eval(d / h)).collect(),
    };
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyNeighbourhood);
    }
    Ok(raw.into_iter().map(|k| k / total).collect())
}

/// Smallest bandwidth giving at least `ceil(n * zeta / 100)` strictly
/// positive kernel values: the k-th smallest distance times `1 + 1e-9`.
pub fn bandwidth_from_neighbours(distances: &[f64], zeta_percent: f64) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(zeta_percent > 0.0 && zeta_percent <= 100.0) {
        return Err(Error::InvalidKernel(format!(
            "neighbour percentage must be in (0, 100], got {zeta_percent}"
        )));
    }
    let n = distances.len();
    let k = ((n as f64 * zeta_percent / 100.0 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[k - 1] * (1.0 + 1e-9)).max(f64::MIN_POSITIVE))
}

fn collaborator_distances(training: &[DensityPair], g0: &DensityGrid) -> Result<Vec<f64>> {
    training
        .iter()
        .map(|p| l1_distance(g0, &p.collaborator))
        .collect()
}

/// Weighted average of the training target densities.
pub fn ddr_predict(
    training: &[DensityPair],
    g0: &DensityGrid,
    kernel: &KernelSpec,
) -> Result<DensityGrid> {
    if training.is_empty() {
        return Err(Error::InsufficientData("DDR needs at least one training pair".into()));
    }
    let weights = kernel.weights(&collaborator_distances(training, g0)?)?;
    let grid = g0.grid();
    let mut out = vec![0.0; grid.len()];
    for (w, p) in weights.iter().zip(training) {
        grid.check_same(&p.target.grid())?;
        if *w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(p.target.values()) {
            *o += w * v;
        }
    }
    Ok(DensityGrid::from_parts(grid, out))
}

/// Monotone map `gamma` of `[0, 1]` onto itself with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpingGrid {
    grid: Grid,
    gamma: Vec<f64>,
    derivative: Vec<f64>,
}

impl WarpingGrid {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn derivative(&self) -> &[f64] {
        &self.derivative
    }

    pub fn identity(grid: Grid) -> Self {
        WarpingGrid {
            grid,
            gamma: grid.nodes(),
            derivative: vec![1.0; grid.len()],
        }
    }

    /// Builds a warping from nodal values, differentiating numerically.
    pub fn from_gamma(grid: Grid, mut gamma: Vec<f64>) -> Result<Self> {
        grid.check_len(&gamma)?;
        let mut running = 0.0f64;
        for g in gamma.iter_mut() {
            running = running.max(g.clamp(0.0, 1.0));
            *g = running;
        }
        gamma[0] = 0.0;
        *gamma.last_mut().unwrap() = 1.0;
        let derivative = central_difference(&gamma, grid.spacing());
        Ok(WarpingGrid {
            grid,
            gamma,
            derivative,
        })
    }

    /// Pointwise convex combination of warpings.
    pub fn combine(weights: &[f64], warpings: &[&WarpingGrid]) -> Result<Self> {
        let first = warpings.first().ok_or(Error::EmptySet)?;
        let grid = first.grid;
        let mut gamma = vec![0.0; grid.len()];
        let mut derivative = vec![0.0; grid.len()];
        for (w, wp) in weights.iter().zip(warpings) {
            grid.check_same(&wp.grid)?;
            for l in 0..grid.len() {
                gamma[l] += w * wp.gamma[l];
                derivative[l] += w * wp.derivative[l];
            }
        }
        gamma[0] = 0.0;
        *gamma.last_mut().unwrap() = 1.0;
        Ok(WarpingGrid {
            grid,
            gamma,
            derivative,
        })
    }

    /// `g(gamma(x)) * gamma'(x)` on the grid, clamped at zero.
    pub fn pull_back<D: GridFunction + ?Sized>(&self, g: &D) -> Vec<f64> {
        self.gamma
            .iter()
            .zip(&self.derivative)
            .map(|(&x, &d)| (self.grid.interpolate(g.values(), x) * d).max(0.0))
            .collect()
    }
}

/// Central differences inside, second-order one-sided stencils at the
/// ends, clamped at zero.
fn central_difference(values: &[f64], w: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * w));
    for l in 1..n - 1 {
        d.push((values[l + 1] - values[l - 1]) / (2.0 * w));
    }
    d.push((3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * w));
    d.into_iter().map(|v| v.max(0.0)).collect()
}

/// Quantile-matching warping `gamma = Q_g ∘ F_f`, which satisfies
/// `f = g(gamma) * gamma'`.
pub fn estimate_warping(g: &MixedDensityGrid, f: &MixedDensityGrid) -> Result<WarpingGrid> {
    transport_warping(g, f)
}

/// [`estimate_warping`] for arbitrary grid densities. `g` must be positive
/// wherever `f` carries mass for the result to be meaningful.
pub fn transport_warping<G, F>(g: &G, f: &F) -> Result<WarpingGrid>
where
    G: GridFunction + ?Sized,
    F: GridFunction + ?Sized,
{
    let grid = g.grid();
    grid.check_same(&f.grid())?;
    let cdf_f = cdf_of(f);
    let gamma = cdf_of(g).invert_sorted(cdf_f.values());
    WarpingGrid::from_gamma(grid, gamma)
}

/// Training state for DWR: the per-pair warpings and collaborator densities.
#[derive(Debug, Clone)]
pub struct DwrModel {
    alpha: f64,
    collaborators: Vec<DensityGrid>,
    warpings: Vec<WarpingGrid>,
}

impl DwrModel {
    pub fn fit(training: &[DensityPair], alpha: f64, range: AlphaRange) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::InsufficientData("DWR needs at least one training pair".into()));
        }
        let warpings = training
            .iter()
            .map(|p| {
                let g = mix_with_uniform(&p.collaborator, alpha, range)?;
                let f = mix_with_uniform(&p.target, alpha, range)?;
                estimate_warping(&g, &f)
            })
            .collect::<Result<_>>()?;
        Ok(DwrModel {
            alpha,
            collaborators: training.iter().map(|p| p.collaborator.clone()).collect(),
            warpings,
        })
    }

    pub fn warpings(&self) -> &[WarpingGrid] {
        &self.warpings
    }

    /// Predicted warping for the collaborator density `g0`.
    pub fn predict_warping(&self, g0: &DensityGrid, kernel: &KernelSpec) -> Result<WarpingGrid> {
        let distances = self
            .collaborators
            .iter()
            .map(|g| l1_distance(g0, g))
            .collect::<Result<Vec<_>>>()?;
        let weights = kernel.weights(&distances)?;
        let used: Vec<(f64, &WarpingGrid)> = weights
            .iter()
            .zip(&self.warpings)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, wp)| (*w, wp))
            .collect();
        let (w, wp): (Vec<f64>, Vec<&WarpingGrid>) = used.into_iter().unzip();
        WarpingGrid::combine(&w, &wp)
    }

    pub fn predict(&self, g0: &DensityGrid, kernel: &KernelSpec) -> Result<DensityGrid> {
        let warping = self.predict_warping(g0, kernel)?;
        let g_star = mix_with_uniform(g0, self.alpha, AlphaRange::Relaxed)?;
        let f_star = truncate_normalize(g0.grid(), &warping.pull_back(&g_star))?;
        demix_uniform(&f_star, self.alpha)
    }
}

/// Transfers the kernel-weighted average training warping onto `g0`.
pub fn dwr_predict(
    training: &[DensityPair],
    g0: &DensityGrid,
    kernel: &KernelSpec,
    alpha: f64,
) -> Result<DensityGrid> {
    DwrModel::fit(training, alpha, AlphaRange::Enforced)?.predict(g0, kernel)
}
