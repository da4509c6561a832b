//! Log-quantile-density transform: `psi(t) = -log f(Q(t))`, and its inverse.

use serde::{Deserialize, Serialize};

use crate::density::{
    cdf_of, quantile_from_cdf, quantile_of, truncate_normalize, DensityGrid, GridFunction,
    MixedDensityGrid,
};
use crate::error::{Error, Result};
use crate::grid::{interp_sorted, Grid};

/// Largest admissible `psi` before `exp(psi)` is treated as overflow.
pub const PSI_OVERFLOW: f64 = 700.0;

/// LQD representation of a density, sampled on a grid over probability levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqdFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction for LqdFunction {
    fn grid(&self) -> Grid {
        self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl LqdFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity("LQD values must be finite".into()));
        }
        Ok(LqdFunction { grid, values })
    }

    pub fn zero(grid: Grid) -> Self {
        LqdFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        LqdFunction { grid, values }
    }
}

/// Forward transform of a preconditioned density.
pub fn lqd(f_star: &MixedDensityGrid) -> LqdFunction {
    let grid = f_star.grid();
    let q = quantile_of(f_star);
    let values = q
        .values()
        .iter()
        .map(|&x| -grid.interpolate(f_star.values(), x).ln())
        .collect();
    LqdFunction { grid, values }
}

/// Forward transform without uniform preconditioning.
///
/// Diagnostic only: zero density values are floored at the smallest
/// positive grid value so that `psi` stays finite, which makes the
/// quantile density blow up wherever the density approaches zero.
pub fn lqd_unpreconditioned(f: &DensityGrid) -> Result<LqdFunction> {
    let grid = f.grid();
    let floor = f
        .values()
        .iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::EmptyDensity);
    }
    let q = quantile_from_cdf(&cdf_of(f));
    let values = q
        .values()
        .iter()
        .map(|&x| -grid.interpolate(f.values(), x).max(floor).ln())
        .collect();
    Ok(LqdFunction { grid, values })
}

/// Inverse transform.
///
/// Builds the quantile curve `Q(t) = cumint(exp psi) / theta` and the
/// density along it, `theta * exp(-psi(t))`, then resamples the pairs
/// `(Q(t_l), f(Q(t_l)))` onto the x-grid and renormalizes.
pub fn inverse_lqd(psi: &LqdFunction) -> Result<DensityGrid> {
    let grid = psi.grid;
    let max = psi.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > PSI_OVERFLOW || !max.is_finite() {
        return Err(Error::TransformOverflow(max));
    }
    // exp(psi - max): theta carries the same factor and cancels.
    let e: Vec<f64> = psi.values.iter().map(|v| (v - max).exp()).collect();
    let mut curve = grid.cumulative(&e);
    let theta = *curve.last().unwrap();
    if theta <= 0.0 {
        return Err(Error::EmptyDensity);
    }
    for q in curve.iter_mut() {
        *q /= theta;
    }
    *curve.last_mut().unwrap() = 1.0;
    let along: Vec<f64> = psi
        .values
        .iter()
        .map(|v| (theta * (max - v).exp()).min(f64::MAX))
        .collect();
    let resampled = interp_sorted(&curve, &along, &grid.nodes());
    truncate_normalize(grid, &resampled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{mix_with_uniform, AlphaRange};

    fn grid() -> Grid {
        Grid::new(1001).unwrap()
    }

    fn l1(a: &DensityGrid, b: &DensityGrid) -> f64 {
        let d: Vec<f64> = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .collect();
        a.grid().trapezoid(&d)
    }

    #[test]
    fn uniform_maps_to_zero() {
        let g = grid();
        let m = mix_with_uniform(&DensityGrid::uniform(g), 0.3, AlphaRange::Enforced).unwrap();
        let psi = lqd(&m);
        assert!(psi.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_density_closed_form() {
        let g = grid();
        let lin = DensityGrid::from_fn(g, |x| 2.0 * x).unwrap();
        let m = mix_with_uniform(&lin, 0.5, AlphaRange::Enforced).unwrap();
        let psi = lqd(&m);
        for (t, v) in g.nodes().iter().zip(psi.values()) {
            let q = -0.5 + (0.25 + 2.0 * t).sqrt();
            assert!((v + (q + 0.5).ln()).abs() < 1e-6);
        }
        assert!((psi.values()[0] - 0.5f64.ln().abs()).abs() < 1e-9);
        assert!((psi.values()[1000] + 1.5f64.ln()).abs() < 1e-9);
        assert!(psi.values().iter().all(|&v| v <= -(0.5f64.ln()) + 1e-12));
    }

    #[test]
    fn inverse_of_zero_is_uniform() {
        let g = grid();
        let f = inverse_lqd(&LqdFunction::zero(g)).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn inverse_of_closed_form_psi() {
        let g = grid();
        let values = g
            .nodes()
            .iter()
            .map(|t| -((-0.5 + (0.25 + 2.0 * t).sqrt()) + 0.5).ln())
            .collect();
        let f = inverse_lqd(&LqdFunction::new(g, values).unwrap()).unwrap();
        let truth = DensityGrid::from_fn(g, |x| x + 0.5).unwrap();
        assert!(l1(&f, &truth) < 1e-4, "{}", l1(&f, &truth));
    }

    #[test]
    fn inverse_is_shift_invariant() {
        let g = grid();
        let values: Vec<f64> = g.nodes().iter().map(|t| (5.0 * t).sin()).collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + 3.7).collect();
        let a = inverse_lqd(&LqdFunction::new(g, values).unwrap()).unwrap();
        let b = inverse_lqd(&LqdFunction::new(g, shifted).unwrap()).unwrap();
        assert!(l1(&a, &b) < 1e-10);
    }

    #[test]
    fn overflow_is_reported() {
        let g = grid();
        let mut values = vec![0.0; g.len()];
        values[3] = 701.0;
        assert!(matches!(
            inverse_lqd(&LqdFunction::new(g, values).unwrap()),
            Err(Error::TransformOverflow(_))
        ));
    }

    #[test]
    fn unpreconditioned_psi_blows_up_near_zero_density() {
        let g = grid();
        let beta = DensityGrid::from_fn(g, |x| x.powi(5) * (1.0 - x).powi(2)).unwrap();
        let psi = lqd_unpreconditioned(&beta).unwrap();
        assert!(psi.values()[0] > 25.0);
        let mixed = lqd(&mix_with_uniform(&beta, 0.3, AlphaRange::Enforced).unwrap());
        assert!(mixed.values()[0] <= -(0.3f64.ln()) + 1e-12);
    }
}
