//! Densities on the unit interval, from raw samples to the mixed form and
//! its quantile function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interp_sorted, Grid};

/// Mass tolerance for [`DensityGrid`].
pub const MASS_TOL: f64 = 1e-9;

/// Read access shared by every function sampled on a [`Grid`].
pub trait GridFunction {
    fn grid(&self) -> Grid;
    fn values(&self) -> &[f64];
}

macro_rules! grid_function {
    ($t:ty) => {
        impl GridFunction for $t {
            fn grid(&self) -> Grid {
                self.grid
            }
            fn values(&self) -> &[f64] {
                &self.values
            }
        }
    };
}

/// A probability density on `[0, 1]`, sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Grid,
    values: Vec<f64>,
}
grid_function!(DensityGrid);

impl DensityGrid {
    /// Validates nonnegativity and unit trapezoid mass.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!(
                "value {v} is negative or not finite"
            )));
        }
        let mass = grid.trapezoid(&values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!(
                "integrates to {mass}, expected 1"
            )));
        }
        Ok(DensityGrid { grid, values })
    }

    /// Samples `f` at the grid nodes and normalizes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let raw: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        truncate_normalize(grid, &raw)
    }

    pub fn uniform(grid: Grid) -> Self {
        DensityGrid {
            grid,
            values: vec![1.0; grid.len()],
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>) -> Self {
        DensityGrid { grid, values }
    }

    pub fn mass(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    /// Linear interpolation between nodes.
    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    /// Location of the largest grid value.
    pub fn mode(&self) -> f64 {
        let (l, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        self.grid.node(l)
    }
}

/// One training observation: the collaborating sensor's density and the
/// target sensor's density for the same segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub collaborator: DensityGrid,
    pub target: DensityGrid,
}

/// `(1 - alpha) f + alpha`, bounded below by `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDensityGrid {
    grid: Grid,
    base: DensityGrid,
    alpha: f64,
    values: Vec<f64>,
}
grid_function!(MixedDensityGrid);

impl MixedDensityGrid {
    pub fn base(&self) -> &DensityGrid {
        &self.base
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The mixed density as a plain [`DensityGrid`].
    pub fn to_density(&self) -> DensityGrid {
        DensityGrid {
            grid: self.grid,
            values: self.values.clone(),
        }
    }
}

/// Cumulative distribution on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfGrid {
    grid: Grid,
    values: Vec<f64>,
}
grid_function!(CdfGrid);

impl CdfGrid {
    /// Inverts the CDF at sorted probabilities by piecewise-linear
    /// interpolation, after breaking exact ties with `l * 1e-14`.
    pub fn invert_sorted(&self, probabilities: &[f64]) -> Vec<f64> {
        let strict: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(l, &p)| p + l as f64 * 1e-14)
            .collect();
        interp_sorted(&strict, &self.grid.nodes(), probabilities)
    }
}

/// Quantile function sampled on a grid over probability levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    grid: Grid,
    values: Vec<f64>,
}
grid_function!(QuantileGrid);

impl QuantileGrid {
    pub fn eval(&self, t: f64) -> f64 {
        self.grid.interpolate(&self.values, t)
    }
}

/// Estimated support of a sensor's raw measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lower: f64,
    pub upper: f64,
    pub kappa_lower: f64,
    pub kappa_upper: f64,
    pub sample_std: f64,
    pub sample_size: usize,
}

impl SupportInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lower) / self.width()
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lower + u * self.width()
    }

    /// Change of variables for a density given in raw units:
    /// `f_unit(u) = width * f_raw(lower + u * width)`.
    pub fn density_to_unit(&self, grid: Grid, f_raw: impl Fn(f64) -> f64) -> Result<DensityGrid> {
        let w = self.width();
        DensityGrid::from_fn(grid, |u| w * f_raw(self.from_unit(u)))
    }

    /// Density in raw units at raw location `x`.
    pub fn density_from_unit(&self, f: &DensityGrid, x: f64) -> f64 {
        let u = self.to_unit(x);
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        f.eval(u) / self.width()
    }
}

/// Mean and `n - 1` standard deviation.
pub(crate) fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Widens the sample range by `kappa * s / sqrt(n)` on each side.
pub fn estimate_support(samples: &[f64], kappa_lower: f64, kappa_upper: f64) -> Result<SupportInterval> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "support estimation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(kappa_lower >= 1.0 && kappa_upper >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "kappa values must be >= 1, got ({kappa_lower}, {kappa_upper})"
        )));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidDensity(format!("non-finite sample {v}")));
    }
    let (_, s) = mean_std(samples);
    if s == 0.0 {
        return Err(Error::DegenerateSample);
    }
    let n = samples.len();
    let margin = s / (n as f64).sqrt();
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SupportInterval {
        lower: min - kappa_lower * margin,
        upper: max + kappa_upper * margin,
        kappa_lower,
        kappa_upper,
        sample_std: s,
        sample_size: n,
    })
}

/// Affine map of raw samples onto `[0, 1]`.
pub fn rescale_to_unit(samples: &[f64], support: &SupportInterval) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|&x| {
            if x < support.lower || x > support.upper || !x.is_finite() {
                Err(Error::OutOfSupport {
                    value: x,
                    lower: support.lower,
                    upper: support.upper,
                })
            } else {
                Ok(support.to_unit(x).clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// Sample quantile with linear interpolation between order statistics
/// (type 7). `sorted` must be ascending.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 * min(s, IQR / 1.34) * n^(-1/5)`.
///
/// Falls back to `s` when the IQR is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("bandwidth needs 2 samples".into()));
    }
    let (_, s) = mean_std(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let mut spread = s.min(iqr / 1.34);
    if spread <= 0.0 {
        spread = s;
    }
    if spread <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Kernel contributions beyond this many bandwidths are below 1e-17 of the peak.
const KDE_CUTOFF: f64 = 9.0;

/// Gaussian KDE with Silverman bandwidth, evaluated at the grid nodes.
///
/// The result is not normalized over `[0, 1]`; pass it to
/// [`truncate_normalize`].
pub fn kde_estimate(unit_samples: &[f64], grid: Grid) -> Result<Vec<f64>> {
    if unit_samples.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "kernel density estimation needs at least 5 samples, got {}",
            unit_samples.len()
        )));
    }
    if let Some(&x) = unit_samples
        .iter()
        .find(|x| !(0.0..=1.0).contains(*x))
    {
        return Err(Error::OutOfSupport {
            value: x,
            lower: 0.0,
            upper: 1.0,
        });
    }
    let h = silverman_bandwidth(unit_samples)?;
    Ok(kde_with_bandwidth(unit_samples, grid, h))
}

pub(crate) fn kde_with_bandwidth(samples: &[f64], grid: Grid, h: f64) -> Vec<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = KDE_CUTOFF * h;
    grid.nodes()
        .into_iter()
        .map(|x| {
            let lo = sorted.partition_point(|&s| s < x - reach);
            let hi = sorted.partition_point(|&s| s <= x + reach);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            norm * sum
        })
        .collect()
}

/// KDE followed by truncation to `[0, 1]`.
pub fn estimate_density(unit_samples: &[f64], grid: Grid) -> Result<DensityGrid> {
    let raw = kde_estimate(unit_samples, grid)?;
    truncate_normalize(grid, &raw)
}

/// Divides raw nonnegative values by their trapezoid integral over `[0, 1]`.
pub fn truncate_normalize(grid: Grid, raw: &[f64]) -> Result<DensityGrid> {
    grid.check_len(raw)?;
    if let Some(v) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDensity(format!(
            "raw value {v} is negative or not finite"
        )));
    }
    let mass = grid.trapezoid(raw);
    if mass <= 0.0 {
        return Err(Error::EmptyDensity);
    }
    Ok(DensityGrid {
        grid,
        values: raw.iter().map(|v| v / mass).collect(),
    })
}

/// How strictly [`mix_with_uniform`] checks the mixture weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaRange {
    /// `0.2 <= alpha <= 0.5`.
    #[default]
    Enforced,
    /// `0 < alpha < 1`, with a logged warning outside the enforced range.
    Relaxed,
}

pub(crate) fn check_alpha(alpha: f64, range: AlphaRange) -> Result<()> {
    let strict_ok = (0.2..=0.5).contains(&alpha);
    match range {
        AlphaRange::Enforced if !strict_ok => Err(Error::AlphaOutOfRange(alpha)),
        AlphaRange::Relaxed if !(alpha > 0.0 && alpha < 1.0) => Err(Error::AlphaOutOfRange(alpha)),
        AlphaRange::Relaxed if !strict_ok => {
            log::warn!("mixture weight alpha = {alpha} is outside the recommended [0.2, 0.5]");
            Ok(())
        }
        _ => Ok(()),
    }
}

/// `f*(x) = (1 - alpha) f(x) + alpha`.
pub fn mix_with_uniform(f: &DensityGrid, alpha: f64, range: AlphaRange) -> Result<MixedDensityGrid> {
    check_alpha(alpha, range)?;
    let values = f.values.iter().map(|v| (1.0 - alpha) * v + alpha).collect();
    Ok(MixedDensityGrid {
        grid: f.grid,
        base: f.clone(),
        alpha,
        values,
    })
}

/// Removes the uniform component from an estimated mixture:
/// `|f* - alpha| / (1 - alpha)`, renormalized.
pub fn demix_uniform(f_star: &DensityGrid, alpha: f64) -> Result<DensityGrid> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let raw: Vec<f64> = f_star
        .values
        .iter()
        .map(|v| (v - alpha).abs() / (1.0 - alpha))
        .collect();
    let mass = f_star.grid.trapezoid(&raw);
    if mass <= f64::MIN_POSITIVE {
        return Err(Error::EmptyDensity);
    }
    Ok(DensityGrid {
        grid: f_star.grid,
        values: raw.into_iter().map(|v| v / mass).collect(),
    })
}

/// Cumulative trapezoid integral, normalized so `F(1) = 1`, clamped to
/// `[0, 1]` and forced nondecreasing.
pub fn cdf_of<D: GridFunction + ?Sized>(f: &D) -> CdfGrid {
    let grid = f.grid();
    let mut values = grid.cumulative(f.values());
    let total = *values.last().unwrap();
    let mut running = 0.0f64;
    for v in values.iter_mut() {
        running = running.max((*v / total).clamp(0.0, 1.0));
        *v = running;
    }
    values[0] = 0.0;
    *values.last_mut().unwrap() = 1.0;
    CdfGrid { grid, values }
}

/// Quantile function `Q = F^{-1}` on the probability grid.
pub fn quantile_of(f: &MixedDensityGrid) -> QuantileGrid {
    quantile_from_cdf(&cdf_of(f))
}

pub(crate) fn quantile_from_cdf(cdf: &CdfGrid) -> QuantileGrid {
    let grid = cdf.grid;
    let mut values = cdf.invert_sorted(&grid.nodes());
    values[0] = 0.0;
    *values.last_mut().unwrap() = 1.0;
    QuantileGrid { grid, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(1001).unwrap()
    }

    #[test]
    fn support_three_samples() {
        let s = estimate_support(&[1.0, 2.0, 3.0], 1.0, 1.0).unwrap();
        let d = 1.0 / 3f64.sqrt();
        assert!((s.lower - (1.0 - d)).abs() < 1e-12);
        assert!((s.upper - (3.0 + d)).abs() < 1e-12);
        assert!((s.lower - 0.42265).abs() < 1e-5);
        assert!((s.upper - 3.57735).abs() < 1e-5);
    }

    #[test]
    fn support_two_samples() {
        let s = estimate_support(&[0.0, 1.0], 1.0, 1.0).unwrap();
        assert!((s.lower + 0.5).abs() < 1e-12);
        assert!((s.upper - 1.5).abs() < 1e-12);
        assert!((s.sample_std - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn support_errors() {
        assert!(matches!(
            estimate_support(&[5.0, 5.0, 5.0], 1.0, 1.0),
            Err(Error::DegenerateSample)
        ));
        assert!(matches!(
            estimate_support(&[5.0], 1.0, 1.0),
            Err(Error::InsufficientData(_))
        ));
        assert!(estimate_support(&[1.0, 2.0], 0.5, 1.0).is_err());
    }

    #[test]
    fn rescale_examples() {
        let s = SupportInterval {
            lower: 0.0,
            upper: 4.0,
            kappa_lower: 1.0,
            kappa_upper: 1.0,
            sample_std: 1.0,
            sample_size: 3,
        };
        assert_eq!(rescale_to_unit(&[1.0, 2.0, 3.0], &s).unwrap(), vec![0.25, 0.5, 0.75]);
        assert!(matches!(
            rescale_to_unit(&[5.0], &s),
            Err(Error::OutOfSupport { .. })
        ));
        let unit = SupportInterval { upper: 1.0, ..s };
        assert_eq!(rescale_to_unit(&[0.0, 1.0], &unit).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn rescale_is_invertible() {
        let raw = [-13.7, 2.25, 101.5, 40.0];
        let s = estimate_support(&raw, 1.5, 2.0).unwrap();
        let u = rescale_to_unit(&raw, &s).unwrap();
        for (x, u) in raw.iter().zip(&u) {
            assert!(((s.from_unit(*u) - x) / x).abs() < 1e-12);
        }
    }

    #[test]
    fn truncate_normalize_examples() {
        let g = grid();
        let c = truncate_normalize(g, &vec![2.0; g.len()]).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let lin = truncate_normalize(g, &g.nodes()).unwrap();
        for (t, v) in g.nodes().iter().zip(lin.values()) {
            assert!((v - 2.0 * t).abs() < 1e-12);
        }
        assert!(matches!(
            truncate_normalize(g, &vec![0.0; g.len()]),
            Err(Error::EmptyDensity)
        ));
    }

    #[test]
    fn mixing_examples() {
        let g = grid();
        let u = DensityGrid::uniform(g);
        let m = mix_with_uniform(&u, 0.3, AlphaRange::Enforced).unwrap();
        assert!(m.values().iter().all(|v| (v - 1.0).abs() < 1e-15));

        let lin = DensityGrid::from_fn(g, |x| 2.0 * x).unwrap();
        let m = mix_with_uniform(&lin, 0.5, AlphaRange::Enforced).unwrap();
        for (t, v) in g.nodes().iter().zip(m.values()) {
            assert!((v - (t + 0.5)).abs() < 1e-12);
        }
        assert!(m.values().iter().all(|&v| v >= 0.5));

        assert!(matches!(
            mix_with_uniform(&lin, 0.1, AlphaRange::Enforced),
            Err(Error::AlphaOutOfRange(_))
        ));
        assert!(mix_with_uniform(&lin, 0.1, AlphaRange::Relaxed).is_ok());
        assert!(mix_with_uniform(&lin, 1.0, AlphaRange::Relaxed).is_err());
    }

    #[test]
    fn demix_examples() {
        let g = grid();
        let mixed = DensityGrid::from_fn(g, |x| x + 0.5).unwrap();
        let f = demix_uniform(&mixed, 0.5).unwrap();
        for (t, v) in g.nodes().iter().zip(f.values()) {
            assert!((v - 2.0 * t).abs() < 1e-12);
        }
        let u = demix_uniform(&DensityGrid::uniform(g), 0.3).unwrap();
        assert!(u.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(matches!(
            demix_uniform(&DensityGrid::uniform(g), 1.0),
            Err(Error::AlphaOutOfRange(_))
        ));
    }

    #[test]
    fn demix_of_constant_alpha_is_empty() {
        // Not a valid density, but exercises the W = 0 branch.
        let g = grid();
        let flat = DensityGrid {
            grid: g,
            values: vec![0.4; g.len()],
        };
        assert!(matches!(demix_uniform(&flat, 0.4), Err(Error::EmptyDensity)));
    }

    #[test]
    fn cdf_examples() {
        let g = grid();
        let c = cdf_of(&DensityGrid::uniform(g));
        for (t, v) in g.nodes().iter().zip(c.values()) {
            assert!((v - t).abs() < 1e-12);
        }
        let c = cdf_of(&DensityGrid::from_fn(g, |x| 2.0 * x).unwrap());
        for (t, v) in g.nodes().iter().zip(c.values()) {
            assert!((v - t * t).abs() < 1e-4);
        }
        let lin = DensityGrid::from_fn(g, |x| 2.0 * x).unwrap();
        let m = mix_with_uniform(&lin, 0.5, AlphaRange::Enforced).unwrap();
        let c = cdf_of(&m);
        for (t, v) in g.nodes().iter().zip(c.values()) {
            assert!((v - (t * t / 2.0 + t / 2.0)).abs() < 1e-4);
        }
        assert_eq!(c.values()[0], 0.0);
        assert_eq!(*c.values().last().unwrap(), 1.0);
    }

    #[test]
    fn quantile_examples() {
        let g = grid();
        let u = mix_with_uniform(&DensityGrid::uniform(g), 0.3, AlphaRange::Enforced).unwrap();
        let q = quantile_of(&u);
        for (t, v) in g.nodes().iter().zip(q.values()) {
            assert!((v - t).abs() < 1e-10);
        }
        let lin = DensityGrid::from_fn(g, |x| 2.0 * x).unwrap();
        let m = mix_with_uniform(&lin, 0.5, AlphaRange::Enforced).unwrap();
        let q = quantile_of(&m);
        for (t, v) in g.nodes().iter().zip(q.values()) {
            let exact = -0.5 + (0.25 + 2.0 * t).sqrt();
            assert!((v - exact).abs() < 1e-6, "t={t} q={v} exact={exact}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let g = grid();
        let base = DensityGrid::from_fn(g, |x| (6.0 * x).sin().powi(2) + 0.01).unwrap();
        let m = mix_with_uniform(&base, 0.2, AlphaRange::Enforced).unwrap();
        let f = cdf_of(&m);
        let q = quantile_of(&m);
        let w = g.spacing();
        for (t, p) in g.nodes().iter().zip(f.values()) {
            assert!((q.eval(*p) - t).abs() < 2.0 * w);
        }
    }

    #[test]
    fn silverman_matches_hand_computation() {
        let xs: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        // s = sqrt(7.5) / 10, IQR = 0.4 (type 7)
        let s = 7.5f64.sqrt() / 10.0;
        let expected = 0.9 * s.min(0.4 / 1.34) * 9f64.powf(-0.2);
        assert!((silverman_bandwidth(&xs).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn kde_peaks_at_dominant_value() {
        let g = grid();
        let mut xs = vec![0.3; 50];
        xs.extend([0.1, 0.5, 0.7, 0.9, 0.2]);
        let d = estimate_density(&xs, g).unwrap();
        assert!((d.mode() - 0.3).abs() < 2.0 * g.spacing());
    }

    #[test]
    fn kde_rejects_small_samples() {
        assert!(matches!(
            kde_estimate(&[0.1, 0.2, 0.3, 0.4], grid()),
            Err(Error::InsufficientData(_))
        ));
    }
}
