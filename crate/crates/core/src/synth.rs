//! Seeded generator of paired-sensor days.
//!
//! Each day and sensor is a mixture of 24 hourly truncated Gaussians on
//! `[0, 1]`. A latent draw (level, daily amplitude and phase, spread and
//! hourly weight logits) fixes the components through a per-sensor
//! template. Sensor B's latent is `c * shared + (1 - c) * independent`,
//! where the shared draw is sensor A's.
//!
//! Per-day seeds come from the master seed by the splitmix64 counter rule
//! `day_seed(s, i) = mix64(s + (i + 1) * 0x9E3779B97F4A7C15)`; every random
//! number of day `i` is drawn from a ChaCha8 stream seeded with it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::grid::Grid;

pub const HOURS: usize = 24;
pub const DEFAULT_SAMPLES_PER_DAY: usize = 8640;
pub const DEFAULT_COUPLING: f64 = 0.8;
pub const DEFAULT_DAYS: usize = 178;
pub const MIN_SAMPLES_PER_DAY: usize = 100;

/// Resolution used to locate analytic modes.
const MODE_GRID: usize = 4001;
const MAX_REJECTIONS: usize = 100_000;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of day `index` under master seed `master`.
pub fn day_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Which sensor of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sensor {
    A,
    B,
}

/// Maps latent hourly locations and spreads to one sensor's units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorTemplate {
    pub offset: f64,
    pub gain: f64,
    pub scale: f64,
}

/// Uniform ranges of the latent day parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPrior {
    pub level: (f64, f64),
    pub amplitude: (f64, f64),
    pub phase: (f64, f64),
    pub spread: (f64, f64),
    /// Standard deviation of the Gaussian hourly weight logits.
    pub logit_sd: f64,
}

impl Default for LatentPrior {
    fn default() -> Self {
        LatentPrior {
            level: (0.2, 0.8),
            amplitude: (0.03, 0.12),
            phase: (-0.6, 0.6),
            spread: (0.02, 0.06),
            logit_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Coupling `c` in `[0, 1]` between the two sensors' latents.
    pub coupling: f64,
    pub samples_per_day: usize,
    pub prior: LatentPrior,
    pub sensor_a: SensorTemplate,
    pub sensor_b: SensorTemplate,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            coupling: DEFAULT_COUPLING,
            samples_per_day: DEFAULT_SAMPLES_PER_DAY,
            prior: LatentPrior::default(),
            sensor_a: SensorTemplate {
                offset: 0.0,
                gain: 1.0,
                scale: 1.0,
            },
            sensor_b: SensorTemplate {
                offset: 0.05,
                gain: 0.9,
                scale: 1.3,
            },
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidScenario(format!("bad {name} range [{lo}, {hi}]")));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::InvalidScenario(format!(
                "coupling must be in [0, 1], got {}",
                self.coupling
            )));
        }
        if self.samples_per_day < MIN_SAMPLES_PER_DAY {
            return Err(Error::InvalidScenario(format!(
                "at least {MIN_SAMPLES_PER_DAY} samples per day are required, got {}",
                self.samples_per_day
            )));
        }
        let p = &self.prior;
        check_range("level", p.level)?;
        check_range("amplitude", p.amplitude)?;
        check_range("phase", p.phase)?;
        check_range("spread", p.spread)?;
        if !(p.spread.0 > 0.0) || !(p.logit_sd >= 0.0) || !p.logit_sd.is_finite() {
            return Err(Error::InvalidScenario("spreads must be positive".into()));
        }
        for t in [&self.sensor_a, &self.sensor_b] {
            if !(t.offset.is_finite() && t.gain.is_finite() && t.scale > 0.0 && t.scale.is_finite())
            {
                return Err(Error::InvalidScenario(format!("bad sensor template {t:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Latent {
    level: f64,
    amplitude: f64,
    phase: f64,
    spread: f64,
    logits: Vec<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

impl Latent {
    fn draw(rng: &mut ChaCha8Rng, prior: &LatentPrior) -> Self {
        let n = std_normal();
        Latent {
            level: uniform(rng, prior.level),
            amplitude: uniform(rng, prior.amplitude),
            phase: uniform(rng, prior.phase),
            spread: uniform(rng, prior.spread),
            logits: (0..HOURS)
                .map(|_| prior.logit_sd * n.inverse_cdf(open_unit(rng)))
                .collect(),
        }
    }

    fn blend(shared: &Latent, own: &Latent, c: f64) -> Self {
        let mix = |a: f64, b: f64| c * a + (1.0 - c) * b;
        Latent {
            level: mix(shared.level, own.level),
            amplitude: mix(shared.amplitude, own.amplitude),
            phase: mix(shared.phase, own.phase),
            spread: mix(shared.spread, own.spread),
            logits: shared
                .logits
                .iter()
                .zip(&own.logits)
                .map(|(&a, &b)| mix(a, b))
                .collect(),
        }
    }

    fn components(&self, t: &SensorTemplate) -> Vec<Component> {
        let top = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.logits.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = e.iter().sum();
        e.iter()
            .enumerate()
            .map(|(k, w)| {
                let hour = 2.0 * PI * k as f64 / HOURS as f64;
                let loc = self.level + self.amplitude * (hour + self.phase).sin();
                Component {
                    location: (t.offset + t.gain * loc).clamp(0.0, 1.0),
                    scale: t.scale * self.spread,
                    weight: w / total,
                }
            })
            .collect()
    }
}

/// One hourly component: a Gaussian truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub location: f64,
    pub scale: f64,
    pub weight: f64,
}

impl Component {
    fn bounds(&self, n: &Normal) -> (f64, f64) {
        (
            n.cdf(-self.location / self.scale),
            n.cdf((1.0 - self.location) / self.scale),
        )
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let n = std_normal();
        let (lo, hi) = self.bounds(&n);
        n.pdf((x - self.location) / self.scale) / (self.scale * (hi - lo))
    }

    fn sample(&self, n: &Normal, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.bounds(n);
        let u = lo + (hi - lo) * open_unit(rng);
        (self.location + self.scale * n.inverse_cdf(u.min(1.0 - f64::EPSILON))).clamp(0.0, 1.0)
    }
}

/// Components of both sensors for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayScenario {
    pub components_a: Vec<Component>,
    pub components_b: Vec<Component>,
    pub coupling: f64,
    pub samples_per_day: usize,
}

fn check_components(cs: &[Component]) -> Result<()> {
    if cs.is_empty() {
        return Err(Error::InvalidScenario("no components".into()));
    }
    let mut total = 0.0;
    for c in cs {
        if !(c.weight >= 0.0) || !(c.scale > 0.0) || !(0.0..=1.0).contains(&c.location) {
            return Err(Error::InvalidScenario(format!("invalid component {c:?}")));
        }
        total += c.weight;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidScenario(format!("weights sum to {total}")));
    }
    Ok(())
}

impl DayScenario {
    pub fn validate(&self) -> Result<()> {
        check_components(&self.components_a)?;
        check_components(&self.components_b)?;
        if self.samples_per_day < MIN_SAMPLES_PER_DAY {
            return Err(Error::InvalidScenario(format!(
                "at least {MIN_SAMPLES_PER_DAY} samples per day are required"
            )));
        }
        Ok(())
    }

    pub fn components(&self, sensor: Sensor) -> &[Component] {
        match sensor {
            Sensor::A => &self.components_a,
            Sensor::B => &self.components_b,
        }
    }

    /// Analytic mixture density at `x`.
    pub fn pdf(&self, sensor: Sensor, x: f64) -> f64 {
        self.pdf_fn(sensor)(x)
    }

    /// Analytic mixture density with the truncation constants precomputed.
    pub fn pdf_fn(&self, sensor: Sensor) -> impl Fn(f64) -> f64 {
        let n = std_normal();
        let terms: Vec<(f64, f64, f64)> = self
            .components(sensor)
            .iter()
            .map(|c| {
                let (lo, hi) = c.bounds(&n);
                let coef = c.weight / (c.scale * (hi - lo) * (2.0 * PI).sqrt());
                (c.location, c.scale.recip(), coef)
            })
            .collect();
        move |x| {
            if !(0.0..=1.0).contains(&x) {
                return 0.0;
            }
            terms
                .iter()
                .map(|&(loc, inv, coef)| {
                    let u = (x - loc) * inv;
                    coef * (-0.5 * u * u).exp()
                })
                .sum()
        }
    }

    /// Analytic density on `grid`, renormalized by the trapezoid rule.
    pub fn density(&self, sensor: Sensor, grid: Grid) -> Result<DensityGrid> {
        DensityGrid::from_fn(grid, self.pdf_fn(sensor))
    }

    /// Location of the analytic density's maximum.
    pub fn mode(&self, sensor: Sensor) -> f64 {
        let grid = Grid::new(MODE_GRID).expect("mode grid");
        let pdf = self.pdf_fn(sensor);
        let mut best = (0.0, f64::NEG_INFINITY);
        for x in grid.nodes() {
            let v = pdf(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        best.0
    }

    fn draw_samples(&self, sensor: Sensor, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = std_normal();
        let cs = self.components(sensor);
        let cum: Vec<f64> = cs
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.weight;
                Some(*acc)
            })
            .collect();
        let total = *cum.last().unwrap();
        (0..self.samples_per_day)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                let k = cum.partition_point(|&c| c <= u).min(cs.len() - 1);
                cs[k].sample(&n, rng)
            })
            .collect()
    }
}

/// One generated day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub day: usize,
    pub seed: u64,
    pub scenario: DayScenario,
    pub samples_a: Vec<f64>,
    pub samples_b: Vec<f64>,
}

impl DayRecord {
    pub fn samples(&self, sensor: Sensor) -> &[f64] {
        match sensor {
            Sensor::A => &self.samples_a,
            Sensor::B => &self.samples_b,
        }
    }
}

fn draw_day_scenario(rng: &mut ChaCha8Rng, scenario: &Scenario) -> DayScenario {
    let shared = Latent::draw(rng, &scenario.prior);
    let own = Latent::draw(rng, &scenario.prior);
    let latent_b = Latent::blend(&shared, &own, scenario.coupling);
    DayScenario {
        components_a: shared.components(&scenario.sensor_a),
        components_b: latent_b.components(&scenario.sensor_b),
        coupling: scenario.coupling,
        samples_per_day: scenario.samples_per_day,
    }
}

fn sample_day(rng: &mut ChaCha8Rng, day: DayScenario) -> Result<(DayScenario, Vec<f64>, Vec<f64>)> {
    day.validate()?;
    let a = day.draw_samples(Sensor::A, rng);
    let b = day.draw_samples(Sensor::B, rng);
    Ok((day, a, b))
}

/// Generates one day from its own seed.
pub fn generate_day(seed: u64, scenario: &Scenario) -> Result<DayRecord> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day = draw_day_scenario(&mut rng, scenario);
    let (scenario, samples_a, samples_b) = sample_day(&mut rng, day)?;
    Ok(DayRecord {
        day: 0,
        seed,
        scenario,
        samples_a,
        samples_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayRole {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayManifest {
    pub day: usize,
    pub seed: u64,
    pub mode_a: f64,
    pub mode_b: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub role: Option<DayRole>,
}

/// Everything needed to regenerate a dataset exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub master_seed: u64,
    pub n_days: usize,
    pub scenario: Scenario,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extrapolation: Option<ExtrapolationLayout>,
    pub days: Vec<DayManifest>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub days: Vec<DayRecord>,
}

fn generator_id() -> String {
    format!("{}-{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn manifest_entry(d: &DayRecord, role: Option<DayRole>) -> DayManifest {
    DayManifest {
        day: d.day,
        seed: d.seed,
        mode_a: d.scenario.mode(Sensor::A),
        mode_b: d.scenario.mode(Sensor::B),
        role,
    }
}

/// Generates `n_days` days in parallel, day `i` from `day_seed(seed, i)`.
pub fn generate_dataset(seed: u64, n_days: usize, scenario: &Scenario) -> Result<Dataset> {
    if n_days == 0 {
        return Err(Error::InvalidScenario("at least one day is required".into()));
    }
    scenario.validate()?;
    let days = (0..n_days)
        .into_par_iter()
        .map(|i| {
            let mut d = generate_day(day_seed(seed, i as u64), scenario)?;
            d.day = i;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let entries = days.par_iter().map(|d| manifest_entry(d, None)).collect();
    Ok(Dataset {
        manifest: Manifest {
            generator: generator_id(),
            master_seed: seed,
            n_days,
            scenario: *scenario,
            extrapolation: None,
            days: entries,
        },
        days,
    })
}

/// Mode windows and day counts of an extrapolation dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationLayout {
    pub n_train: usize,
    pub n_test: usize,
    pub train_modes: (f64, f64),
    pub test_modes: (f64, f64),
}

impl Default for ExtrapolationLayout {
    fn default() -> Self {
        ExtrapolationLayout {
            n_train: 50,
            n_test: 100,
            train_modes: (0.2, 0.6),
            test_modes: (0.7, 0.9),
        }
    }
}

/// Days whose sensor-B modes fall in disjoint windows: the first
/// `n_train` days in the training window, the rest in the test window.
///
/// Day `i` tries the sub-seeds `day_seed(day_seed(seed, i), j)` for
/// `j = 0, 1, ...` and keeps the first whose mode lands in its window.
pub fn extrapolation_scenario(
    seed: u64,
    scenario: &Scenario,
    layout: &ExtrapolationLayout,
) -> Result<Dataset> {
    scenario.validate()?;
    check_range("training mode", layout.train_modes)?;
    check_range("test mode", layout.test_modes)?;
    let n_days = layout.n_train + layout.n_test;
    if layout.n_train == 0 || layout.n_test == 0 {
        return Err(Error::InvalidScenario("both day sets must be nonempty".into()));
    }
    let days = (0..n_days)
        .into_par_iter()
        .map(|i| {
            let (role, (lo, hi)) = if i < layout.n_train {
                (DayRole::Train, layout.train_modes)
            } else {
                (DayRole::Test, layout.test_modes)
            };
            let base = day_seed(seed, i as u64);
            for j in 0..MAX_REJECTIONS {
                let sub = day_seed(base, j as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(sub);
                let day = draw_day_scenario(&mut rng, scenario);
                let mode = day.mode(Sensor::B);
                if (lo..=hi).contains(&mode) {
                    let (scenario, samples_a, samples_b) = sample_day(&mut rng, day)?;
                    let rec = DayRecord {
                        day: i,
                        seed: sub,
                        scenario,
                        samples_a,
                        samples_b,
                    };
                    return Ok((manifest_entry(&rec, Some(role)), rec));
                }
            }
            Err(Error::InvalidScenario(format!(
                "no day with a sensor-B mode in [{lo}, {hi}] after {MAX_REJECTIONS} draws"
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    let (entries, days): (Vec<_>, Vec<_>) = days.into_iter().unzip();
    Ok(Dataset {
        manifest: Manifest {
            generator: generator_id(),
            master_seed: seed,
            n_days,
            scenario: *scenario,
            extrapolation: Some(*layout),
            days: entries,
        },
        days,
    })
}

/// Regenerates the days listed in a manifest from their recorded seeds.
pub fn regenerate(manifest: &Manifest) -> Result<Vec<DayRecord>> {
    manifest
        .days
        .par_iter()
        .map(|m| {
            let mut d = generate_day(m.seed, &manifest.scenario)?;
            d.day = m.day;
            Ok(d)
        })
        .collect()
}
