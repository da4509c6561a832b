//! Repeated random-split comparison of LQD-RKHS against the baselines.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{ddr_predict, dwr_predict, KernelKind, KernelSpec};
use crate::density::{
    estimate_density, estimate_support, rescale_to_unit, AlphaRange, DensityGrid, DensityPair,
    SupportInterval,
};
use crate::error::{Error, Result};
use crate::evaluation::{iae, Method, TrialReport};
use crate::fpca::DEFAULT_TRUNCATION;
use crate::grid::Grid;
use crate::rkhs::{RkhsSettings, SigmaChoice, TrainedRkhsModel, DEFAULT_LAMBDA};
use crate::selection::{
    select_hyperparameter, HyperGrid, DEFAULT_BANDWIDTH_GRID, DEFAULT_NEIGHBOUR_GRID,
};
use crate::synth::{day_seed, DayRecord, Sensor};

/// Where benchmark truth densities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSource {
    /// KDE of the held-out sensor-B samples.
    #[default]
    Kde,
    /// Analytic generator density (diagnostic).
    Analytic,
}

/// Paired densities of a dataset on the unit interval.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub grid: Grid,
    pub support_a: SupportInterval,
    pub support_b: SupportInterval,
    pub days: Vec<usize>,
    pub pairs: Vec<DensityPair>,
}

/// Raw samples of one day.
#[derive(Debug, Clone, Copy)]
pub struct DaySamples<'a> {
    pub day: usize,
    pub a: &'a [f64],
    pub b: &'a [f64],
}

fn pooled_support<'a>(
    samples: impl Iterator<Item = &'a [f64]>,
    kappa: (f64, f64),
) -> Result<SupportInterval> {
    let pooled: Vec<f64> = samples.flat_map(|s| s.iter().copied()).collect();
    estimate_support(&pooled, kappa.0, kappa.1)
}

fn unit_density(samples: &[f64], support: &SupportInterval, grid: Grid) -> Result<DensityGrid> {
    estimate_density(&rescale_to_unit(samples, support)?, grid)
}

/// Pools each sensor's samples over all days for the support, then
/// estimates every day's density on the unit interval.
pub fn prepare_samples(days: &[DaySamples], grid: Grid, kappa: (f64, f64)) -> Result<PreparedData> {
    if days.is_empty() {
        return Err(Error::EmptySet);
    }
    let support_a = pooled_support(days.iter().map(|d| d.a), kappa)?;
    let support_b = pooled_support(days.iter().map(|d| d.b), kappa)?;
    let pairs = days
        .par_iter()
        .map(|d| {
            Ok(DensityPair {
                collaborator: unit_density(d.a, &support_a, grid)?,
                target: unit_density(d.b, &support_b, grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData {
        grid,
        support_a,
        support_b,
        days: days.iter().map(|d| d.day).collect(),
        pairs,
    })
}

/// [`prepare_samples`] on generated days, optionally replacing the
/// sensor-B estimates by the generator's densities.
pub fn prepare(
    days: &[DayRecord],
    grid: Grid,
    kappa: (f64, f64),
    truth: TruthSource,
) -> Result<PreparedData> {
    let samples: Vec<DaySamples> = days
        .iter()
        .map(|d| DaySamples {
            day: d.day,
            a: d.samples(Sensor::A),
            b: d.samples(Sensor::B),
        })
        .collect();
    let mut data = prepare_samples(&samples, grid, kappa)?;
    if truth == TruthSource::Analytic {
        for (p, d) in data.pairs.iter_mut().zip(days) {
            p.target = data
                .support_b
                .density_to_unit(grid, d.scenario.pdf_fn(Sensor::B))?;
        }
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub trials: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub alpha: f64,
    pub truncation: usize,
    pub lambda: f64,
    /// Ridge parameter for the extrapolation layout.
    pub lambda_extrapolation: f64,
    pub ddr_bandwidths: Vec<f64>,
    pub dwr_neighbours: Vec<f64>,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings {
            trials: 10,
            n_train: 50,
            n_test: 100,
            seed: 0,
            alpha: 0.5,
            truncation: DEFAULT_TRUNCATION,
            lambda: DEFAULT_LAMBDA,
            lambda_extrapolation: 0.15,
            ddr_bandwidths: DEFAULT_BANDWIDTH_GRID.to_vec(),
            dwr_neighbours: DEFAULT_NEIGHBOUR_GRID.to_vec(),
        }
    }
}

impl BenchmarkSettings {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        if self.n_train < 2 || self.n_test == 0 {
            return Err(Error::InvalidConfig(
                "need at least 2 training and 1 test day".into(),
            ));
        }
        for l in [self.lambda, self.lambda_extrapolation] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidSmoothing(l));
            }
        }
        HyperGrid::new("ddr bandwidth", self.ddr_bandwidths.clone())?;
        HyperGrid::new("dwr neighbours", self.dwr_neighbours.clone())?;
        Ok(())
    }

    fn rkhs(&self, lambda: f64) -> RkhsSettings {
        RkhsSettings {
            alpha: self.alpha,
            alpha_range: AlphaRange::Enforced,
            truncation: self.truncation,
            lambda,
            sigma: SigmaChoice::Heuristic,
            ..RkhsSettings::default()
        }
    }
}

fn ddr_method(train: &[DensityPair], g0: &DensityGrid, h: &f64) -> Result<DensityGrid> {
    ddr_predict(train, g0, &KernelSpec::fixed(KernelKind::Gaussian, *h))
}

fn score(
    predict: impl Fn(&DensityGrid) -> Result<DensityGrid> + Sync,
    test: &[DensityPair],
) -> Result<Vec<f64>> {
    test.par_iter()
        .map(|p| iae(&predict(&p.collaborator)?, &p.target))
        .collect()
}

/// Runs the requested methods on one split. DDR and DWR hyperparameters are
/// chosen by leave-one-out on the training pairs.
pub fn compare(
    train: &[DensityPair],
    test: &[DensityPair],
    settings: &BenchmarkSettings,
    methods: &[Method],
    lambda: f64,
) -> Result<Vec<(Method, String, Vec<f64>)>> {
    let mut out = Vec::new();
    for &m in methods {
        let (setting, errors) = match m {
            Method::Ddr => {
                let grid = HyperGrid::new("ddr bandwidth", settings.ddr_bandwidths.clone())?;
                let h = select_hyperparameter(&ddr_method, train, &grid)?.best;
                let kernel = KernelSpec::fixed(KernelKind::Gaussian, h);
                (kernel.to_string(), score(|g0| ddr_predict(train, g0, &kernel), test)?)
            }
            Method::Dwr => {
                let alpha = settings.alpha;
                let dwr = |tr: &[DensityPair], g0: &DensityGrid, z: &f64| {
                    dwr_predict(tr, g0, &KernelSpec::neighbours(KernelKind::Triangular, *z), alpha)
                };
                let grid = HyperGrid::new("dwr neighbours", settings.dwr_neighbours.clone())?;
                let z = select_hyperparameter(&dwr, train, &grid)?.best;
                let kernel = KernelSpec::neighbours(KernelKind::Triangular, z);
                (
                    kernel.to_string(),
                    score(|g0| dwr_predict(train, g0, &kernel, alpha), test)?,
                )
            }
            Method::LqdRkhs => {
                let model = TrainedRkhsModel::train(train, &settings.rkhs(lambda))?;
                (
                    format!("lambda={lambda}"),
                    score(|g0| model.restore_distribution(g0), test)?,
                )
            }
        };
        out.push((m, setting, errors));
    }
    Ok(out)
}

/// Random-split trials over one prepared dataset.
pub fn run_trials(data: &PreparedData, settings: &BenchmarkSettings) -> Result<Vec<TrialReport>> {
    settings.validate()?;
    let n = data.pairs.len();
    if n < settings.n_train + settings.n_test {
        return Err(Error::InsufficientData(format!(
            "{} train + {} test days requested but the dataset has {n}",
            settings.n_train, settings.n_test
        )));
    }
    let methods = [Method::Ddr, Method::Dwr, Method::LqdRkhs];
    (0..settings.trials)
        .into_par_iter()
        .map(|t| {
            let seed = day_seed(settings.seed, t as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let train_idx = &order[..settings.n_train];
            let test_idx = &order[settings.n_train..settings.n_train + settings.n_test];
            let pick = |idx: &[usize]| -> Vec<DensityPair> {
                idx.iter().map(|&i| data.pairs[i].clone()).collect()
            };
            let results = compare(
                &pick(train_idx),
                &pick(test_idx),
                settings,
                &methods,
                settings.lambda,
            )?;
            log::info!("trial {t} done");
            TrialReport::new(
                t,
                seed,
                train_idx.iter().map(|&i| data.days[i]).collect(),
                test_idx.iter().map(|&i| data.days[i]).collect(),
                results,
            )
        })
        .collect()
}

/// DWR against LQD-RKHS on a dataset whose first `n_train` days are the
/// training set and the rest the test set.
pub fn run_extrapolation(
    trial: usize,
    seed: u64,
    data: &PreparedData,
    n_train: usize,
    settings: &BenchmarkSettings,
) -> Result<TrialReport> {
    settings.validate()?;
    if n_train < 2 || n_train >= data.pairs.len() {
        return Err(Error::InsufficientData(format!(
            "cannot split {} days with {n_train} for training",
            data.pairs.len()
        )));
    }
    let (train, test) = data.pairs.split_at(n_train);
    let results = compare(
        train,
        test,
        settings,
        &[Method::Dwr, Method::LqdRkhs],
        settings.lambda_extrapolation,
    )?;
    TrialReport::new(
        trial,
        seed,
        data.days[..n_train].to_vec(),
        data.days[n_train..].to_vec(),
        results,
    )
}

/// `trial,method,miae,relative_miae` rows.
pub fn summary_csv(reports: &[TrialReport]) -> String {
    let mut s = String::from("trial,method,miae,relative_miae\n");
    for r in reports {
        for m in &r.methods {
            let rel = m.relative_miae.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", r.trial, m.method, m.miae, rel));
        }
    }
    s
}

/// `trial,method,test_day,iae` rows.
pub fn iae_csv(reports: &[TrialReport]) -> String {
    let mut s = String::from("trial,method,test_day,iae\n");
    for r in reports {
        for m in &r.methods {
            for (day, v) in r.test_days.iter().zip(&m.iae) {
                s.push_str(&format!("{},{},{},{}\n", r.trial, m.method, day, v));
            }
        }
    }
    s
}

/// Per-method MIAE statistics over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub median_miae: f64,
    pub mean_miae: f64,
    pub median_relative_miae: Option<f64>,
    /// Trials in which the method's MIAE beat every other method run.
    pub wins: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(reports: &[TrialReport]) -> Vec<MethodSummary> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .methods
        .iter()
        .map(|mr| {
            let m = mr.method;
            let miae: Vec<f64> = reports.iter().filter_map(|r| r.get(m)).map(|x| x.miae).collect();
            let rel: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.get(m).and_then(|x| x.relative_miae))
                .collect();
            let wins = reports
                .iter()
                .filter(|r| {
                    r.get(m).is_some_and(|x| {
                        r.methods.iter().all(|o| o.method == m || x.miae < o.miae)
                    })
                })
                .count();
            MethodSummary {
                method: m,
                median_miae: median(miae.clone()),
                mean_miae: miae.iter().sum::<f64>() / miae.len() as f64,
                median_relative_miae: (!rel.is_empty()).then(|| median(rel)),
                wins,
            }
        })
        .collect()
}
