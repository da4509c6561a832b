//! Pipeline configuration, loaded from TOML and overridable from the CLI.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmark::{BenchmarkSettings, TruthSource};
use crate::density::{check_alpha, AlphaRange};
use crate::error::{Error, Result};
use crate::fpca::DEFAULT_TRUNCATION;
use crate::grid::{Grid, DEFAULT_POINTS};
use crate::io::sha256_hex;
use crate::rkhs::{RkhsSettings, SigmaChoice, DEFAULT_LAMBDA, DEFAULT_MAX_TRAINING};
use crate::selection::{HyperGrid, DEFAULT_BANDWIDTH_GRID, DEFAULT_LAMBDA_GRID, DEFAULT_NEIGHBOUR_GRID};
use crate::synth::{Scenario, DEFAULT_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid_points: usize,
    pub kappa_lower: f64,
    pub kappa_upper: f64,
    pub alpha: f64,
    /// Accept any `alpha` in `(0, 1)`.
    pub relax_alpha: bool,
    pub truncation: usize,
    pub lambda: f64,
    pub sigma: SigmaChoice,
    pub max_training: usize,
    pub cv: CvConfig,
    pub synth: SynthConfig,
    pub benchmark: BenchmarkConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub lambdas: Vec<f64>,
    pub ddr_bandwidths: Vec<f64>,
    pub dwr_neighbours: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub days: usize,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub trials: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda_extrapolation: f64,
    pub truth: TruthSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid_points: DEFAULT_POINTS,
            kappa_lower: 1.0,
            kappa_upper: 1.0,
            alpha: 0.5,
            relax_alpha: false,
            truncation: DEFAULT_TRUNCATION,
            lambda: DEFAULT_LAMBDA,
            sigma: SigmaChoice::Heuristic,
            max_training: DEFAULT_MAX_TRAINING,
            cv: CvConfig::default(),
            synth: SynthConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            lambdas: DEFAULT_LAMBDA_GRID.to_vec(),
            ddr_bandwidths: DEFAULT_BANDWIDTH_GRID.to_vec(),
            dwr_neighbours: DEFAULT_NEIGHBOUR_GRID.to_vec(),
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            days: DEFAULT_DAYS,
            scenario: Scenario::default(),
        }
    }
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let b = BenchmarkSettings::default();
        BenchmarkConfig {
            seed: b.seed,
            trials: b.trials,
            n_train: b.n_train,
            n_test: b.n_test,
            lambda_extrapolation: b.lambda_extrapolation,
            truth: TruthSource::Kde,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
            message: e.message().to_owned(),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.grid_points)?;
        if !(self.kappa_lower >= 1.0 && self.kappa_upper >= 1.0) {
            return Err(invalid("kappa_lower and kappa_upper must be at least 1"));
        }
        check_alpha(self.alpha, self.alpha_range())?;
        if self.truncation == 0 {
            return Err(invalid("truncation must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidSmoothing(self.lambda));
        }
        if let SigmaChoice::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(format!("fixed sigma must be positive, got {s}")));
            }
        }
        if self.max_training < 2 {
            return Err(invalid("max_training must be at least 2"));
        }
        HyperGrid::new("lambda", self.cv.lambdas.clone())?;
        if self.cv.lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(invalid("lambda candidates must be positive"));
        }
        HyperGrid::new("ddr bandwidth", self.cv.ddr_bandwidths.clone())?;
        HyperGrid::new("dwr neighbours", self.cv.dwr_neighbours.clone())?;
        if self.synth.days == 0 {
            return Err(invalid("synth.days must be at least 1"));
        }
        self.synth.scenario.validate()?;
        self.benchmark_settings().validate()
    }

    pub fn alpha_range(&self) -> AlphaRange {
        if self.relax_alpha {
            AlphaRange::Relaxed
        } else {
            AlphaRange::Enforced
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_points)
    }

    pub fn kappa(&self) -> (f64, f64) {
        (self.kappa_lower, self.kappa_upper)
    }

    pub fn rkhs_settings(&self) -> RkhsSettings {
        RkhsSettings {
            alpha: self.alpha,
            alpha_range: self.alpha_range(),
            truncation: self.truncation,
            lambda: self.lambda,
            sigma: self.sigma,
            max_training: self.max_training,
        }
    }

    pub fn benchmark_settings(&self) -> BenchmarkSettings {
        BenchmarkSettings {
            trials: self.benchmark.trials,
            n_train: self.benchmark.n_train,
            n_test: self.benchmark.n_test,
            seed: self.benchmark.seed,
            alpha: self.alpha,
            truncation: self.truncation,
            lambda: self.lambda,
            lambda_extrapolation: self.benchmark.lambda_extrapolation,
            ddr_bandwidths: self.cv.ddr_bandwidths.clone(),
            dwr_neighbours: self.cv.dwr_neighbours.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let back: PipelineConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "alpha = 0.3\nsigma = { fixed = 0.2 }\n[synth]\ndays = 5\n").unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.alpha, 0.3);
        assert_eq!(c.sigma, SigmaChoice::Fixed(0.2));
        assert_eq!(c.synth.days, 5);
        assert_eq!(c.truncation, DEFAULT_TRUNCATION);
        c.validate().unwrap();

        fs::write(&p, "alpha = 0.1\n").unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert!(matches!(c.validate(), Err(Error::AlphaOutOfRange(_))));

        fs::write(&p, "bogus = 1\n").unwrap();
        assert!(matches!(PipelineConfig::load(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn digest_changes_with_settings() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            lambda: 0.15,
            ..PipelineConfig::default()
        };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), PipelineConfig::default().digest());
    }
}
