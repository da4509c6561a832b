//! Restoration error metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::l1_distance;
use crate::density::DensityGrid;
use crate::error::{Error, Result};

/// Integrated absolute error between a restored density and the truth.
pub fn iae(restored: &DensityGrid, truth: &DensityGrid) -> Result<f64> {
    l1_distance(restored, truth)
}

/// Mean of the pairwise IAEs.
pub fn miae(restored: &[DensityGrid], truth: &[DensityGrid]) -> Result<f64> {
    if restored.is_empty() || truth.is_empty() {
        return Err(Error::EmptySet);
    }
    if restored.len() != truth.len() {
        return Err(Error::InvalidConfig(format!(
            "{} restored densities but {} truths",
            restored.len(),
            truth.len()
        )));
    }
    let values = restored
        .iter()
        .zip(truth)
        .map(|(r, t)| iae(r, t))
        .collect::<Result<Vec<f64>>>()?;
    mean(&values)
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `method / ddr`; below one means the method beats DDR.
pub fn relative_miae(method_miae: f64, ddr_miae: f64) -> Result<f64> {
    if ddr_miae == 0.0 {
        return Err(Error::DivisionByZeroBaseline);
    }
    Ok(method_miae / ddr_miae)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DDR")]
    Ddr,
    #[serde(rename = "DWR")]
    Dwr,
    #[serde(rename = "LQD-RKHS")]
    LqdRkhs,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ddr => "DDR",
            Method::Dwr => "DWR",
            Method::LqdRkhs => "LQD-RKHS",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddr" => Ok(Method::Ddr),
            "dwr" => Ok(Method::Dwr),
            "lqd-rkhs" | "lqd_rkhs" | "rkhs" => Ok(Method::LqdRkhs),
            _ => Err(Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// Hyperparameter used, as text.
    pub setting: String,
    pub iae: Vec<f64>,
    pub miae: f64,
    /// Relative to DDR; absent when DDR was not run.
    pub relative_miae: Option<f64>,
}

/// Outcome of one randomized train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub train_days: Vec<usize>,
    pub test_days: Vec<usize>,
    pub methods: Vec<MethodResult>,
}

impl TrialReport {
    /// Builds the report from per-method IAEs, filling in MIAEs and the
    /// ratios against DDR when present.
    pub fn new(
        trial: usize,
        seed: u64,
        train_days: Vec<usize>,
        test_days: Vec<usize>,
        results: Vec<(Method, String, Vec<f64>)>,
    ) -> Result<Self> {
        let mut methods = results
            .into_iter()
            .map(|(method, setting, iae)| {
                Ok(MethodResult {
                    method,
                    setting,
                    miae: mean(&iae)?,
                    iae,
                    relative_miae: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(ddr) = methods.iter().find(|m| m.method == Method::Ddr).map(|m| m.miae) {
            for m in methods.iter_mut() {
                m.relative_miae = Some(relative_miae(m.miae, ddr)?);
            }
        }
        Ok(TrialReport {
            trial,
            seed,
            train_days,
            test_days,
            methods,
        })
    }

    pub fn get(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn g() -> Grid {
        Grid::new(1001).unwrap()
    }

    #[test]
    fn iae_examples() {
        let u = DensityGrid::uniform(g());
        let lin = DensityGrid::from_fn(g(), |x| 2.0 * x).unwrap();
        assert_eq!(iae(&u, &u).unwrap(), 0.0);
        assert!((iae(&u, &lin).unwrap() - 0.5).abs() < 1e-6);
        assert_eq!(iae(&u, &lin).unwrap(), iae(&lin, &u).unwrap());
        let other = DensityGrid::uniform(Grid::new(11).unwrap());
        assert!(matches!(iae(&u, &other), Err(Error::GridMismatch(..))));
    }

    #[test]
    fn miae_examples() {
        assert!((mean(&[0.1, 0.3]).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(miae(&[], &[]), Err(Error::EmptySet)));
        let u = DensityGrid::uniform(g());
        let lin = DensityGrid::from_fn(g(), |x| 2.0 * x).unwrap();
        assert_eq!(
            miae(std::slice::from_ref(&u), std::slice::from_ref(&lin)).unwrap(),
            iae(&u, &lin).unwrap()
        );
        assert_eq!(miae(&[u.clone(), lin.clone()], &[u, lin]).unwrap(), 0.0);
    }

    #[test]
    fn relative_examples() {
        assert_eq!(relative_miae(0.2, 0.2).unwrap(), 1.0);
        assert!((relative_miae(0.05, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            relative_miae(0.1, 0.0),
            Err(Error::DivisionByZeroBaseline)
        ));
    }

    #[test]
    fn report_ratios() {
        let r = TrialReport::new(
            0,
            1,
            vec![],
            vec![],
            vec![
                (Method::Ddr, "h=0.1".into(), vec![0.2, 0.4]),
                (Method::LqdRkhs, "lambda=0.1".into(), vec![0.1, 0.2]),
            ],
        )
        .unwrap();
        let l = r.get(Method::LqdRkhs).unwrap();
        assert!((l.miae - 0.15).abs() < 1e-12);
        assert!((l.relative_miae.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.get(Method::Ddr).unwrap().relative_miae, Some(1.0));
    }
}
