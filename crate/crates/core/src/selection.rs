//! Leave-one-out cross-validation over hyperparameter grids.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{BandwidthStrategy, KernelSpec};
use crate::density::{DensityGrid, DensityPair, GridFunction};
use crate::error::{Error, Result};

/// Default grid for the ridge parameter of the LQD-RKHS model.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.15, 0.2, 0.5];

/// Default DDR bandwidth grid.
pub const DEFAULT_BANDWIDTH_GRID: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];

/// Default DWR neighbour percentages.
pub const DEFAULT_NEIGHBOUR_GRID: [f64; 5] = [5.0, 10.0, 20.0, 30.0, 50.0];

/// A value that can be swept by [`select_hyperparameter`].
pub trait Candidate: Clone + PartialEq + fmt::Display + Send + Sync {
    /// Larger means smoother; ties in risk go to the larger value.
    fn smoothness(&self) -> f64;
}

impl Candidate for f64 {
    fn smoothness(&self) -> f64 {
        *self
    }
}

impl Candidate for KernelSpec {
    fn smoothness(&self) -> f64 {
        match self.bandwidth {
            BandwidthStrategy::Fixed(h) => h,
            BandwidthStrategy::NeighbourCount(z) => z,
        }
    }
}

/// Named, nonempty list of distinct candidates.
#[derive(Debug, Clone)]
pub struct HyperGrid<C> {
    name: String,
    candidates: Vec<C>,
}

impl<C: Candidate> HyperGrid<C> {
    pub fn new(name: impl Into<String>, candidates: Vec<C>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptySet);
        }
        for (i, c) in candidates.iter().enumerate() {
            if !c.smoothness().is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite candidate {c}")));
            }
            if candidates[..i].contains(c) {
                return Err(Error::InvalidConfig(format!("duplicate candidate {c}")));
            }
        }
        Ok(HyperGrid {
            name: name.into(),
            candidates,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn candidates(&self) -> &[C] {
        &self.candidates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskEntry {
    pub candidate: String,
    pub risk: f64,
}

#[derive(Debug, Clone)]
pub struct Selection<C> {
    pub best: C,
    pub risk: f64,
    /// One entry per candidate, in grid order.
    pub table: Vec<RiskEntry>,
}

fn l2_sq(a: &DensityGrid, b: &DensityGrid) -> Result<f64> {
    a.grid().check_same(&b.grid())?;
    let d: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    Ok(a.grid().trapezoid(&d))
}

/// Sum over folds of the squared L2 error of predicting each held-out target
/// from its collaborator with the remaining pairs.
///
/// A fold whose prediction fails numerically contributes `+inf`; other
/// errors are returned.
pub fn loocv_risk<C, M>(method: &M, training: &[DensityPair], theta: &C) -> Result<f64>
where
    C: Sync,
    M: Fn(&[DensityPair], &DensityGrid, &C) -> Result<DensityGrid> + Sync,
{
    let n = training.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "leave-one-out needs at least 2 pairs, got {n}"
        )));
    }
    let folds: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let rest: Vec<DensityPair> = training
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, p)| p.clone())
                .collect();
            let held = &training[k];
            match method(&rest, &held.collaborator, theta) {
                Ok(pred) => l2_sq(&pred, &held.target),
                Err(e) if e.exit_code() == 3 => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut total = 0.0;
    for f in folds {
        total += f?;
    }
    Ok(total)
}

/// Leave-one-out risk for every candidate and the argmin, ties going to
/// the smoother candidate.
pub fn select_hyperparameter<C, M>(
    method: &M,
    training: &[DensityPair],
    grid: &HyperGrid<C>,
) -> Result<Selection<C>>
where
    C: Candidate,
    M: Fn(&[DensityPair], &DensityGrid, &C) -> Result<DensityGrid> + Sync,
{
    let risks = grid
        .candidates
        .iter()
        .map(|c| loocv_risk(method, training, c))
        .collect::<Result<Vec<f64>>>()?;
    let mut best: Option<usize> = None;
    for (i, &r) in risks.iter().enumerate() {
        if !r.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if r < risks[b] => Some(i),
            Some(b)
                if r == risks[b]
                    && grid.candidates[i].smoothness() > grid.candidates[b].smoothness() =>
            {
                Some(i)
            }
            keep => keep,
        };
    }
    let b = best.ok_or(Error::NoViableCandidate)?;
    log::info!(
        "{}: selected {} (risk {:.6e})",
        grid.name,
        grid.candidates[b],
        risks[b]
    );
    Ok(Selection {
        best: grid.candidates[b].clone(),
        risk: risks[b],
        table: grid
            .candidates
            .iter()
            .zip(&risks)
            .map(|(c, &risk)| RiskEntry {
                candidate: c.to_string(),
                risk,
            })
            .collect(),
    })
}
