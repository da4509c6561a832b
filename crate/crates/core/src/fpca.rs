//! Functional principal component analysis by discretization.
//!
//! The centred functions are stacked into an `n x T` matrix `X`. The
//! eigenpairs `(lambda, u)` of `V = X^T X / n` become the functional
//! eigenpairs through `rho = w * lambda` and `phi = u / sqrt(w)`, so that
//! `w * sum_l phi_j(t_l) phi_k(t_l) = delta_jk`. Scores use the same
//! discrete inner product, which keeps projection and reconstruction exact
//! inverses on the retained span.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::GridFunction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lqd::LqdFunction;

/// Default Karhunen–Loève truncation order.
pub const DEFAULT_TRUNCATION: usize = 10;

/// Eigenpairs with `rho_k < RANK_CUTOFF * rho_1` are dropped.
pub const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    grid: Grid,
    mean: Vec<f64>,
    eigenfunctions: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

/// Truncated Karhunen–Loève coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl FpcaModel {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn eigenfunction(&self, k: usize) -> &[f64] {
        &self.eigenfunctions[k]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of retained eigenpairs.
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Mean function as an [`LqdFunction`].
    pub fn mean_function(&self) -> LqdFunction {
        LqdFunction::from_parts(self.grid, self.mean.clone())
    }

    /// Eigenfunction `k` evaluated anywhere in `[0, 1]` by linear interpolation.
    pub fn eval_eigenfunction(&self, k: usize, t: f64) -> f64 {
        self.grid.interpolate(&self.eigenfunctions[k], t)
    }

    /// Discrete inner product `w * sum_l a_l b_l`.
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.grid.spacing() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub(crate) fn check_truncation(&self, m: usize) -> Result<()> {
        if m > self.rank() {
            return Err(Error::TruncationExceedsRank {
                requested: m,
                available: self.rank(),
            });
        }
        Ok(())
    }
}

/// Fits the mean function and eigenbasis of a set of LQD functions.
pub fn fit_fpca(dataset: &[LqdFunction]) -> Result<FpcaModel> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "FPCA needs at least 2 functions, got {n}"
        )));
    }
    let grid = dataset[0].grid();
    for f in dataset {
        grid.check_same(&f.grid())?;
    }
    let t = grid.len();
    let w = grid.spacing();

    let mut mean = vec![0.0; t];
    for f in dataset {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let x = DMatrix::from_fn(n, t, |i, l| dataset[i].values()[l] - mean[l]);
    // Right singular vectors of X are the eigenvectors of X^T X / n,
    // with lambda = s^2 / n.
    let svd = x.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let lambdas: Vec<f64> = order
        .iter()
        .map(|&k| svd.singular_values[k].powi(2) / n as f64)
        .collect();
    let top = lambdas.first().copied().unwrap_or(0.0);

    let mut eigenvalues = Vec::new();
    let mut eigenfunctions = Vec::new();
    if top > 0.0 {
        let scale = w.sqrt().recip();
        for (&k, &lambda) in order.iter().zip(&lambdas) {
            if lambda < RANK_CUTOFF * top {
                break;
            }
            let mut phi: Vec<f64> = v_t.row(k).iter().map(|u| u * scale).collect();
            // sign: largest-magnitude value positive
            let peak = phi
                .iter()
                .copied()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            if peak < 0.0 {
                for v in phi.iter_mut() {
                    *v = -*v;
                }
            }
            eigenvalues.push(w * lambda);
            eigenfunctions.push(phi);
        }
    }

    Ok(FpcaModel {
        grid,
        mean,
        eigenfunctions,
        eigenvalues,
    })
}

/// First `m` scores `xi_k = <psi - mu, phi_k>`.
pub fn project(psi: &LqdFunction, model: &FpcaModel, m: usize) -> Result<ScoreVector> {
    model.grid.check_same(&psi.grid())?;
    model.check_truncation(m)?;
    let centred: Vec<f64> = psi
        .values()
        .iter()
        .zip(&model.mean)
        .map(|(v, mu)| v - mu)
        .collect();
    Ok(ScoreVector(
        model.eigenfunctions[..m]
            .iter()
            .map(|phi| model.inner(&centred, phi))
            .collect(),
    ))
}

/// `mu + sum_k xi_k phi_k`.
pub fn reconstruct(xi: &ScoreVector, model: &FpcaModel) -> Result<LqdFunction> {
    model.check_truncation(xi.len())?;
    let mut values = model.mean.clone();
    for (score, phi) in xi.0.iter().zip(&model.eigenfunctions) {
        for (v, p) in values.iter_mut().zip(phi) {
            *v += score * p;
        }
    }
    Ok(LqdFunction::from_parts(model.grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lqd_from(grid: Grid, f: impl Fn(f64) -> f64) -> LqdFunction {
        LqdFunction::new(grid, grid.nodes().into_iter().map(f).collect()).unwrap()
    }

    fn disc_norm_sq(grid: Grid, v: &[f64]) -> f64 {
        grid.spacing() * v.iter().map(|x| x * x).sum::<f64>()
    }

    #[test]
    fn rank_one_symmetric_pair() {
        let g = Grid::new(201).unwrap();
        let raw: Vec<f64> = g.nodes().iter().map(|t| (2.0 * PI * t).sin()).collect();
        let nrm = disc_norm_sq(g, &raw).sqrt();
        let phi: Vec<f64> = raw.iter().map(|v| v / nrm).collect();
        let plus = LqdFunction::new(g, phi.clone()).unwrap();
        let minus = LqdFunction::new(g, phi.iter().map(|v| -v).collect()).unwrap();
        let model = fit_fpca(&[plus, minus]).unwrap();
        assert!(model.mean().iter().all(|v| v.abs() < 1e-15));
        assert_eq!(model.rank(), 1);
        // each member has unit norm, so the covariance eigenvalue is 1
        assert!((model.eigenvalues()[0] - 1.0).abs() < 1e-12);
        let dot: f64 = g.spacing()
            * model
                .eigenfunction(0)
                .iter()
                .zip(&phi)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sin_cos_span() {
        let g = Grid::new(501).unwrap();
        let coeffs = [(1.0, 0.5), (-0.3, 2.0), (0.7, -1.1)];
        let data: Vec<_> = coeffs
            .iter()
            .map(|&(a, b)| lqd_from(g, |t| a * (2.0 * PI * t).sin() + b * (2.0 * PI * t).cos()))
            .collect();
        let model = fit_fpca(&data).unwrap();
        assert_eq!(model.rank(), 2);
        // every centred member is reproduced exactly by two components
        for f in &data {
            let xi = project(f, &model, 2).unwrap();
            let back = reconstruct(&xi, &model).unwrap();
            let err: f64 = f
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn projection_examples() {
        let g = Grid::new(301).unwrap();
        let data: Vec<_> = (0..6)
            .map(|i| {
                let a = i as f64;
                lqd_from(g, move |t| (a * t).sin() + 0.1 * a * t * t)
            })
            .collect();
        let model = fit_fpca(&data).unwrap();
        let xi = project(&model.mean_function(), &model, 3).unwrap();
        assert!(xi.0.iter().all(|v| v.abs() < 1e-12));

        let shifted: Vec<f64> = model
            .mean()
            .iter()
            .zip(model.eigenfunction(0))
            .map(|(m, p)| m + 2.0 * p)
            .collect();
        let xi = project(&LqdFunction::new(g, shifted).unwrap(), &model, 3).unwrap();
        assert!((xi.0[0] - 2.0).abs() < 1e-8);
        assert!(xi.0[1..].iter().all(|v| v.abs() < 1e-8));

        let zero = reconstruct(&ScoreVector(vec![0.0; 3]), &model).unwrap();
        assert_eq!(zero.values(), model.mean());
    }

    #[test]
    fn truncation_checks() {
        let g = Grid::new(51).unwrap();
        let data = vec![lqd_from(g, |t| t), lqd_from(g, |t| -t)];
        let model = fit_fpca(&data).unwrap();
        assert!(matches!(
            project(&data[0], &model, 2),
            Err(Error::TruncationExceedsRank { .. })
        ));
        assert!(matches!(
            fit_fpca(&data[..1]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn signs_are_deterministic() {
        let g = Grid::new(101).unwrap();
        let data: Vec<_> = (0..5)
            .map(|i| lqd_from(g, move |t| ((i + 1) as f64 * t).cos()))
            .collect();
        let a = fit_fpca(&data).unwrap();
        let b = fit_fpca(&data).unwrap();
        assert_eq!(a, b);
        for k in 0..a.rank() {
            let phi = a.eigenfunction(k);
            let peak = phi.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            assert!(peak > 0.0);
        }
    }
}
