//! Function-to-vector kernel ridge regression with a Gaussian
//! operator-valued kernel, and the end-to-end density restoration built on it.
//!
//! The kernel is a scalar Gaussian kernel on `L2[0,1]` times the identity on
//! the score space, so the ridge system `(I_m ⊗ A + λ I) vec(B) = vec(Y)`
//! splits into `m` independent systems `(A + λ I) b_k = y_k` sharing one
//! Cholesky factor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::density::{
    demix_uniform, mix_with_uniform, AlphaRange, DensityGrid, DensityPair, GridFunction,
};
use crate::error::{Error, Result};
use crate::fpca::{fit_fpca, project, reconstruct, FpcaModel, ScoreVector, DEFAULT_TRUNCATION};
use crate::lqd::{inverse_lqd, lqd, LqdFunction};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_MAX_TRAINING: usize = 5000;

/// Squared `L2[0,1]` distance (trapezoid rule).
pub fn l2_distance_sq(a: &LqdFunction, b: &LqdFunction) -> Result<f64> {
    a.grid().check_same(&b.grid())?;
    Ok(l2_sq_unchecked(a, b))
}

fn l2_sq_unchecked(a: &LqdFunction, b: &LqdFunction) -> f64 {
    let d: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    a.grid().trapezoid(&d)
}

/// All pairwise squared distances.
pub fn pairwise_l2_sq(functions: &[LqdFunction]) -> Result<DMatrix<f64>> {
    let n = functions.len();
    if let Some(first) = functions.first() {
        for f in functions {
            first.grid().check_same(&f.grid())?;
        }
    }
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = l2_sq_unchecked(&functions[i], &functions[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Mean L2 distance over all ordered pairs, diagonal included.
pub fn sigma_heuristic(predictors: &[LqdFunction]) -> Result<f64> {
    if predictors.len() < 2 {
        return Err(Error::InsufficientData(
            "kernel width heuristic needs at least 2 predictors".into(),
        ));
    }
    sigma_from_distances(&pairwise_l2_sq(predictors)?)
}

fn sigma_from_distances(d_sq: &DMatrix<f64>) -> Result<f64> {
    let n = d_sq.nrows() as f64;
    let sigma = d_sq.iter().map(|d| d.sqrt()).sum::<f64>() / (n * n);
    if sigma <= 0.0 {
        return Err(Error::DegenerateKernelWidth);
    }
    Ok(sigma)
}

/// `exp(-d / (2 sigma^2))` for a squared distance `d`.
pub fn gaussian_kernel(d_sq: f64, sigma: f64) -> f64 {
    (-d_sq / (2.0 * sigma * sigma)).exp()
}

/// Kernel matrix of the training predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    sigma: f64,
}

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    fn from_distances(d_sq: &DMatrix<f64>, sigma: f64) -> Self {
        let mut matrix = d_sq.map(|d| gaussian_kernel(d, sigma));
        matrix.fill_diagonal(1.0);
        GramMatrix { matrix, sigma }
    }
}

pub fn gram_matrix(predictors: &[LqdFunction], sigma: f64) -> Result<GramMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::DegenerateKernelWidth);
    }
    Ok(GramMatrix::from_distances(&pairwise_l2_sq(predictors)?, sigma))
}

/// Ridge solution `B` (rows are the per-training-function coefficient vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coefficients: DMatrix<f64>,
    pub lambda: f64,
    /// `||(A + lambda I) B - Y||_F`.
    pub residual: f64,
}

/// Solves `(A + lambda I) B = Y` column by column with one Cholesky factor.
pub fn fit(gram: &GramMatrix, scores: &DMatrix<f64>, lambda: f64) -> Result<RidgeFit> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidSmoothing(lambda));
    }
    let n = gram.len();
    if scores.nrows() != n {
        return Err(Error::InvalidConfig(format!(
            "score matrix has {} rows for {} training predictors",
            scores.nrows(),
            n
        )));
    }
    let mut system = gram.matrix.clone();
    for i in 0..n {
        system[(i, i)] += lambda;
    }
    let chol = system
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("A + lambda I is not positive definite".into()))?;
    let coefficients = chol.solve(scores);
    let residual = (&system * &coefficients - scores).norm();
    Ok(RidgeFit {
        coefficients,
        lambda,
        residual,
    })
}

/// `xi = B^T k` for a kernel vector `k` against the training predictors.
pub fn predict_from_kernel(coefficients: &DMatrix<f64>, kernel: &[f64]) -> ScoreVector {
    let k = DVector::from_column_slice(kernel);
    ScoreVector(coefficients.tr_mul(&k).iter().copied().collect())
}

/// How the kernel width is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaChoice {
    /// Mean pairwise L2 distance of the training predictors.
    #[default]
    Heuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkhsSettings {
    pub alpha: f64,
    pub alpha_range: AlphaRange,
    pub truncation: usize,
    pub lambda: f64,
    pub sigma: SigmaChoice,
    pub max_training: usize,
}

impl Default for RkhsSettings {
    fn default() -> Self {
        RkhsSettings {
            alpha: 0.5,
            alpha_range: AlphaRange::Enforced,
            truncation: DEFAULT_TRUNCATION,
            lambda: DEFAULT_LAMBDA,
            sigma: SigmaChoice::Heuristic,
            max_training: DEFAULT_MAX_TRAINING,
        }
    }
}

/// A fitted LQD-RKHS restoration model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRkhsModel {
    /// `n x m`, row-major.
    coefficients: Vec<Vec<f64>>,
    sigma: f64,
    lambda: f64,
    alpha: f64,
    truncation: usize,
    residual: f64,
    predictors: Vec<Vec<f64>>,
    fpca: FpcaModel,
}

impl TrainedRkhsModel {
    /// Full training pipeline: mix, transform, FPCA on the targets, kernel
    /// ridge fit on the scores.
    pub fn train(pairs: &[DensityPair], settings: &RkhsSettings) -> Result<Self> {
        let mut predictors = Vec::with_capacity(pairs.len());
        let mut targets = Vec::with_capacity(pairs.len());
        for p in pairs {
            predictors.push(lqd(&mix_with_uniform(
                &p.collaborator,
                settings.alpha,
                settings.alpha_range,
            )?));
            targets.push(lqd(&mix_with_uniform(
                &p.target,
                settings.alpha,
                settings.alpha_range,
            )?));
        }
        Self::train_lqd(predictors, &targets, settings)
    }

    /// Training from already transformed predictor and target functions.
    pub fn train_lqd(
        predictors: Vec<LqdFunction>,
        targets: &[LqdFunction],
        settings: &RkhsSettings,
    ) -> Result<Self> {
        let n = predictors.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "LQD-RKHS training needs at least 2 pairs, got {n}"
            )));
        }
        if n != targets.len() {
            return Err(Error::InvalidConfig(format!(
                "{n} predictors but {} targets",
                targets.len()
            )));
        }
        if n > settings.max_training {
            return Err(Error::TooManyTrainingPairs {
                n,
                limit: settings.max_training,
            });
        }
        let fpca = fit_fpca(targets)?;
        let m = settings.truncation;
        fpca.check_truncation(m)?;
        let mut y = DMatrix::zeros(n, m);
        for (i, t) in targets.iter().enumerate() {
            let xi = project(t, &fpca, m)?;
            for (k, v) in xi.0.iter().enumerate() {
                y[(i, k)] = *v;
            }
        }
        let d_sq = pairwise_l2_sq(&predictors)?;
        let sigma = match settings.sigma {
            SigmaChoice::Heuristic => sigma_from_distances(&d_sq)?,
            SigmaChoice::Fixed(s) if s > 0.0 => s,
            SigmaChoice::Fixed(_) => return Err(Error::DegenerateKernelWidth),
        };
        let gram = GramMatrix::from_distances(&d_sq, sigma);
        let ridge = fit(&gram, &y, settings.lambda)?;
        log::debug!(
            "LQD-RKHS fit: n = {n}, m = {m}, sigma = {sigma:.6}, residual = {:.3e}",
            ridge.residual
        );
        Ok(TrainedRkhsModel {
            coefficients: ridge
                .coefficients
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            sigma,
            lambda: settings.lambda,
            alpha: settings.alpha,
            truncation: m,
            residual: ridge.residual,
            predictors: predictors.into_iter().map(LqdFunction::into_values).collect(),
            fpca,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn fpca(&self) -> &FpcaModel {
        &self.fpca
    }

    pub fn training_len(&self) -> usize {
        self.predictors.len()
    }

    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let n = self.coefficients.len();
        DMatrix::from_fn(n, self.truncation, |i, k| self.coefficients[i][k])
    }

    /// Kernel vector of `psi` against the training predictors.
    pub fn kernel_vector(&self, psi: &LqdFunction) -> Result<Vec<f64>> {
        let grid = self.fpca.grid();
        grid.check_same(&psi.grid())?;
        Ok(self
            .predictors
            .iter()
            .map(|p| {
                let d: Vec<f64> = p
                    .iter()
                    .zip(psi.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .collect();
                gaussian_kernel(grid.trapezoid(&d), self.sigma)
            })
            .collect())
    }

    pub fn predict_scores(&self, psi: &LqdFunction) -> Result<ScoreVector> {
        let k = self.kernel_vector(psi)?;
        Ok(predict_from_kernel(&self.coefficient_matrix(), &k))
    }

    /// Mix, transform, predict scores, reconstruct, invert, demix.
    pub fn restore_distribution(&self, g0: &DensityGrid) -> Result<DensityGrid> {
        self.fpca.grid().check_same(&g0.grid())?;
        let mixed = mix_with_uniform(g0, self.alpha, AlphaRange::Relaxed)?;
        let xi = self.predict_scores(&lqd(&mixed))?;
        let psi = reconstruct(&xi, &self.fpca)?;
        demix_uniform(&inverse_lqd(&psi)?, self.alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn lqd_from(grid: Grid, f: impl Fn(f64) -> f64) -> LqdFunction {
        LqdFunction::new(grid, grid.nodes().into_iter().map(f).collect()).unwrap()
    }

    #[test]
    fn l2_examples() {
        let g = Grid::new(1001).unwrap();
        let zero = LqdFunction::zero(g);
        let c = lqd_from(g, |_| 1.7);
        let t = lqd_from(g, |t| t);
        assert_eq!(l2_distance_sq(&zero, &zero).unwrap(), 0.0);
        assert!((l2_distance_sq(&zero, &c).unwrap() - 1.7 * 1.7).abs() < 1e-12);
        assert!((l2_distance_sq(&t, &zero).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        let other = LqdFunction::zero(Grid::new(11).unwrap());
        assert!(matches!(
            l2_distance_sq(&zero, &other),
            Err(Error::GridMismatch(..))
        ));
    }

    #[test]
    fn sigma_examples() {
        let g = Grid::new(101).unwrap();
        let zero = LqdFunction::zero(g);
        let one = lqd_from(g, |_| 1.0);
        assert!((sigma_heuristic(&[zero.clone(), one.clone()]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            sigma_heuristic(&[one.clone(), one.clone()]),
            Err(Error::DegenerateKernelWidth)
        ));
        let a = lqd_from(g, |t| t.sin());
        let b = lqd_from(g, |t| t * t);
        let s = sigma_heuristic(&[a.clone(), b.clone(), zero.clone()]).unwrap();
        let scale = |f: &LqdFunction| lqd_from(g, |t| 3.0 * g.interpolate(f.values(), t));
        let s3 = sigma_heuristic(&[scale(&a), scale(&b), zero]).unwrap();
        assert!((s3 - 3.0 * s).abs() < 1e-12);
    }

    #[test]
    fn gram_examples() {
        let g = Grid::new(101).unwrap();
        let zero = LqdFunction::zero(g);
        let one = lqd_from(g, |_| 1.0);
        let a = gram_matrix(&[zero, one], 0.5).unwrap();
        assert_eq!(a.matrix()[(0, 0)], 1.0);
        assert!((a.matrix()[(0, 1)] - (-2.0f64).exp()).abs() < 1e-12);
        assert!((a.matrix()[(0, 1)] - 0.13534).abs() < 1e-5);
        assert!((gaussian_kernel(2.0 * 0.3 * 0.3, 0.3) - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn scalar_fit() {
        let g = Grid::new(11).unwrap();
        let a = gram_matrix(&[LqdFunction::zero(g)], 1.0).unwrap();
        let y = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let r = fit(&a, &y, 0.25).unwrap();
        for k in 0..3 {
            assert!((r.coefficients[(0, k)] - y[(0, k)] / 1.25).abs() < 1e-15);
        }
        assert!(matches!(fit(&a, &y, 0.0), Err(Error::InvalidSmoothing(_))));
        assert!(matches!(fit(&a, &y, -1.0), Err(Error::InvalidSmoothing(_))));
    }

    #[test]
    fn single_pair_prediction() {
        let g = Grid::new(101).unwrap();
        let p1 = lqd_from(g, |t| t);
        let a = gram_matrix(std::slice::from_ref(&p1), 0.7).unwrap();
        let y = DMatrix::from_row_slice(1, 2, &[0.4, -1.0]);
        let r = fit(&a, &y, 1.0).unwrap();
        let p0 = lqd_from(g, |t| 0.3 - t);
        let k = gaussian_kernel(l2_distance_sq(&p0, &p1).unwrap(), 0.7);
        let xi = predict_from_kernel(&r.coefficients, &[k]);
        assert!((xi.0[0] - k * 0.4 / 2.0).abs() < 1e-15);
        assert!((xi.0[1] + k / 2.0).abs() < 1e-15);
        let far = predict_from_kernel(&r.coefficients, &[0.0]);
        assert_eq!(far.0, vec![0.0, 0.0]);
    }

    #[test]
    fn heavy_ridge_shrinks_coefficients() {
        let g = Grid::new(101).unwrap();
        let preds: Vec<_> = (0..5).map(|i| lqd_from(g, move |t| (i as f64) * t)).collect();
        let a = gram_matrix(&preds, 1.0).unwrap();
        let y = DMatrix::from_fn(5, 3, |i, k| (i as f64 - 2.0) * (k as f64 + 1.0));
        let r = fit(&a, &y, 1e6).unwrap();
        assert!(r.coefficients.norm() < 1e-4 * y.norm());
    }
}
