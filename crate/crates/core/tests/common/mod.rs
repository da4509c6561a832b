#![allow(dead_code)]

use lqd_rkhs::density::{truncate_normalize, DensityGrid, GridFunction};
use lqd_rkhs::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random mixture of one to four Gaussian bumps, truncated to `[0, 1]`.
pub fn smooth_density(grid: Grid, rng: &mut ChaCha8Rng) -> DensityGrid {
    let k = rng.random_range(1..=4);
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.1..0.9),
                rng.random_range(0.04..0.25),
                rng.random_range(0.2..1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&x| {
            bumps
                .iter()
                .map(|&(c, s, w)| w * (-0.5 * ((x - c) / s).powi(2)).exp())
                .sum()
        })
        .collect();
    truncate_normalize(grid, &raw).unwrap()
}

/// Plain trapezoid L1 distance, kept separate from the library's.
pub fn l1(a: &[f64], b: &[f64], w: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let inner: f64 = d[1..d.len() - 1].iter().sum();
    w * (inner + 0.5 * (d[0] + d[d.len() - 1]))
}

pub fn mass(f: &DensityGrid) -> f64 {
    let v = f.values();
    let w = f.grid().spacing();
    w * (v[1..v.len() - 1].iter().sum::<f64>() + 0.5 * (v[0] + v[v.len() - 1]))
}

/// Linear interpolation of nodal values at `x` in `[0, 1]`.
pub fn interp(values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let s = (x.clamp(0.0, 1.0) * n as f64).min(n as f64);
    let l = (s.floor() as usize).min(n - 1);
    let r = s - l as f64;
    values[l] * (1.0 - r) + values[l + 1] * r
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-32 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}
