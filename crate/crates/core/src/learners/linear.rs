//! Ordinary and ridge least squares via the normal equations.
//!
//! The intercept is never penalized: columns are centered (with the sample
//! weights) before the Gram matrix is formed and the intercept is recovered
//! from the means afterwards. The centered Gram matrix is rescaled to unit
//! diagonal before its Cholesky factorization so that the rank check is
//! scale free.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::matrix::Matrix;

/// A pivot smaller than this fraction of the largest pivot means the design
/// is numerically rank deficient.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Minimizes `sum w_i (y_i - a - x_i.b)^2 + penalty * |b|^2`.
///
/// Columns with zero weighted variance get coefficient zero. Any other rank
/// deficiency with `penalty == 0` is an error rather than being
/// resolved by a pseudo-inverse.
pub fn fit_linear(x: &Matrix, y: &[f64], weights: Option<&[f64]>, penalty: f64) -> Result<LinearModel> {
    let n = x.n_rows();
    let p = x.n_cols();
    if n != y.len() {
        return input(format!("design has {n} rows but target has {}", y.len()));
    }
    if n < 2 {
        return input(format!("least squares needs at least 2 rows, got {n}"));
    }
    if !(penalty >= 0.0 && penalty.is_finite()) {
        return input(format!("penalty must be a finite non-negative number, got {penalty}"));
    }
    let unit;
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return input("weight vector length does not match rows");
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return input("weights must be finite and non-negative");
            }
            w
        }
        None => {
            unit = vec![1.0; n];
            &unit
        }
    };
    let w_sum: f64 = w.iter().sum();
    if w_sum <= 0.0 {
        return input("weights sum to zero");
    }

    let y_mean = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum::<f64>() / w_sum;
    let mut x_mean = vec![0.0; p];
    for (r, row) in x.rows().enumerate() {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += w[r] * v;
        }
    }
    for m in &mut x_mean {
        *m /= w_sum;
    }

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for (r, row) in x.rows().enumerate() {
        let wr = w[r];
        if wr == 0.0 {
            continue;
        }
        for j in 0..p {
            centered[j] = row[j] - x_mean[j];
        }
        let yc = y[r] - y_mean;
        for j in 0..p {
            let wj = wr * centered[j];
            rhs[j] += wj * yc;
            for k in 0..=j {
                gram[j * p + k] += wj * centered[k];
            }
        }
    }
    // Constant columns (for example an indicator whose level is absent from
    // this sample) are left out of the solve and get coefficient 0.
    let active: Vec<usize> = (0..p).filter(|&j| gram[j * p + j] > 0.0).collect();
    let q = active.len();
    let mut g = vec![0.0; q * q];
    let mut b = vec![0.0; q];
    let mut scale = vec![0.0; q];
    for (a, &j) in active.iter().enumerate() {
        scale[a] = (gram[j * p + j] + penalty).sqrt();
    }
    for (a, &j) in active.iter().enumerate() {
        b[a] = rhs[j] / scale[a];
        for (c, &k) in active.iter().enumerate().take(a + 1) {
            let extra = if a == c { penalty } else { 0.0 };
            g[a * q + c] = (gram[j * p + k] + extra) / (scale[a] * scale[c]);
        }
    }

    let mut coefficients = vec![0.0; p];
    if q > 0 {
        let chol = cholesky_lower(&mut g, q, penalty == 0.0)
            .map_err(|_| Error::Singular(format!("design matrix is rank deficient ({p} columns)")))?;
        let z = solve_lower(chol, q, &b);
        let beta_scaled = solve_upper_from_lower(chol, q, &z);
        for (a, &j) in active.iter().enumerate() {
            coefficients[j] = beta_scaled[a] / scale[a];
        }
    }
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel {
        intercept,
        coefficients,
    })
}

/// In-place Cholesky of the lower triangle of a symmetric `p x p` matrix.
fn cholesky_lower(a: &mut [f64], p: usize, check_rank: bool) -> Result<&[f64]> {
    let mut max_pivot: f64 = 0.0;
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        max_pivot = max_pivot.max(d);
        if d <= 0.0 || (check_rank && d <= PIVOT_TOLERANCE * max_pivot) {
            return Err(Error::Singular(format!(
                "design matrix is rank deficient at column {j}"
            )));
        }
        let l = d.sqrt();
        a[j * p + j] = l;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / l;
        }
    }
    Ok(a)
}

fn solve_lower(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    z
}

fn solve_upper_from_lower(l: &[f64], p: usize, z: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x
}
