//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use dmlfair::tabular::{ColumnRole, ColumnSpec, Dataset, Schema, ValueKind};
use dmlfair::Matrix;

/// Least squares with an intercept via Householder QR on the raw design.
/// Returns `[intercept, b_1, ..., b_p]`.
pub fn ols_qr(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = x.n_rows();
    let p = x.n_cols() + 1;
    // Column-major copy with a leading column of ones.
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(p);
    a.push(vec![1.0; n]);
    for j in 0..x.n_cols() {
        a.push(x.column(j));
    }
    let mut b = y.to_vec();
    for k in 0..p {
        let norm: f64 = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(vi, ci)| vi * ci).sum();
            let f = 2.0 * dot / vnorm2;
            for (ci, vi) in col[k..].iter_mut().zip(&v) {
                *ci -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(vi, bi)| vi * bi).sum();
        let f = 2.0 * dot / vnorm2;
        for (bi, vi) in b[k..].iter_mut().zip(&v) {
            *bi -= f * vi;
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in i + 1..p {
            s -= a[j][i] * beta[j];
        }
        beta[i] = s / a[i][i];
    }
    beta
}

/// Exhaustive best root split by SSE reduction: every feature, every
/// midpoint between distinct sorted values, scored from scratch.
/// Returns `(feature, threshold, sse_after)`.
pub fn exhaustive_root_split(x: &Matrix, y: &[f64], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let sse = |idx: &[usize]| {
        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.n_cols() {
        let mut vals: Vec<f64> = (0..x.n_rows()).map(|i| x.get(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = (0..x.n_rows()).partition(|&i| x.get(i, f) <= t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let s = sse(&l) + sse(&r);
            if best.map_or(true, |(_, _, b)| s < b) {
                best = Some((f, t, s));
            }
        }
    }
    best
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Fully linear data: a three-level sensitive factor `s` and a numeric
/// sensitive `z`, three predictors shifted by them, and a linear outcome.
pub fn linear_dataset(n: usize, seed: u64) -> Dataset {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = ["a", "b", "c"];
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let s = rng.random_range(0..3usize);
        let z: f64 = StandardNormal.sample(&mut rng);
        let e: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let sf = s as f64;
        let x1 = 1.0 + 0.8 * sf + 0.5 * z + e[0];
        let x2 = -0.5 * sf + 0.3 * z + 0.4 * x1 + e[1];
        let x3 = 2.0 * z + e[2];
        let y = 2.0 + 1.5 * x1 - 0.7 * x2 + 0.25 * x3 + 1.2 * sf - 0.9 * z + 0.5 * e[3];
        rows.push(vec![
            levels[s].to_string(),
            z.to_string(),
            x1.to_string(),
            x2.to_string(),
            x3.to_string(),
            y.to_string(),
        ]);
    }
    let schema = Schema::new(vec![
        ColumnSpec::categorical("s", &levels, ColumnRole::Sensitive),
        ColumnSpec::new("z", ValueKind::Numeric, ColumnRole::Sensitive),
        ColumnSpec::new("x1", ValueKind::Numeric, ColumnRole::NonSensitive),
        ColumnSpec::new("x2", ValueKind::Numeric, ColumnRole::NonSensitive),
        ColumnSpec::new("x3", ValueKind::Numeric, ColumnRole::NonSensitive),
        ColumnSpec::new("y", ValueKind::Numeric, ColumnRole::Outcome),
    ])
    .unwrap();
    Dataset::from_text_rows(schema, &rows).unwrap()
}
