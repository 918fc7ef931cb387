//! Bagged regression forests.
//!
//! Every tree sees a bootstrap resample of the rows (drawn with probability
//! proportional to the sample weights, uniformly when there are none) and a
//! fresh random subset of `mtry` features at each split. Tree `t` draws from
//! a PRNG seeded with `derive(seed, t)`, so the fitted forest does not depend
//! on how the work is scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on_rows, RegressionTree, TreeParams};
use crate::error::{input, Result};
use crate::matrix::Matrix;
use crate::seed::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSpec {
    pub n_trees: usize,
    /// Features tried per split; defaults to `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Disable to fit every tree on the full sample (test hook).
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

fn yes() -> bool {
    true
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestSpec {
    pub fn with_trees(n_trees: usize) -> Self {
        Self {
            n_trees,
            ..Self::default()
        }
    }

    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry.unwrap_or_else(|| n_features.div_ceil(3).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest(x: &Matrix, y: &[f64], weights: Option<&[f64]>, spec: &ForestSpec) -> Result<Forest> {
    let n = x.n_rows();
    let p = x.n_cols();
    if n == 0 {
        return input("cannot fit a forest on empty data");
    }
    if n != y.len() {
        return input(format!("design has {n} rows but target has {}", y.len()));
    }
    if spec.n_trees == 0 {
        return input("a forest needs at least one tree");
    }
    if spec.min_leaf == 0 {
        return input("min_leaf must be at least 1");
    }
    let mtry = spec.resolved_mtry(p);
    if p > 0 && mtry > p {
        return input(format!("mtry {mtry} exceeds the {p} available features"));
    }
    let weights = match weights {
        Some(w) if w.len() != n => return input("weight vector length does not match rows"),
        Some(w) if w.windows(2).all(|p| p[0] == p[1]) => None,
        other => other,
    };
    let sampler = match (weights, spec.bootstrap) {
        (Some(w), true) => Some(
            WeightedIndex::new(w).map_err(|e| crate::Error::Input(format!("bad weights: {e}")))?,
        ),
        _ => None,
    };
    // Without bootstrap, non-uniform weights enter the split criterion instead.
    let tree_weights = if spec.bootstrap { None } else { weights };
    let params = TreeParams {
        max_depth: spec.max_depth,
        min_leaf: spec.min_leaf,
        mtry: (p > 0).then_some(mtry),
    };

    let trees = (0..spec.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(spec.seed, &[t as u64]));
            let rows: Vec<usize> = if !spec.bootstrap {
                (0..n).collect()
            } else if let Some(s) = &sampler {
                (0..n).map(|_| s.sample(&mut rng)).collect()
            } else {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            };
            fit_tree_on_rows(x, y, tree_weights, &params, None, rows, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest { trees })
}
