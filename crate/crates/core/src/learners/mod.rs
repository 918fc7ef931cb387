//! Regression learners behind one fit/predict surface.
//!
//! The same [`LearnerSpec`] type describes nuisance models, the final
//! residual-space model and the baselines, so any of them can be swapped for
//! another learner family.

mod forest;
mod linear;
mod tree;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, Forest, ForestSpec};
pub use linear::{fit_linear, LinearModel, PIVOT_TOLERANCE};
pub use tree::{fit_tree, RegressionTree, TreeNode, TreeParams};

use crate::error::{input, Result};
use crate::matrix::Matrix;
use crate::tabular::EncodingMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Linear,
    Ridge { alpha: f64 },
    Tree { max_depth: usize, min_leaf: usize },
    Forest(ForestSpec),
}

impl LearnerSpec {
    pub fn forest(n_trees: usize, seed: u64) -> Self {
        LearnerSpec::Forest(ForestSpec {
            n_trees,
            seed,
            ..ForestSpec::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Linear => Ok(()),
            LearnerSpec::Ridge { alpha } if !alpha.is_finite() || *alpha < 0.0 => {
                input(format!("ridge penalty must be non-negative, got {alpha}"))
            }
            LearnerSpec::Ridge { .. } => Ok(()),
            LearnerSpec::Tree { min_leaf, .. } if *min_leaf == 0 => input("min_leaf must be at least 1"),
            LearnerSpec::Tree { .. } => Ok(()),
            LearnerSpec::Forest(f) => {
                if f.n_trees == 0 {
                    return input("n_trees must be at least 1");
                }
                if f.min_leaf == 0 {
                    return input("min_leaf must be at least 1");
                }
                if f.mtry == Some(0) {
                    return input("mtry must be at least 1");
                }
                Ok(())
            }
        }
    }

    /// Linear learners carry an intercept and need drop-first encoding; trees
    /// use one indicator per level.
    pub fn encoding(&self) -> EncodingMode {
        match self {
            LearnerSpec::Linear | LearnerSpec::Ridge { .. } => EncodingMode::DropFirst,
            LearnerSpec::Tree { .. } | LearnerSpec::Forest(_) => EncodingMode::FullOneHot,
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, LearnerSpec::Forest(_))
    }

    /// Copy whose forest seed is replaced; other learners are unchanged.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            LearnerSpec::Forest(f) => LearnerSpec::Forest(ForestSpec { seed, ..f.clone() }),
            other => other.clone(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            LearnerSpec::Forest(f) => Some(f.seed),
            _ => None,
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[f64]) -> Result<FittedModel> {
        self.fit_weighted(x, y, None)
    }

    /// Fits with per-row sample weights. Rows with weight zero are dropped
    /// before fitting, so they have no influence of any kind.
    pub fn fit_weighted(&self, x: &Matrix, y: &[f64], weights: Option<&[f64]>) -> Result<FittedModel> {
        self.validate()?;
        if x.n_rows() != y.len() {
            return input(format!(
                "design has {} rows but target has {}",
                x.n_rows(),
                y.len()
            ));
        }
        if let Some(w) = weights {
            if w.len() != y.len() {
                return input("weight vector length does not match rows");
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return input("weights must be finite and non-negative");
            }
            if w.contains(&0.0) {
                let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
                let xs = x.select_rows(&keep);
                let ys: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
                let ws: Vec<f64> = keep.iter().map(|&i| w[i]).collect();
                return self.fit_weighted(&xs, &ys, Some(&ws));
            }
        }
        // Uniform weights are the unweighted problem.
        let weights = weights.filter(|w| w.windows(2).any(|p| p[0] != p[1]));

        let params = match self {
            LearnerSpec::Linear => ModelParams::Linear(fit_linear(x, y, weights, 0.0)?),
            LearnerSpec::Ridge { alpha } => ModelParams::Linear(fit_linear(x, y, weights, *alpha)?),
            LearnerSpec::Tree { max_depth, min_leaf } => {
                let params = TreeParams {
                    max_depth: Some(*max_depth),
                    min_leaf: *min_leaf,
                    mtry: None,
                };
                ModelParams::Tree(fit_tree(x, y, weights, &params, None, 0)?)
            }
            LearnerSpec::Forest(spec) => ModelParams::Forest(fit_forest(x, y, weights, spec)?),
        };
        Ok(FittedModel {
            spec: self.clone(),
            n_features: x.n_cols(),
            params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParams {
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest(Forest),
}

/// A trained regressor. Prediction is a pure function of the model and row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: LearnerSpec,
    pub n_features: usize,
    pub params: ModelParams,
}

impl FittedModel {
    pub fn from_params(spec: LearnerSpec, n_features: usize, params: ModelParams) -> Self {
        Self {
            spec,
            n_features,
            params,
        }
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear(m) => m.predict_row(row),
            ModelParams::Tree(t) => t.predict_row(row),
            ModelParams::Forest(f) => f.predict_row(row),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return input(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.n_cols()
            ));
        }
        Ok(x.rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn as_linear(&self) -> Option<&LinearModel> {
        match &self.params {
            ModelParams::Linear(m) => Some(m),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forest_mean_of_trees() {
        let leaf = |v| RegressionTree::from_nodes(vec![TreeNode::Leaf { value: v, count: 1 }]);
        let forest = Forest {
            trees: vec![leaf(1.0), leaf(2.0), leaf(6.0)],
        };
        let m = FittedModel::from_params(LearnerSpec::forest(3, 0), 1, ModelParams::Forest(forest));
        assert_eq!(m.predict(&Matrix::zeros(1, 1)).unwrap(), vec![3.0]);
    }

    #[test]
    fn width_mismatch_rejected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let m = LearnerSpec::Linear.fit(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(m.predict(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn zero_weight_rows_are_dropped() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [0.0, 1.0, 2.0, 100.0];
        let w = LearnerSpec::Linear.fit_weighted(&x, &y, Some(&[1.0, 1.0, 1.0, 0.0])).unwrap();
        let direct = LearnerSpec::Linear
            .fit(&x.select_rows(&[0, 1, 2]), &y[..3])
            .unwrap();
        assert_eq!(w.params, direct.params);
    }

    #[test]
    fn invalid_specs() {
        assert!(LearnerSpec::Ridge { alpha: -1.0 }.validate().is_err());
        assert!(LearnerSpec::Forest(ForestSpec { n_trees: 0, ..Default::default() }).validate().is_err());
        assert!(LearnerSpec::Tree { max_depth: 3, min_leaf: 0 }.validate().is_err());
    }

    #[test]
    fn spec_serializes_with_kind_tag() {
        let s = serde_json::to_string(&LearnerSpec::Ridge { alpha: 0.5 }).unwrap();
        assert_eq!(s, r#"{"kind":"ridge","alpha":0.5}"#);
        let f: LearnerSpec = serde_json::from_str(&serde_json::to_string(&LearnerSpec::forest(10, 3)).unwrap()).unwrap();
        assert_eq!(f, LearnerSpec::forest(10, 3));
    }
}
