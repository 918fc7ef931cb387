//! Cross-fitted nuisance estimation and residualization.
//!
//! For every target (the outcome and each encoded non-sensitive predictor) a
//! learner maps the encoded sensitive features to the target. With `K` folds,
//! the model for fold `k` is trained on every row outside fold `k` and scores
//! only the rows inside it, so no row's residual comes from a model that saw
//! that row. New rows are scored by the average of the `K` fold models.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::learners::{FittedModel, LearnerSpec};
use crate::matrix::Matrix;
use crate::seed::derive;
use crate::tabular::FoldAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRole {
    Outcome,
    Predictor,
}

/// A named column to be partialled out.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub name: String,
    pub role: TargetRole,
    pub values: Vec<f64>,
}

impl Target {
    pub fn outcome(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            role: TargetRole::Outcome,
            values,
        }
    }

    pub fn predictor(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            role: TargetRole::Predictor,
            values,
        }
    }
}

/// Learner used for each nuisance target, with optional per-target overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceLearners {
    pub default: LearnerSpec,
    #[serde(default)]
    pub overrides: BTreeMap<String, LearnerSpec>,
}

impl NuisanceLearners {
    pub fn uniform(spec: LearnerSpec) -> Self {
        Self {
            default: spec,
            overrides: BTreeMap::new(),
        }
    }

    pub fn for_target(&self, name: &str) -> &LearnerSpec {
        self.overrides.get(name).unwrap_or(&self.default)
    }
}

/// The `K` fold models of one target plus its cached out-of-fold predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceModels {
    pub name: String,
    pub role: TargetRole,
    /// `models[k]` was trained on the rows outside fold `k`.
    pub models: Vec<FittedModel>,
    pub out_of_fold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub targets: Vec<NuisanceModels>,
    pub folds: FoldAssignment,
    pub n_features: usize,
}

impl NuisanceSet {
    pub fn target(&self, name: &str) -> Result<&NuisanceModels> {
        self.targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| crate::Error::Input(format!("unknown nuisance target `{name}`")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.targets.iter().map(|t| t.name.as_str()).collect()
    }

    /// Index of the fold model that produced row `row`'s out-of-fold value.
    pub fn model_for_row(&self, row: usize) -> usize {
        self.folds.fold_of(row)
    }
}

/// Fits `K` models per target on the fold complements and records each row's
/// out-of-fold prediction.
///
/// Forest seeds are re-derived per `(target, fold)` from the learner's seed so
/// that the fold models are not copies of one another.
pub fn crossfit_nuisance(
    d: &Matrix,
    targets: &[Target],
    folds: &FoldAssignment,
    learners: &NuisanceLearners,
) -> Result<NuisanceSet> {
    let n = d.n_rows();
    if targets.is_empty() {
        return input("no nuisance targets given");
    }
    if folds.n_rows() != n {
        return input(format!(
            "fold assignment covers {} rows, data has {n}",
            folds.n_rows()
        ));
    }
    let mut seen = HashSet::new();
    for t in targets {
        if t.values.len() != n {
            return input(format!(
                "target `{}` has {} values, expected {n}",
                t.name,
                t.values.len()
            ));
        }
        if !seen.insert(t.name.as_str()) {
            return input(format!("target `{}` listed twice", t.name));
        }
    }
    if targets.iter().filter(|t| t.role == TargetRole::Outcome).count() > 1 {
        return input("more than one outcome target");
    }

    let k = folds.k();
    let train_rows: Vec<Vec<usize>> = (0..k).map(|f| folds.training_rows(f)).collect();
    if let Some(f) = train_rows.iter().position(|r| r.len() < 2) {
        return input(format!(
            "fold {f} leaves only {} training rows",
            train_rows[f].len()
        ));
    }
    let train_x: Vec<Matrix> = train_rows.iter().map(|r| d.select_rows(r)).collect();

    let jobs: Vec<(usize, usize)> = (0..targets.len())
        .flat_map(|t| (0..k).map(move |f| (t, f)))
        .collect();
    let fitted: Vec<FittedModel> = jobs
        .par_iter()
        .map(|&(t, f)| {
            let target = &targets[t];
            let spec = learners.for_target(&target.name);
            let spec = match spec.seed() {
                Some(s) => spec.with_seed(derive(s, &[t as u64, f as u64])),
                None => spec.clone(),
            };
            let y: Vec<f64> = train_rows[f].iter().map(|&r| target.values[r]).collect();
            spec.fit(&train_x[f], &y)
        })
        .collect::<Result<_>>()?;

    let mut fitted = fitted.into_iter();
    let mut out = Vec::with_capacity(targets.len());
    for target in targets {
        let models: Vec<FittedModel> = fitted.by_ref().take(k).collect();
        let out_of_fold = (0..n)
            .map(|r| models[folds.fold_of(r)].predict_row(d.row(r)))
            .collect();
        out.push(NuisanceModels {
            name: target.name.clone(),
            role: target.role,
            models,
            out_of_fold,
        });
    }
    Ok(NuisanceSet {
        targets: out,
        folds: folds.clone(),
        n_features: d.n_cols(),
    })
}

/// Residualized outcome and predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub outcome_name: Option<String>,
    pub outcome: Option<Vec<f64>>,
    pub predictor_names: Vec<String>,
    /// One column per predictor target, in target order.
    pub predictors: Matrix,
    /// Fold (hence fold model) behind each row's residual.
    pub fold_of_row: Vec<usize>,
}

/// Subtracts the cached out-of-fold predictions from each target.
pub fn residualize(nuis: &NuisanceSet, targets: &[Target]) -> Result<Residuals> {
    let n = nuis.folds.n_rows();
    let mut outcome = None;
    let mut outcome_name = None;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    for t in targets {
        if t.values.len() != n {
            return input(format!(
                "target `{}` has {} rows but the nuisance models were fit on {n}",
                t.name,
                t.values.len()
            ));
        }
        let models = nuis.target(&t.name)?;
        let resid: Vec<f64> = t
            .values
            .iter()
            .zip(&models.out_of_fold)
            .map(|(v, p)| v - p)
            .collect();
        match t.role {
            TargetRole::Outcome => {
                outcome_name = Some(t.name.clone());
                outcome = Some(resid);
            }
            TargetRole::Predictor => {
                names.push(t.name.clone());
                cols.push(resid);
            }
        }
    }
    Ok(Residuals {
        outcome_name,
        outcome,
        predictor_names: names,
        predictors: Matrix::from_columns(n, &cols)?,
        fold_of_row: (0..n).map(|r| nuis.folds.fold_of(r)).collect(),
    })
}

/// Average of the `K` fold models' predictions on new rows.
pub fn nuisance_predict_avg(nuis: &NuisanceSet, d_new: &Matrix, target: &str) -> Result<Vec<f64>> {
    let models = &nuis.target(target)?.models;
    if d_new.n_cols() != nuis.n_features {
        return input(format!(
            "nuisance models expect {} features, got {}",
            nuis.n_features,
            d_new.n_cols()
        ));
    }
    let k = models.len() as f64;
    Ok(d_new
        .rows()
        .map(|row| models.iter().map(|m| m.predict_row(row)).sum::<f64>() / k)
        .collect())
}
