//! The deployable estimator.
//!
//! Training partials the sensitive columns out of the outcome and every
//! non-sensitive predictor (see [`crate::orthogonal`]) and fits the final
//! learner on the residuals. A prediction is the final model's output on the
//! residualized predictors, optionally shifted by the nuisance outcome model
//! evaluated at a base-case profile of the sensitive columns. The shift is one
//! constant for every row, so the base case changes the scale of predictions
//! but never their differences or ranking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::learners::{FittedModel, LearnerSpec};
use crate::matrix::Matrix;
use crate::orthogonal::{
    crossfit_nuisance, nuisance_predict_avg, residualize, NuisanceLearners, NuisanceSet, Residuals, Target,
};
use crate::tabular::{
    assign_folds, encode_columns, ColumnRole, Dataset, EncodedMatrix, EncodingMode, FoldAssignment, Schema,
    ValueKind,
};

/// Reference profile of the sensitive columns, e.g. `age=18,gender=male,race=white`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BaseCase {
    values: BTreeMap<String, String>,
}

impl BaseCase {
    pub fn new<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            values: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    /// Parses `col=value` pairs separated by commas.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("base case entry `{part}` is not col=value")))?;
            if values.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return input(format!("base case sets `{}` twice", k.trim()));
            }
        }
        if values.is_empty() {
            return input("empty base case");
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// One-row dataset holding the profile for the given sensitive columns.
    pub fn to_dataset(&self, schema: &Schema, sensitive: &[String]) -> Result<Dataset> {
        for key in self.values.keys() {
            let spec = schema.column(key)?;
            if spec.role != ColumnRole::Sensitive {
                return input(format!("base case column `{key}` is not sensitive"));
            }
        }
        let sub = schema.subset(sensitive)?;
        let row: Vec<String> = sub
            .columns()
            .iter()
            .map(|c| {
                self.values
                    .get(&c.name)
                    .cloned()
                    .ok_or_else(|| Error::Input(format!("base case does not set sensitive column `{}`", c.name)))
            })
            .collect::<Result<_>>()?;
        Dataset::from_text_rows(sub, &[row]).map_err(|e| match e {
            Error::Parse { column, message, .. } => {
                Error::Input(format!("base case value for `{column}`: {message}"))
            }
            other => other,
        })
    }
}

impl std::fmt::Display for BaseCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Everything [`train`] needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nuisance: NuisanceLearners,
    pub final_learner: LearnerSpec,
    pub folds: usize,
    /// Seeds the fold assignment.
    pub seed: u64,
    pub base_case: BaseCase,
    /// Fit nuisances once on the full sample with no cross-fitting. This
    /// exists for exact-algebra checks and must not be used for real models.
    #[serde(default)]
    pub full_sample_nuisance: bool,
    /// Sensitive levels with fewer training rows than this raise a warning.
    #[serde(default = "default_small_group")]
    pub small_group_threshold: usize,
}

fn default_small_group() -> usize {
    50
}

impl TrainConfig {
    pub fn new(nuisance: LearnerSpec, final_learner: LearnerSpec, folds: usize, seed: u64, base_case: BaseCase) -> Self {
        Self {
            nuisance: NuisanceLearners::uniform(nuisance),
            final_learner,
            folds,
            seed,
            base_case,
            full_sample_nuisance: false,
            small_group_threshold: default_small_group(),
        }
    }
}

/// Cross-fitted residuals plus the layout needed to reproduce them.
struct Prepared {
    sensitive: Vec<String>,
    predictors: Vec<String>,
    d_mode: EncodingMode,
    x_enc: EncodedMatrix,
    y: Vec<f64>,
    nuisance: NuisanceSet,
    residuals: Residuals,
    observed_levels: BTreeMap<String, BTreeSet<String>>,
    warnings: Vec<String>,
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    warnings.push(msg);
}

fn prepare(data: &Dataset, cfg: &TrainConfig, x_mode: EncodingMode) -> Result<Prepared> {
    let schema = data.schema();
    schema.validate_for_training()?;
    let n = data.n_rows();
    let k = cfg.folds;
    if !cfg.full_sample_nuisance && n < 2 * k {
        return input(format!("{n} rows are too few for {k} folds (need at least {})", 2 * k));
    }
    let mut warnings = Vec::new();
    if !cfg.full_sample_nuisance && n < 10 * k {
        warn(&mut warnings, format!("only {n} rows for {k} folds; at least {} recommended", 10 * k));
    }

    let mut sensitive = Vec::new();
    for name in schema.names_with_role(ColumnRole::Sensitive) {
        if data.is_constant(&name)? {
            warn(&mut warnings, format!("sensitive column `{name}` takes a single value and is dropped"));
        } else {
            sensitive.push(name);
        }
    }
    if sensitive.is_empty() {
        return input("every sensitive column is constant; nothing to partial out");
    }

    let mut observed_levels = BTreeMap::new();
    for name in &sensitive {
        let spec = schema.column(name)?;
        if !matches!(spec.kind, ValueKind::Categorical(_) | ValueKind::Boolean) {
            continue;
        }
        let counts = data.level_counts(name)?;
        for (level, &count) in &counts {
            if count < cfg.small_group_threshold {
                warn(
                    &mut warnings,
                    format!("level `{level}` of `{name}` has only {count} training rows"),
                );
            }
        }
        observed_levels.insert(name.clone(), counts.into_keys().collect());
    }

    let d_mode = cfg.nuisance.default.encoding();
    let d_enc = encode_columns(data, &sensitive, d_mode)?;
    let predictors = schema.names_with_role(ColumnRole::NonSensitive);
    let x_enc = encode_columns(data, &predictors, x_mode)?;
    let y = data.outcome()?;
    let outcome_name = schema.names_with_role(ColumnRole::Outcome).remove(0);

    let mut targets = vec![Target::outcome(outcome_name, y.clone())];
    for (j, label) in x_enc.labels().into_iter().enumerate() {
        targets.push(Target::predictor(label, x_enc.matrix.column(j)));
    }
    let folds = if cfg.full_sample_nuisance {
        FoldAssignment::full_sample(n)
    } else {
        assign_folds(n, k, cfg.seed)?
    };
    let nuisance = crossfit_nuisance(&d_enc.matrix, &targets, &folds, &cfg.nuisance)?;
    let residuals = residualize(&nuisance, &targets)?;
    Ok(Prepared {
        sensitive,
        predictors,
        d_mode,
        x_enc,
        y,
        nuisance,
        residuals,
        observed_levels,
        warnings,
    })
}

/// Trained fair model: nuisance models, residual-space predictor and the
/// base-case offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmlFairModel {
    pub schema: Schema,
    pub fingerprint: String,
    /// Sensitive columns partialled out (constant ones are dropped).
    pub sensitive: Vec<String>,
    pub predictors: Vec<String>,
    pub d_mode: EncodingMode,
    pub x_mode: EncodingMode,
    pub nuisance: NuisanceSet,
    pub final_model: FittedModel,
    pub base_case: BaseCase,
    pub offset: f64,
    pub observed_levels: BTreeMap<String, BTreeSet<String>>,
    pub warnings: Vec<String>,
}

/// Fits nuisances with cross-fitting, the final learner on the residuals, and
/// caches the base-case offset.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<DmlFairModel> {
    cfg.final_learner.validate()?;
    let prep = prepare(data, cfg, cfg.final_learner.encoding())?;
    let y_tilde = prep.residuals.outcome.as_ref().expect("outcome target present");
    let final_model = cfg.final_learner.fit(&prep.residuals.predictors, y_tilde)?;
    let mut model = DmlFairModel {
        schema: data.schema().clone(),
        fingerprint: data.schema().feature_fingerprint(),
        sensitive: prep.sensitive,
        predictors: prep.predictors,
        d_mode: prep.d_mode,
        x_mode: prep.x_enc.mode,
        nuisance: prep.nuisance,
        final_model,
        base_case: BaseCase::default(),
        offset: 0.0,
        observed_levels: prep.observed_levels,
        warnings: prep.warnings,
    };
    model.offset = model.offset_for(&cfg.base_case)?;
    model.base_case = cfg.base_case.clone();
    Ok(model)
}

impl DmlFairModel {
    fn outcome_target(&self) -> &str {
        &self.nuisance.targets[0].name
    }

    fn check_input(&self, data: &Dataset) -> Result<()> {
        if data.schema().feature_fingerprint() != self.fingerprint {
            return Err(Error::Schema(
                "dataset columns do not match the schema the model was trained on".into(),
            ));
        }
        for (name, seen) in &self.observed_levels {
            for level in data.labels(name)? {
                if !seen.contains(&level) {
                    return Err(Error::UnseenLevel {
                        column: name.clone(),
                        level,
                    });
                }
            }
        }
        Ok(())
    }

    /// Nuisance outcome prediction at a base-case profile.
    pub fn offset_for(&self, base: &BaseCase) -> Result<f64> {
        let row = base.to_dataset(&self.schema, &self.sensitive)?;
        for (name, seen) in &self.observed_levels {
            let level = row.labels(name)?.remove(0);
            if !seen.contains(&level) {
                return Err(Error::UnseenLevel {
                    column: name.clone(),
                    level,
                });
            }
        }
        let d = encode_columns(&row, &self.sensitive, self.d_mode)?;
        let offset = nuisance_predict_avg(&self.nuisance, &d.matrix, self.outcome_target())?[0];
        if !offset.is_finite() {
            return input("base-case offset is not finite");
        }
        Ok(offset)
    }

    /// Same model recentred on another base case.
    pub fn with_base_case(&self, base: BaseCase) -> Result<Self> {
        let offset = self.offset_for(&base)?;
        Ok(Self {
            base_case: base,
            offset,
            ..self.clone()
        })
    }

    /// Overrides the cached offset; only useful in tests.
    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Predictors with the sensitive columns partialled out by the averaged
    /// fold models.
    pub fn residualize_inputs(&self, data: &Dataset) -> Result<Matrix> {
        self.check_input(data)?;
        let d = encode_columns(data, &self.sensitive, self.d_mode)?;
        let x = encode_columns(data, &self.predictors, self.x_mode)?;
        let mut out = x.matrix.clone();
        for (j, label) in x.labels().iter().enumerate() {
            let fitted = nuisance_predict_avg(&self.nuisance, &d.matrix, label)?;
            for (r, f) in fitted.into_iter().enumerate() {
                out.set(r, j, x.matrix.get(r, j) - f);
            }
        }
        Ok(out)
    }

    /// Relative predictions are the final model's output on residualized
    /// inputs; otherwise the base-case offset is added.
    pub fn predict(&self, data: &Dataset, relative: bool) -> Result<Vec<f64>> {
        let x_tilde = self.residualize_inputs(data)?;
        let mut preds = self.final_model.predict(&x_tilde)?;
        if !relative {
            for p in &mut preds {
                *p += self.offset;
            }
        }
        Ok(preds)
    }

    /// Predictions recentred row by row on the base case of the row's group.
    /// `cases` must name a base case for every declared level of `column`.
    pub fn group_base_case_predictions(
        &self,
        data: &Dataset,
        column: &str,
        cases: &BTreeMap<String, BaseCase>,
    ) -> Result<Vec<f64>> {
        let offsets = self.group_offsets(column, cases)?;
        let relative = self.predict(data, true)?;
        let groups = data.labels(column)?;
        Ok(relative
            .iter()
            .zip(&groups)
            .map(|(p, g)| p + offsets[g])
            .collect())
    }

    pub fn group_offsets(&self, column: &str, cases: &BTreeMap<String, BaseCase>) -> Result<BTreeMap<String, f64>> {
        let levels: Vec<String> = match &self.schema.column(column)?.kind {
            ValueKind::Categorical(levels) => levels.clone(),
            ValueKind::Boolean => vec!["FALSE".into(), "TRUE".into()],
            _ => return input(format!("group column `{column}` must be categorical or boolean")),
        };
        let mut offsets = BTreeMap::new();
        for level in levels {
            let base = cases
                .get(&level)
                .ok_or_else(|| Error::Input(format!("no base case for level `{level}` of `{column}`")))?;
            offsets.insert(level, self.offset_for(base)?);
        }
        Ok(offsets)
    }
}

/// Fairness-through-unawareness baseline: the learner on raw predictors only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnawareModel {
    pub fingerprint: String,
    pub predictors: Vec<String>,
    pub x_mode: EncodingMode,
    pub model: FittedModel,
}

pub fn train_unaware(data: &Dataset, learner: &LearnerSpec) -> Result<UnawareModel> {
    data.schema().validate_for_training()?;
    let predictors = data.schema().names_with_role(ColumnRole::NonSensitive);
    let x = encode_columns(data, &predictors, learner.encoding())?;
    let model = learner.fit(&x.matrix, &data.outcome()?)?;
    Ok(UnawareModel {
        fingerprint: data.schema().feature_fingerprint(),
        predictors,
        x_mode: x.mode,
        model,
    })
}

impl UnawareModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.schema().feature_fingerprint() != self.fingerprint {
            return Err(Error::Schema(
                "dataset columns do not match the schema the model was trained on".into(),
            ));
        }
        let x = encode_columns(data, &self.predictors, self.x_mode)?;
        self.model.predict(&x.matrix)
    }
}

/// Fairness/accuracy trade-off weight and the learner that carries the
/// shared parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedSpec {
    pub lambda: f64,
    pub learner: LearnerSpec,
}

/// One model fit on raw rows (weight `1 - lambda`) stacked with residualized
/// rows (weight `lambda`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedModel {
    pub lambda: f64,
    pub fingerprint: String,
    pub predictors: Vec<String>,
    pub x_mode: EncodingMode,
    pub model: FittedModel,
}

/// Minimizes `(1 - lambda) L(Y, m(X)) + lambda L(Y~, m(X~))` for squared
/// loss by fitting `spec.learner` once on the weighted stacked sample.
/// Residuals are produced exactly as [`train`] produces them under `cfg`.
pub fn train_regularized(data: &Dataset, spec: &RegularizedSpec, cfg: &TrainConfig) -> Result<RegularizedModel> {
    if !(0.0..=1.0).contains(&spec.lambda) {
        return input(format!("lambda must lie in [0, 1], got {}", spec.lambda));
    }
    spec.learner.validate()?;
    let prep = prepare(data, cfg, spec.learner.encoding())?;
    let n = prep.y.len();
    let stacked_x = prep.x_enc.matrix.vstack(&prep.residuals.predictors)?;
    let mut stacked_y = prep.y.clone();
    stacked_y.extend_from_slice(prep.residuals.outcome.as_ref().expect("outcome target present"));
    let mut weights = vec![1.0 - spec.lambda; n];
    weights.extend(std::iter::repeat(spec.lambda).take(n));
    let model = spec.learner.fit_weighted(&stacked_x, &stacked_y, Some(&weights))?;
    Ok(RegularizedModel {
        lambda: spec.lambda,
        fingerprint: data.schema().feature_fingerprint(),
        predictors: prep.predictors,
        x_mode: prep.x_enc.mode,
        model,
    })
}

impl RegularizedModel {
    /// Scores raw (not residualized) predictors.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.schema().feature_fingerprint() != self.fingerprint {
            return Err(Error::Schema(
                "dataset columns do not match the schema the model was trained on".into(),
            ));
        }
        let x = encode_columns(data, &self.predictors, self.x_mode)?;
        self.model.predict(&x.matrix)
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.model.predict(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionRule {
    None,
    /// Elementwise best of the fair and unaware predictions.
    MaxFloor,
    /// Elementwise best of the fair prediction and the prediction recentred
    /// on the row's group-specific base case.
    GroupBaseCase {
        column: String,
        cases: BTreeMap<String, BaseCase>,
    },
}

/// Combines prediction vectors according to `rule`. With
/// `higher_is_better == false` the rules take minima instead of maxima.
pub fn apply_decision_rule(
    rule: &DecisionRule,
    dml: &[f64],
    unaware: Option<&[f64]>,
    group_bc: Option<&[f64]>,
    higher_is_better: bool,
) -> Result<Vec<f64>> {
    let other = match rule {
        DecisionRule::None => return Ok(dml.to_vec()),
        DecisionRule::MaxFloor => {
            unaware.ok_or_else(|| Error::Input("max_floor needs unaware predictions".into()))?
        }
        DecisionRule::GroupBaseCase { .. } => group_bc
            .ok_or_else(|| Error::Input("group_base_case needs group-recentred predictions".into()))?,
    };
    if other.len() != dml.len() {
        return input(format!(
            "prediction vectors differ in length ({} vs {})",
            dml.len(),
            other.len()
        ));
    }
    Ok(dml
        .iter()
        .zip(other)
        .map(|(&a, &b)| if higher_is_better { a.max(b) } else { a.min(b) })
        .collect())
}

/// How much a floor rule leans on the alternative predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDiagnostics {
    /// Share of rows where the alternative prediction was chosen.
    pub share_from_alternative: f64,
    pub sd_fair: f64,
    pub sd_alternative: f64,
    pub sd_output: f64,
}

pub fn rule_diagnostics(dml: &[f64], alternative: &[f64], output: &[f64]) -> RuleDiagnostics {
    let chosen = output
        .iter()
        .zip(dml)
        .zip(alternative)
        .filter(|((o, d), a)| o != d && o == a)
        .count();
    RuleDiagnostics {
        share_from_alternative: chosen as f64 / output.len().max(1) as f64,
        sd_fair: crate::fairmetrics::sample_sd(dml),
        sd_alternative: crate::fairmetrics::sample_sd(alternative),
        sd_output: crate::fairmetrics::sample_sd(output),
    }
}
