use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dmlfair::pipeline::{apply_decision_rule, rule_diagnostics, BaseCase, DecisionRule};
use dmlfair::tabular::ColumnRole;
use dmlfair::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, Outputs};
use crate::util::{f, load_bundle, load_scoring_data, table_bytes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RuleKind {
    None,
    MaxFloor,
    GroupBaseCase,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictArgs {
    /// JSON file of options (keys are flag names with `_`), or a manifest to replay.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: <out>.manifest.json).
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,

    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Rows to score; the outcome column is optional.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output CSV: identifier columns, `row`, `prediction`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the base-case offset.
    #[arg(long)]
    pub relative: bool,
    /// Recentre on another base-case profile.
    #[arg(long)]
    pub base: Option<String>,
    /// Score with the trade-off model instead of the fair model.
    #[arg(long)]
    pub regularized: bool,
    /// Decision rule applied on top of the fair predictions [default: none].
    #[arg(long, value_enum)]
    pub rule: Option<RuleKind>,
    /// Column whose levels get their own base case (group_base_case rule).
    #[arg(long)]
    pub group_column: Option<String>,
    /// `level:col=value,...` for each level of --group-column; repeatable.
    #[arg(long)]
    pub group_base: Vec<String>,
    /// Treat lower outcomes as better, so the rules take minima.
    #[arg(long)]
    pub lower_is_better: bool,
}

pub fn parse_group_bases(items: &[String]) -> Result<BTreeMap<String, BaseCase>> {
    let mut out = BTreeMap::new();
    for item in items {
        let (level, base) = item
            .split_once(':')
            .ok_or_else(|| Error::Input(format!("group base `{item}` is not level:col=value,...")))?;
        if out.insert(level.trim().to_string(), BaseCase::parse(base)?).is_some() {
            return Err(Error::Input(format!("group base for `{level}` given twice")));
        }
    }
    Ok(out)
}

pub fn run(flags: &PredictArgs) -> Result<()> {
    let (args, resolved) = config::resolve(flags, flags.config.as_deref(), "predict")?;
    let model_path = config::required(&args.model, "model")?;
    let data_path = config::required(&args.data, "data")?;
    let out = config::required(&args.out, "out")?;
    let bundle = load_bundle(&model_path)?;
    let mut dml = bundle.dml;
    if let Some(b) = &args.base {
        dml = dml.with_base_case(BaseCase::parse(b)?)?;
    }
    let data = load_scoring_data(&data_path, &dml)?;
    let rule = args.rule.unwrap_or(RuleKind::None);
    if args.regularized && rule != RuleKind::None {
        return Err(Error::Input("decision rules apply to the fair model, not --regularized".into()));
    }
    if args.regularized && args.relative {
        return Err(Error::Input("--relative has no meaning for the trade-off model".into()));
    }

    let mut details = serde_json::Map::new();
    let preds = if args.regularized {
        let reg = bundle
            .regularized
            .ok_or_else(|| Error::Input("model file holds no trade-off model (train with --lambda)".into()))?;
        reg.predict(&data)?
    } else {
        let fair = dml.predict(&data, args.relative)?;
        let (decision, alt) = match rule {
            RuleKind::None => (DecisionRule::None, None),
            RuleKind::MaxFloor => {
                let u = bundle
                    .unaware
                    .ok_or_else(|| Error::Input("max_floor needs the unaware model (train without --no-unaware)".into()))?;
                (DecisionRule::MaxFloor, Some(u.predict(&data)?))
            }
            RuleKind::GroupBaseCase => {
                let column = config::required(&args.group_column, "group-column")?;
                let cases = parse_group_bases(&args.group_base)?;
                let g = dml.group_base_case_predictions(&data, &column, &cases)?;
                (DecisionRule::GroupBaseCase { column, cases }, Some(g))
            }
        };
        if args.relative && alt.is_some() {
            return Err(Error::Input("decision rules compare absolute predictions; drop --relative".into()));
        }
        let (unaware, group) = match &decision {
            DecisionRule::MaxFloor => (alt.as_deref(), None),
            _ => (None, alt.as_deref()),
        };
        let output = apply_decision_rule(&decision, &fair, unaware, group, !args.lower_is_better)?;
        if let Some(a) = &alt {
            let diag = rule_diagnostics(&fair, a, &output);
            log::info!(
                "rule took the alternative on {:.1}% of rows",
                100.0 * diag.share_from_alternative
            );
            details.insert("rule_diagnostics".into(), serde_json::to_value(diag)?);
        }
        output
    };

    let ids = data.schema().names_with_role(ColumnRole::Identifier);
    let id_values: Vec<Vec<String>> = ids.iter().map(|c| data.labels(c)).collect::<Result<_>>()?;
    let mut header: Vec<&str> = ids.iter().map(String::as_str).collect();
    header.extend(["row", "prediction"]);
    let rows: Vec<Vec<String>> = preds
        .iter()
        .enumerate()
        .map(|(r, p)| {
            let mut row: Vec<String> = id_values.iter().map(|v| v[r].clone()).collect();
            row.push(r.to_string());
            row.push(f(*p));
            row
        })
        .collect();
    details.insert("rows".into(), preds.len().into());
    details.insert("offset".into(), dml.offset.into());

    let mut outputs = Outputs::default();
    outputs.add(&out, table_bytes(&header, &rows));
    let inputs: [&Path; 2] = [&model_path, &data_path];
    outputs.commit(
        "predict",
        resolved,
        serde_json::Value::Object(details),
        &inputs,
        &config::manifest_path(&flags.manifest, &out),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_bases_parse() {
        let g = parse_group_bases(&["white:race=white,gender=male".into(), "black:race=black".into()]).unwrap();
        assert_eq!(g["white"].to_string(), "gender=male,race=white");
        assert!(parse_group_bases(&["nocolon".into()]).is_err());
        assert!(parse_group_bases(&["a:x=1".into(), "a:x=2".into()]).is_err());
    }
}
