use std::path::{Path, PathBuf};

use clap::Args;
use dmlfair::fairmetrics::{adjustment_tree, default_tree_features, AdjustmentTree, Subgroup};
use dmlfair::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, Outputs};
use crate::util::{load_bundle, load_scoring_data};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainArgs {
    /// JSON file of options (keys are flag names with `_`), or a manifest to replay.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: <out>.manifest.json).
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,

    /// Model file trained with the unaware baseline.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Restrict to rows matching this expression (same syntax as `evaluate`).
    #[arg(long)]
    pub subgroup: Option<String>,
    /// Fit one tree per level of this column.
    #[arg(long)]
    pub by: Option<String>,
    /// [default: 6]
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// [default: 7]
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Columns the tree may split on [default: sensitive and non-sensitive columns].
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Tree JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the indented text rendering here (otherwise it goes to stdout).
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Serialize)]
struct Explained {
    level: String,
    rows: usize,
    tree: AdjustmentTree,
}

#[derive(Serialize)]
struct Output {
    delta: &'static str,
    subgroup: String,
    by: Option<String>,
    trees: Vec<Explained>,
}

pub fn run(flags: &ExplainArgs) -> Result<()> {
    let (args, resolved) = config::resolve(flags, flags.config.as_deref(), "explain")?;
    let model_path = config::required(&args.model, "model")?;
    let data_path = config::required(&args.data, "data")?;
    let out = config::required(&args.out, "out")?;
    let bundle = load_bundle(&model_path)?;
    let unaware = bundle
        .unaware
        .as_ref()
        .ok_or_else(|| Error::Input("explain needs the unaware model (train without --no-unaware)".into()))?;
    let data = load_scoring_data(&data_path, &bundle.dml)?;
    let fair = bundle.dml.predict(&data, false)?;
    let delta: Vec<f64> = unaware
        .predict(&data)?
        .iter()
        .zip(&fair)
        .map(|(u, d)| u - d)
        .collect();

    let subgroup = args.subgroup.clone().unwrap_or_else(|| "all".into());
    let base_mask = if subgroup.trim() == "all" {
        vec![true; data.n_rows()]
    } else {
        Subgroup::parse(&subgroup)?.mask(&data)?
    };
    let features = if args.features.is_empty() {
        default_tree_features(&data)
    } else {
        args.features.clone()
    };
    let (max_depth, min_leaf) = (args.max_depth.unwrap_or(6), args.min_leaf.unwrap_or(7));

    let cells: Vec<(String, Vec<bool>)> = match &args.by {
        None => vec![("all".into(), base_mask)],
        Some(col) => {
            let labels = data.labels(col)?;
            let mut levels = labels.clone();
            levels.sort();
            levels.dedup();
            levels
                .into_iter()
                .map(|l| {
                    let m = labels.iter().zip(&base_mask).map(|(x, &b)| b && *x == l).collect();
                    (l, m)
                })
                .collect()
        }
    };
    let mut trees = Vec::new();
    let mut text = String::new();
    for (level, mask) in cells {
        let rows = mask.iter().filter(|&&m| m).count();
        let tree = adjustment_tree(&data, &delta, &mask, max_depth, min_leaf, &features)?;
        text.push_str(&format!("# {level} ({rows} rows)\n{}\n", tree.render()));
        trees.push(Explained { level, rows, tree });
    }
    let output = Output {
        delta: "unaware - dml_fair",
        subgroup,
        by: args.by.clone(),
        trees,
    };

    let mut outputs = Outputs::default();
    outputs.add_json(&out, &output)?;
    if let Some(p) = &args.text {
        outputs.add(p, text.clone().into_bytes());
    }
    let inputs: [&Path; 2] = [&model_path, &data_path];
    outputs.commit(
        "explain",
        resolved,
        serde_json::Value::Null,
        &inputs,
        &config::manifest_path(&flags.manifest, &out),
    )?;
    if args.text.is_none() {
        print!("{text}");
    }
    Ok(())
}
