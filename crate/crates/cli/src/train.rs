use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dmlfair::learners::{ForestSpec, LearnerSpec};
use dmlfair::pipeline::{train, train_regularized, train_unaware, BaseCase, RegularizedSpec, TrainConfig};
use dmlfair::seed::derive;
use dmlfair::tabular::{infer_schema, load_csv, ColumnRole, InferOptions, Schema};
use dmlfair::{persist, Result};
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;
use crate::config::{self, Outputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum LearnerKind {
    Linear,
    Ridge,
    Tree,
    Forest,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// JSON file of options (keys are flag names with `_`), or a manifest to replay.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: <model>.manifest.json).
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,

    /// Training CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Schema JSON; without it the schema is inferred from the CSV.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Sensitive columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sensitive: Vec<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    /// Columns carried along but never modelled.
    #[arg(long, value_delimiter = ',')]
    pub identifiers: Vec<String>,
    /// Treat these columns as categorical even if they look numeric.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,

    /// Final-stage learner [default: forest].
    #[arg(long, value_enum)]
    pub learner: Option<LearnerKind>,
    /// Nuisance learner [default: same as --learner].
    #[arg(long, value_enum)]
    pub nuisance_learner: Option<LearnerKind>,
    /// Trees per forest [default: 500].
    #[arg(long)]
    pub trees: Option<usize>,
    /// Features tried per forest split [default: ceil(p/3)].
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Minimum rows per leaf [default: 5].
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Depth limit for trees and forests [default: 10 for a single tree, none for forests].
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Ridge penalty [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Cross-fitting folds [default: 10].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Base-case profile, e.g. `age=18,gender=male,race=white`.
    #[arg(long)]
    pub base: Option<String>,
    /// Master seed; fold and forest seeds are derived from it [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Warn about sensitive levels with fewer training rows than this [default: 50].
    #[arg(long)]
    pub warn_small_groups: Option<usize>,

    /// Output model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Also fit the fairness/accuracy trade-off model with this weight in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Skip the fairness-through-unawareness baseline.
    #[arg(long)]
    pub no_unaware: bool,
}

impl TrainArgs {
    pub fn learner_spec(&self, kind: LearnerKind, seed: u64) -> LearnerSpec {
        let min_leaf = self.min_leaf.unwrap_or(5);
        match kind {
            LearnerKind::Linear => LearnerSpec::Linear,
            LearnerKind::Ridge => LearnerSpec::Ridge {
                alpha: self.alpha.unwrap_or(1.0),
            },
            LearnerKind::Tree => LearnerSpec::Tree {
                max_depth: self.max_depth.unwrap_or(10),
                min_leaf,
            },
            LearnerKind::Forest => LearnerSpec::Forest(ForestSpec {
                n_trees: self.trees.unwrap_or(500),
                mtry: self.mtry,
                min_leaf,
                max_depth: self.max_depth,
                seed,
                bootstrap: true,
            }),
        }
    }

    fn schema(&self, data: &Path) -> Result<Schema> {
        let mut schema = match &self.schema {
            Some(p) => Schema::from_json_file(p)?,
            None => {
                return infer_schema(
                    data,
                    &InferOptions {
                        sensitive: self.sensitive.clone(),
                        outcome: config::required(&self.outcome, "outcome")?,
                        identifiers: self.identifiers.clone(),
                        categorical: self.categorical.clone(),
                    },
                )
            }
        };
        for name in &self.sensitive {
            schema = schema.with_role(name, ColumnRole::Sensitive)?;
        }
        for name in &self.identifiers {
            schema = schema.with_role(name, ColumnRole::Identifier)?;
        }
        if let Some(o) = &self.outcome {
            schema = schema.with_role(o, ColumnRole::Outcome)?;
        }
        Ok(schema)
    }
}

pub fn run(flags: &TrainArgs) -> Result<()> {
    let (args, resolved) = config::resolve(flags, flags.config.as_deref(), "train")?;
    let data_path = config::required(&args.data, "data")?;
    let model_path = config::required(&args.model, "model")?;
    let base = BaseCase::parse(&config::required(&args.base, "base")?)?;
    let schema = args.schema(&data_path)?;
    let data = load_csv(&data_path, &schema)?;
    log::info!("loaded {} rows from {}", data.n_rows(), data_path.display());

    let seed = args.seed.unwrap_or(0);
    let final_kind = args.learner.unwrap_or(LearnerKind::Forest);
    let nuisance_kind = args.nuisance_learner.unwrap_or(final_kind);
    let final_spec = args.learner_spec(final_kind, derive(seed, &[2]));
    let mut cfg = TrainConfig::new(
        args.learner_spec(nuisance_kind, derive(seed, &[1])),
        final_spec.clone(),
        args.folds.unwrap_or(10),
        derive(seed, &[0]),
        base,
    );
    if let Some(t) = args.warn_small_groups {
        cfg.small_group_threshold = t;
    }

    let dml = train(&data, &cfg)?;
    let unaware = if args.no_unaware {
        None
    } else {
        Some(train_unaware(&data, &final_spec.with_seed(derive(seed, &[3])))?)
    };
    let regularized = match args.lambda {
        Some(lambda) => Some(train_regularized(
            &data,
            &RegularizedSpec {
                lambda,
                learner: final_spec,
            },
            &cfg,
        )?),
        None => None,
    };
    let details = serde_json::json!({
        "seed": seed,
        "rows": data.n_rows(),
        "base_case": dml.base_case.to_string(),
        "offset": dml.offset,
        "warnings": dml.warnings,
        "train_config": cfg,
    });
    let bundle = ModelBundle {
        dml,
        unaware,
        regularized,
    };
    let mut outputs = Outputs::default();
    outputs.add(&model_path, persist::to_bytes(&bundle)?);
    let mut inputs: Vec<&Path> = vec![&data_path];
    if let Some(s) = &args.schema {
        inputs.push(s);
    }
    outputs.commit(
        "train",
        resolved,
        details,
        &inputs,
        &config::manifest_path(&flags.manifest, &model_path),
    )
}
