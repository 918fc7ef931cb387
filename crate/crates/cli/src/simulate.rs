use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dmlfair::simlab::{generate, latent_csv_bytes, split_train_test, RatingForm, SimConfig};
use dmlfair::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, Outputs};
use crate::util::csv_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RatingFormArg {
    SeparateTerms,
    ScaledSum,
}

impl From<RatingFormArg> for RatingForm {
    fn from(r: RatingFormArg) -> Self {
        match r {
            RatingFormArg::SeparateTerms => RatingForm::SeparateTerms,
            RatingFormArg::ScaledSum => RatingForm::ScaledSum,
        }
    }
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// JSON file of options (keys are flag names with `_`), or a manifest to replay.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: <out>.manifest.json).
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,

    /// Simulation parameters as JSON; --n, --seed and --rating-form override it.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub rating_form: Option<RatingFormArg>,

    /// Observed data CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Latent draws CSV (ability, age, sensitive levels, noise terms).
    #[arg(long)]
    pub latent: Option<PathBuf>,
    /// Schema JSON describing the data columns and roles.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
    /// Also write `_train`/`_test` files with this many training rows.
    #[arg(long)]
    pub split: Option<usize>,
    /// Shuffle before splitting; without it the first rows are the training set.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

/// `dir/stem_suffix.ext` next to `path`.
pub fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

pub fn resolve_sim_config(path: &Option<PathBuf>) -> Result<SimConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Input(format!("simulation config {}: {e}", p.display())))
        }
        None => Ok(SimConfig::default()),
    }
}

pub fn run(flags: &SimulateArgs) -> Result<()> {
    let (args, resolved) = config::resolve(flags, flags.config.as_deref(), "simulate")?;
    let out = config::required(&args.out, "out")?;
    let mut sim = resolve_sim_config(&args.sim_config)?;
    if let Some(n) = args.n {
        sim.n = n;
    }
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    if let Some(r) = args.rating_form {
        sim.rating_form = r.into();
    }
    let (data, latents) = generate(&sim)?;
    log::info!("generated {} rows with seed {}", data.n_rows(), sim.seed);

    let mut outputs = Outputs::default();
    outputs.add(&out, csv_bytes(&data)?);
    if let Some(p) = &args.latent {
        outputs.add(p, latent_csv_bytes(&latents)?);
    }
    if let Some(p) = &args.schema_out {
        let mut s = sim.schema().to_json_pretty().into_bytes();
        s.push(b'\n');
        outputs.add(p, s);
    }
    if let Some(n_train) = args.split {
        let ((tr, tr_lat), (te, te_lat)) = split_train_test(&data, &latents, n_train, args.split_seed)?;
        outputs.add(suffixed(&out, "train"), csv_bytes(&tr)?);
        outputs.add(suffixed(&out, "test"), csv_bytes(&te)?);
        if let Some(p) = &args.latent {
            outputs.add(suffixed(p, "train"), latent_csv_bytes(&tr_lat)?);
            outputs.add(suffixed(p, "test"), latent_csv_bytes(&te_lat)?);
        }
    }
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = &args.sim_config {
        inputs.push(p);
    }
    let details = serde_json::json!({ "simulation": sim, "seed": sim.seed });
    outputs.commit(
        "simulate",
        resolved,
        details,
        &inputs,
        &config::manifest_path(&flags.manifest, &out),
    )
}
