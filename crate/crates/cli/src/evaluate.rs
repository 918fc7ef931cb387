use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use dmlfair::fairmetrics::{
    bootstrap_ci, cf_error, equal_width_edges, group_keys, group_stats, histogram, mean, sample_sd, GroupStats,
    Histogram, Interval, Statistic, Subgroup,
};
use dmlfair::pipeline::BaseCase;
use dmlfair::seed::derive;
use dmlfair::simlab::{counterfactual_copy, read_latent_csv};
use dmlfair::tabular::Dataset;
use dmlfair::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, Outputs};
use crate::simulate::{resolve_sim_config, RatingFormArg};
use crate::svg;
use crate::util::{f, load_bundle, load_scoring_data, same_features, slug, table_bytes};

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateArgs {
    /// JSON file of options (keys are flag names with `_`), or a manifest to replay.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: <report>.manifest.json).
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,

    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Simulated rows to evaluate on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Latent draws matching --data row for row.
    #[arg(long)]
    pub latent: Option<PathBuf>,
    /// Simulation parameters used to generate the data [default: built-in].
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub rating_form: Option<RatingFormArg>,
    /// Sensitive profile of the counterfactual copies [default: gender=male,race=white].
    #[arg(long)]
    pub cf_target: Option<String>,
    /// Rows whose counterfactual error is summarized; repeatable. Syntax:
    /// `col==v` or `col!=v`, joined by `&` (binds tighter) and `|`, with
    /// parentheses, e.g. `race!=white|gender!=male`. `all` selects every row.
    #[arg(long)]
    pub subgroup: Vec<String>,
    /// Also evaluate the unaware baseline.
    #[arg(long)]
    pub compare_unaware: bool,
    /// Also evaluate the trade-off model.
    #[arg(long)]
    pub compare_regularized: bool,
    /// Groupings for prediction means, comma separated; join columns with `*`
    /// for interaction cells (e.g. `gender*race`) [default: each sensitive column].
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
    /// Bootstrap resamples for intervals on cf-error mean and sd (at least 100).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Seed for bootstrap resampling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for tidy `group_stats.csv` and `cf_errors.csv`.
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// Directory for histogram CSVs and SVGs.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Write histogram CSVs only.
    #[arg(long)]
    pub no_svg: bool,
    /// Histogram bins [default: 30].
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Serialize)]
struct CfSummary {
    subgroup: String,
    count: usize,
    mean: f64,
    sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_ci: Option<Interval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sd_ci: Option<Interval>,
}

#[derive(Debug, Serialize)]
struct ModelReport {
    model: String,
    prediction_mean: f64,
    prediction_sd: f64,
    cf_errors: Vec<CfSummary>,
    groups: BTreeMap<String, Vec<GroupStats>>,
}

#[derive(Debug, Serialize)]
struct Report {
    rows: usize,
    cf_target: String,
    models: Vec<ModelReport>,
}

struct Scored {
    name: &'static str,
    factual: Vec<f64>,
    counterfactual: Vec<f64>,
}

fn cf_target(text: &Option<String>) -> Result<(String, String)> {
    let base = BaseCase::parse(text.as_deref().unwrap_or("gender=male,race=white"))?;
    let v = base.values();
    if v.len() != 2 {
        return Err(Error::Input("--cf-target sets exactly gender and race".into()));
    }
    let get = |k: &str| {
        v.get(k)
            .cloned()
            .ok_or_else(|| Error::Input(format!("--cf-target must set `{k}`")))
    };
    Ok((get("gender")?, get("race")?))
}

fn mask_for(expr: &str, data: &Dataset) -> Result<Vec<bool>> {
    if expr.trim() == "all" {
        return Ok(vec![true; data.n_rows()]);
    }
    Subgroup::parse(expr)?.mask(data)
}

fn shared_edges(series: &[&[f64]], bins: usize) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in series.iter().flat_map(|s| s.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    equal_width_edges(lo, hi, bins)
}

fn hist_rows(prefix: &[String], h: &Histogram, rows: &mut Vec<Vec<String>>) {
    for (b, c) in h.counts.iter().enumerate() {
        let mut row = prefix.to_vec();
        row.extend([f(h.edges[b]), f(h.edges[b + 1]), c.to_string()]);
        rows.push(row);
    }
}

pub fn run(flags: &EvaluateArgs) -> Result<()> {
    let (args, resolved) = config::resolve(flags, flags.config.as_deref(), "evaluate")?;
    let model_path = config::required(&args.model, "model")?;
    let data_path = config::required(&args.data, "data")?;
    let latent_path = config::required(&args.latent, "latent")?;
    let report_path = config::required(&args.report, "report")?;
    let bins = args.bins.unwrap_or(30);
    if bins == 0 {
        return Err(Error::Input("--bins must be at least 1".into()));
    }
    let mut sim = resolve_sim_config(&args.sim_config)?;
    if let Some(r) = args.rating_form {
        sim.rating_form = r.into();
    }
    let (target_gender, target_race) = cf_target(&args.cf_target)?;

    let bundle = load_bundle(&model_path)?;
    let data = load_scoring_data(&data_path, &bundle.dml)?;
    let latents = read_latent_csv(&latent_path, &sim)?;
    same_features(&data, &latents.to_dataset()?)?;
    let cf = counterfactual_copy(&latents, &target_gender, &target_race)?.conform_to(data.schema())?;

    let mut scored = vec![Scored {
        name: "dml_fair",
        factual: bundle.dml.predict(&data, false)?,
        counterfactual: bundle.dml.predict(&cf, false)?,
    }];
    if args.compare_unaware {
        let u = bundle
            .unaware
            .as_ref()
            .ok_or_else(|| Error::Input("model file holds no unaware model".into()))?;
        scored.push(Scored {
            name: "unaware",
            factual: u.predict(&data)?,
            counterfactual: u.predict(&cf)?,
        });
    }
    if args.compare_regularized {
        let r = bundle
            .regularized
            .as_ref()
            .ok_or_else(|| Error::Input("model file holds no trade-off model".into()))?;
        scored.push(Scored {
            name: "regularized",
            factual: r.predict(&data)?,
            counterfactual: r.predict(&cf)?,
        });
    }

    let subgroups = if args.subgroup.is_empty() {
        vec!["all".to_string()]
    } else {
        args.subgroup.clone()
    };
    let masks: Vec<Vec<bool>> = subgroups.iter().map(|s| mask_for(s, &data)).collect::<Result<_>>()?;
    let groupings: Vec<Vec<String>> = if args.groups.is_empty() {
        bundle.dml.sensitive.iter().map(|s| vec![s.clone()]).collect()
    } else {
        args.groups
            .iter()
            .map(|g| g.split('*').map(|c| c.trim().to_string()).collect())
            .collect()
    };
    let group_labels: Vec<(String, Vec<String>)> = groupings
        .iter()
        .map(|cols| Ok((cols.join("*"), group_keys(&data, cols)?)))
        .collect::<Result<_>>()?;

    let seed = args.seed.unwrap_or(0);
    let mut errors: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut models = Vec::new();
    for (mi, s) in scored.iter().enumerate() {
        let mut summaries = Vec::new();
        let mut model_errors = Vec::new();
        for (si, (name, mask)) in subgroups.iter().zip(&masks).enumerate() {
            let rep = cf_error(&s.factual, &s.counterfactual, mask, name)?;
            let ci = |stat: Statistic, k: u64| -> Result<Option<Interval>> {
                args.bootstrap
                    .map(|b| {
                        bootstrap_ci(&rep.errors, |v| stat.apply(v), b, derive(seed, &[mi as u64, si as u64, k]))
                    })
                    .transpose()
            };
            summaries.push(CfSummary {
                subgroup: name.clone(),
                count: rep.count,
                mean: rep.mean,
                sd: rep.sd,
                mean_ci: ci(Statistic::Mean, 0)?,
                sd_ci: ci(Statistic::Sd, 1)?,
            });
            model_errors.push(rep.errors);
        }
        let mut groups = BTreeMap::new();
        for (name, labels) in &group_labels {
            groups.insert(name.clone(), group_stats(&s.factual, labels)?);
        }
        models.push(ModelReport {
            model: s.name.to_string(),
            prediction_mean: mean(&s.factual),
            prediction_sd: sample_sd(&s.factual),
            cf_errors: summaries,
            groups,
        });
        errors.push(model_errors);
    }
    for m in &models {
        for c in &m.cf_errors {
            log::info!("{} [{}]: cf error mean {:.3}, sd {:.3}, n {}", m.model, c.subgroup, c.mean, c.sd, c.count);
        }
    }

    let mut outputs = Outputs::default();
    if let Some(dir) = &args.tables {
        let mut rows = Vec::new();
        for m in &models {
            for (grouping, stats) in &m.groups {
                for g in stats {
                    rows.push(vec![
                        m.model.clone(),
                        grouping.clone(),
                        g.group.clone(),
                        g.count.to_string(),
                        f(g.mean),
                        f(g.half_width),
                        f(g.lower()),
                        f(g.upper()),
                    ]);
                }
            }
        }
        outputs.add(
            dir.join("group_stats.csv"),
            table_bytes(
                &["model", "grouping", "group", "count", "mean", "half_width", "lower", "upper"],
                &rows,
            ),
        );
        let opt = |i: &Option<Interval>, lower: bool| {
            i.map(|i| f(if lower { i.lower } else { i.upper })).unwrap_or_default()
        };
        let rows: Vec<Vec<String>> = models
            .iter()
            .flat_map(|m| {
                m.cf_errors.iter().map(|c| {
                    vec![
                        m.model.clone(),
                        c.subgroup.clone(),
                        c.count.to_string(),
                        f(c.mean),
                        f(c.sd),
                        opt(&c.mean_ci, true),
                        opt(&c.mean_ci, false),
                        opt(&c.sd_ci, true),
                        opt(&c.sd_ci, false),
                    ]
                })
            })
            .collect();
        outputs.add(
            dir.join("cf_errors.csv"),
            table_bytes(
                &["model", "subgroup", "count", "mean", "sd", "mean_lower", "mean_upper", "sd_lower", "sd_upper"],
                &rows,
            ),
        );
    }

    if let Some(dir) = &args.plots {
        let mut rows = Vec::new();
        for (si, name) in subgroups.iter().enumerate() {
            let series: Vec<&[f64]> = errors.iter().map(|m| m[si].as_slice()).collect();
            let edges = shared_edges(&series, bins);
            let mut labelled = Vec::new();
            for (s, e) in scored.iter().zip(&series) {
                let h = histogram(e, &edges)?;
                hist_rows(&[name.clone(), s.name.to_string()], &h, &mut rows);
                labelled.push((s.name.to_string(), h));
            }
            if !args.no_svg {
                let title = format!("Counterfactual error: {name}");
                outputs.add(
                    dir.join(format!("cf_error_{}.svg", slug(name))),
                    svg::histograms(&title, &labelled).into_bytes(),
                );
            }
        }
        outputs.add(
            dir.join("cf_error_hist.csv"),
            table_bytes(&["subgroup", "model", "bin_lower", "bin_upper", "count"], &rows),
        );

        let mut rows = Vec::new();
        for s in &scored {
            let edges = shared_edges(&[&s.factual], bins);
            for (grouping, labels) in &group_labels {
                let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                for (p, g) in s.factual.iter().zip(labels) {
                    by.entry(g.as_str()).or_default().push(*p);
                }
                let mut labelled = Vec::new();
                for (g, v) in by {
                    let h = histogram(&v, &edges)?;
                    hist_rows(&[s.name.to_string(), grouping.clone(), g.to_string()], &h, &mut rows);
                    labelled.push((g.to_string(), h));
                }
                if !args.no_svg {
                    let title = format!("{} predictions by {grouping}", s.name);
                    outputs.add(
                        dir.join(format!("predictions_{}_{}.svg", s.name, slug(grouping))),
                        svg::histograms(&title, &labelled).into_bytes(),
                    );
                }
            }
        }
        outputs.add(
            dir.join("prediction_hist.csv"),
            table_bytes(&["model", "grouping", "group", "bin_lower", "bin_upper", "count"], &rows),
        );
    }

    let report = Report {
        rows: data.n_rows(),
        cf_target: format!("gender={target_gender},race={target_race}"),
        models,
    };
    outputs.add_json(&report_path, &report)?;
    let mut inputs: Vec<&Path> = vec![&model_path, &data_path, &latent_path];
    if let Some(p) = &args.sim_config {
        inputs.push(p);
    }
    outputs.commit(
        "evaluate",
        resolved,
        serde_json::json!({ "seed": seed }),
        &inputs,
        &config::manifest_path(&flags.manifest, &report_path),
    )
}
