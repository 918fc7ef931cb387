//! Hiring simulation with known counterfactuals.
//!
//! Latent ability, age, gender, race and three noise terms are drawn once and
//! stored. The observed variables are deterministic functions of those draws:
//!
//! ```text
//! assessment = 0.1 * ability * (male + 1.07) * (white + 1.07) + e_assessment
//! grade      = 0.1 * ability * (male + 1.29) + e_grade
//! rating     = 3.1 sin(age) + 3.7 male + 1.9 white + 7 male*white
//!              + 0.7 grade + 0.13 assessment + e_rating
//! ```
//!
//! Because the draws are kept, a counterfactual copy with different gender
//! and race is exact: every latent and noise value stays the same and only
//! the formulas are re-evaluated.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::tabular::{Column, ColumnRole, ColumnSpec, Dataset, Schema, ValueKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProb {
    pub level: String,
    pub p: f64,
}

fn levels(pairs: &[(&str, f64)]) -> Vec<LevelProb> {
    pairs
        .iter()
        .map(|&(level, p)| LevelProb {
            level: level.to_string(),
            p,
        })
        .collect()
}

/// How the rating equation groups its terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingForm {
    /// `3.1 sin(age) + 3.7 male + ...`, each term with its own coefficient.
    #[default]
    SeparateTerms,
    /// `3.1 (sin(age) + 3.7 male + ...)`, the whole systematic part scaled.
    ScaledSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub ability_mean: f64,
    pub ability_sd: f64,
    pub age_min: u32,
    pub age_max: u32,
    pub gender: Vec<LevelProb>,
    pub race: Vec<LevelProb>,
    pub sd_assessment: f64,
    pub sd_grade: f64,
    pub sd_rating: f64,
    #[serde(default)]
    pub rating_form: RatingForm,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 7000,
            seed: 1,
            ability_mean: 88.0,
            ability_sd: 4.0,
            age_min: 18,
            age_max: 25,
            gender: levels(&[("male", 0.7), ("female", 0.275), ("nonbinary", 0.025)]),
            race: levels(&[
                ("white", 0.637),
                ("hispanic", 0.163),
                ("black", 0.122),
                ("asian", 0.047),
                ("biracial", 0.019),
                ("native", 0.007),
                ("other", 0.004),
                ("hawaiian", 0.001),
            ]),
            sd_assessment: 1.09,
            sd_grade: 1.09,
            sd_rating: 10.0,
            rating_form: RatingForm::SeparateTerms,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return input("simulation needs n >= 1");
        }
        for (what, list, required) in [("gender", &self.gender, "male"), ("race", &self.race, "white")] {
            if list.is_empty() {
                return input(format!("{what} has no levels"));
            }
            let mut sum = 0.0;
            for (i, lp) in list.iter().enumerate() {
                if !(0.0..=1.0).contains(&lp.p) {
                    return input(format!("{what} probability for `{}` is outside [0, 1]", lp.level));
                }
                if list[..i].iter().any(|o| o.level == lp.level) {
                    return input(format!("{what} level `{}` listed twice", lp.level));
                }
                sum += lp.p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return input(format!("{what} probabilities sum to {sum}, not 1"));
            }
            if !list.iter().any(|lp| lp.level == required) {
                return input(format!("{what} levels must include `{required}`"));
            }
        }
        for (what, sd) in [
            ("ability", self.ability_sd),
            ("assessment error", self.sd_assessment),
            ("grade error", self.sd_grade),
            ("rating error", self.sd_rating),
        ] {
            if !(sd > 0.0 && sd.is_finite()) {
                return input(format!("{what} sd must be positive, got {sd}"));
            }
        }
        if !self.ability_mean.is_finite() {
            return input("ability mean must be finite");
        }
        if self.age_min > self.age_max {
            return input("age_min exceeds age_max");
        }
        Ok(())
    }

    fn sorted_levels(list: &[LevelProb]) -> Vec<String> {
        let mut l: Vec<String> = list.iter().map(|lp| lp.level.clone()).collect();
        l.sort();
        l
    }

    /// Schema of the generated data. Level lists are sorted so that they
    /// coincide with what schema inference derives from the CSV output.
    pub fn schema(&self) -> Schema {
        use ColumnRole::*;
        Schema::new(vec![
            ColumnSpec::new("age", ValueKind::Ordinal, Sensitive),
            ColumnSpec::new("gender", ValueKind::Categorical(Self::sorted_levels(&self.gender)), Sensitive),
            ColumnSpec::new("race", ValueKind::Categorical(Self::sorted_levels(&self.race)), Sensitive),
            ColumnSpec::new("assessment", ValueKind::Numeric, NonSensitive),
            ColumnSpec::new("grade", ValueKind::Numeric, NonSensitive),
            ColumnSpec::new("rating", ValueKind::Numeric, Outcome),
        ])
        .expect("simulation schema is valid")
    }
}

/// Everything drawn at random for one simulated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub ability: f64,
    pub age: u32,
    pub gender: String,
    pub race: String,
    pub eps_assessment: f64,
    pub eps_grade: f64,
    pub eps_rating: f64,
}

/// Observed variables computed from a [`LatentRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub assessment: f64,
    pub grade: f64,
    pub rating: f64,
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn assessment_mean(ability: f64, male: bool, white: bool) -> f64 {
    0.1 * ability * (indicator(male) + 1.07) * (indicator(white) + 1.07)
}

pub fn grade_mean(ability: f64, male: bool) -> f64 {
    0.1 * ability * (indicator(male) + 1.29)
}

/// Systematic part of the rating given the observed grade and assessment.
pub fn rating_mean(age: u32, male: bool, white: bool, grade: f64, assessment: f64, form: RatingForm) -> f64 {
    let (m, w) = (indicator(male), indicator(white));
    let age = f64::from(age);
    match form {
        RatingForm::SeparateTerms => {
            3.1 * age.sin() + 3.7 * m + 1.9 * w + 7.0 * m * w + 0.7 * grade + 0.13 * assessment
        }
        RatingForm::ScaledSum => {
            3.1 * (age.sin() + 3.7 * m + 1.9 * w + 7.0 * m * w + 0.7 * grade + 0.13 * assessment)
        }
    }
}

impl LatentRecord {
    pub fn evaluate(&self, form: RatingForm) -> SimRecord {
        let male = self.gender == "male";
        let white = self.race == "white";
        let assessment = assessment_mean(self.ability, male, white) + self.eps_assessment;
        let grade = grade_mean(self.ability, male) + self.eps_grade;
        let rating = rating_mean(self.age, male, white, grade, assessment, form) + self.eps_rating;
        SimRecord {
            assessment,
            grade,
            rating,
        }
    }
}

/// The stored draws for a whole simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentTable {
    pub config: SimConfig,
    pub records: Vec<LatentRecord>,
}

// Stream ids; one independent PRNG stream per drawn column.
const STREAM_ABILITY: u64 = 0;
const STREAM_AGE: u64 = 1;
const STREAM_GENDER: u64 = 2;
const STREAM_RACE: u64 = 3;
const STREAM_EPS_ASSESSMENT: u64 = 4;
const STREAM_EPS_GRADE: u64 = 5;
const STREAM_EPS_RATING: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal_draws(seed: u64, id: u64, mean: f64, sd: f64, n: usize) -> Vec<f64> {
    let dist = Normal::new(mean, sd).expect("validated sd");
    let mut rng = stream(seed, id);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

fn categorical_draws(seed: u64, id: u64, list: &[LevelProb], n: usize) -> Result<Vec<String>> {
    let dist = WeightedIndex::new(list.iter().map(|lp| lp.p))
        .map_err(|e| Error::Input(format!("bad level probabilities: {e}")))?;
    let mut rng = stream(seed, id);
    Ok((0..n).map(|_| list[dist.sample(&mut rng)].level.clone()).collect())
}

/// Draws `config.n` people and computes their observed variables.
pub fn generate(config: &SimConfig) -> Result<(Dataset, LatentTable)> {
    config.validate()?;
    let n = config.n;
    let seed = config.seed;
    let ability = normal_draws(seed, STREAM_ABILITY, config.ability_mean, config.ability_sd, n);
    let mut age_rng = stream(seed, STREAM_AGE);
    let ages: Vec<u32> = (0..n)
        .map(|_| age_rng.random_range(config.age_min..=config.age_max))
        .collect();
    let genders = categorical_draws(seed, STREAM_GENDER, &config.gender, n)?;
    let races = categorical_draws(seed, STREAM_RACE, &config.race, n)?;
    let eps_a = normal_draws(seed, STREAM_EPS_ASSESSMENT, 0.0, config.sd_assessment, n);
    let eps_g = normal_draws(seed, STREAM_EPS_GRADE, 0.0, config.sd_grade, n);
    let eps_r = normal_draws(seed, STREAM_EPS_RATING, 0.0, config.sd_rating, n);

    let records = (0..n)
        .map(|i| LatentRecord {
            ability: ability[i],
            age: ages[i],
            gender: genders[i].clone(),
            race: races[i].clone(),
            eps_assessment: eps_a[i],
            eps_grade: eps_g[i],
            eps_rating: eps_r[i],
        })
        .collect();
    let table = LatentTable {
        config: config.clone(),
        records,
    };
    Ok((table.to_dataset()?, table))
}

impl LatentTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Recomputes every observed variable from the stored draws.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let schema = self.config.schema();
        let level_index = |col: &str, level: &str| -> Result<u32> {
            match &schema.column(col)?.kind {
                ValueKind::Categorical(levels) => levels
                    .iter()
                    .position(|l| l == level)
                    .map(|p| p as u32)
                    .ok_or_else(|| Error::Input(format!("unknown {col} level `{level}`"))),
                _ => unreachable!(),
            }
        };
        let n = self.records.len();
        let mut age = Vec::with_capacity(n);
        let mut gender = Vec::with_capacity(n);
        let mut race = Vec::with_capacity(n);
        let mut assessment = Vec::with_capacity(n);
        let mut grade = Vec::with_capacity(n);
        let mut rating = Vec::with_capacity(n);
        for rec in &self.records {
            let obs = rec.evaluate(self.config.rating_form);
            age.push(f64::from(rec.age));
            gender.push(level_index("gender", &rec.gender)?);
            race.push(level_index("race", &rec.race)?);
            assessment.push(obs.assessment);
            grade.push(obs.grade);
            rating.push(obs.rating);
        }
        Dataset::new(
            schema,
            vec![
                Column::Numeric(age),
                Column::Categorical(gender),
                Column::Categorical(race),
                Column::Numeric(assessment),
                Column::Numeric(grade),
                Column::Numeric(rating),
            ],
        )
    }

    /// Copy with per-row gender and race replaced; all other draws kept.
    pub fn with_sensitive(&self, genders: &[String], races: &[String]) -> Result<LatentTable> {
        if genders.len() != self.len() || races.len() != self.len() {
            return input("replacement vectors must match the table length");
        }
        let check = |list: &[LevelProb], v: &str, what: &str| {
            if list.iter().any(|lp| lp.level == v) {
                Ok(())
            } else {
                input(format!("unknown {what} level `{v}`"))
            }
        };
        let mut out = self.clone();
        for ((rec, g), r) in out.records.iter_mut().zip(genders).zip(races) {
            check(&self.config.gender, g, "gender")?;
            check(&self.config.race, r, "race")?;
            rec.gender = g.clone();
            rec.race = r.clone();
        }
        Ok(out)
    }

    /// Copy in which every row has the given gender and race.
    pub fn manipulated(&self, gender: &str, race: &str) -> Result<LatentTable> {
        let n = self.len();
        self.with_sensitive(&vec![gender.to_string(); n], &vec![race.to_string(); n])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<LatentTable> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.len()) {
            return input(format!("row {r} out of range"));
        }
        Ok(LatentTable {
            config: self.config.clone(),
            records: rows.iter().map(|&r| self.records[r].clone()).collect(),
        })
    }

    pub fn genders(&self) -> Vec<String> {
        self.records.iter().map(|r| r.gender.clone()).collect()
    }

    pub fn races(&self) -> Vec<String> {
        self.records.iter().map(|r| r.race.clone()).collect()
    }
}

/// Regenerates the data with every row's gender and race set to the targets,
/// holding ability, age and all noise draws fixed.
pub fn counterfactual_copy(latents: &LatentTable, target_gender: &str, target_race: &str) -> Result<Dataset> {
    latents.manipulated(target_gender, target_race)?.to_dataset()
}

/// Splits generated data into a training prefix of `n_train` rows and a test
/// remainder, or a random partition of the same sizes when `shuffle_seed` is
/// given.
pub fn split_train_test(
    data: &Dataset,
    latents: &LatentTable,
    n_train: usize,
    shuffle_seed: Option<u64>,
) -> Result<((Dataset, LatentTable), (Dataset, LatentTable))> {
    let n = data.n_rows();
    if latents.len() != n {
        return input("dataset and latent table differ in length");
    }
    if n_train == 0 || n_train >= n {
        return input(format!("training size {n_train} must lie in [1, {n})"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        use rand::seq::SliceRandom;
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order[..n_train].sort_unstable();
        order[n_train..].sort_unstable();
    }
    let (tr, te) = order.split_at(n_train);
    Ok((
        (data.select_rows(tr)?, latents.select_rows(tr)?),
        (data.select_rows(te)?, latents.select_rows(te)?),
    ))
}

const LATENT_HEADER: [&str; 8] = [
    "row",
    "ability",
    "age",
    "gender",
    "race",
    "eps_assessment",
    "eps_grade",
    "eps_rating",
];

/// Writes the draws as CSV keyed by row index, atomically.
pub fn write_latent_csv(latents: &LatentTable, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, &latent_csv_bytes(latents)?)
}

/// The CSV text written by [`write_latent_csv`].
pub fn latent_csv_bytes(latents: &LatentTable) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(LATENT_HEADER)?;
    for (i, r) in latents.records.iter().enumerate() {
        wtr.write_record([
            i.to_string(),
            r.ability.to_string(),
            r.age.to_string(),
            r.gender.clone(),
            r.race.clone(),
            r.eps_assessment.to_string(),
            r.eps_grade.to_string(),
            r.eps_rating.to_string(),
        ])?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Reads draws written by [`write_latent_csv`]. `config` supplies the level
/// lists and rating form; rows are ordered by their `row` key.
pub fn read_latent_csv(path: impl AsRef<Path>, config: &SimConfig) -> Result<LatentTable> {
    config.validate()?;
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers != LATENT_HEADER {
        return Err(Error::Schema(format!(
            "latent file header {headers:?} does not match {LATENT_HEADER:?}"
        )));
    }
    let mut rows: Vec<(usize, LatentRecord)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: LATENT_HEADER[c].into(),
                message: format!("`{}` is not a number", &rec[c]),
            })
        };
        let int = |c: usize| -> Result<u64> {
            rec[c].trim().parse::<u64>().map_err(|_| Error::Parse {
                row,
                column: LATENT_HEADER[c].into(),
                message: format!("`{}` is not a non-negative integer", &rec[c]),
            })
        };
        rows.push((
            int(0)? as usize,
            LatentRecord {
                ability: num(1)?,
                age: int(2)? as u32,
                gender: rec[3].trim().to_string(),
                race: rec[4].trim().to_string(),
                eps_assessment: num(5)?,
                eps_grade: num(6)?,
                eps_rating: num(7)?,
            },
        ));
    }
    if rows.is_empty() {
        return input("latent file has no rows");
    }
    rows.sort_by_key(|(k, _)| *k);
    let table = LatentTable {
        config: config.clone(),
        records: rows.into_iter().map(|(_, r)| r).collect(),
    };
    let (g, r) = (table.genders(), table.races());
    table.with_sensitive(&g, &r)
}
