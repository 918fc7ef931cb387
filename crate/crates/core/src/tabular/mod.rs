//! Role-tagged tabular data: schemas, CSV ingestion, categorical encoding and
//! fold assignment.
//!
//! A [`Dataset`] is immutable once built. Every cell has been validated against
//! the [`Schema`] at construction time, so downstream code never sees missing
//! values or out-of-level categories.

mod csv_io;
mod encode;
mod folds;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, Error, Result};

pub use csv_io::{infer_schema, load_csv, read_csv, read_headers, write_csv, write_csv_to, InferOptions};
pub use encode::{encode_columns, one_hot_encode, EncodedColumn, EncodedMatrix, EncodingMode};
pub use folds::{assign_folds, FoldAssignment};

/// What a column is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Sensitive,
    NonSensitive,
    Outcome,
    Identifier,
}

/// Value domain of a column.
///
/// Ordinal columns hold integers and are encoded as a single numeric column so
/// that tree learners keep their order. Declare the column categorical to
/// one-hot encode it instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Numeric,
    Ordinal,
    Categorical(Vec<String>),
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ValueKind,
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ValueKind, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }

    pub fn categorical<S: AsRef<str>>(name: &str, levels: &[S], role: ColumnRole) -> Self {
        let levels = levels.iter().map(|l| l.as_ref().to_string()).collect();
        Self::new(name, ValueKind::Categorical(levels), role)
    }
}

/// Ordered column declarations. Construct through [`Schema::new`], which
/// enforces unique names and well-formed level lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

#[derive(Deserialize)]
struct RawSchema {
    columns: Vec<ColumnSpec>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        Schema::new(raw.columns)
    }
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for col in &columns {
            if col.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
            }
            if let ValueKind::Categorical(levels) = &col.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` has no levels",
                        col.name
                    )));
                }
                let mut lv = HashSet::new();
                for l in levels {
                    if !lv.insert(l.as_str()) {
                        return Err(Error::Schema(format!(
                            "column `{}` lists level `{l}` twice",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(Self { columns })
    }

    /// Schema of the law-school admissions data. `ugpa` is the outcome,
    /// `gender` and `race1` are sensitive, every other column is a
    /// non-sensitive predictor. Use [`Schema::with_role`] to protect `age` too.
    pub fn law_school() -> Self {
        use ColumnRole::*;
        use ValueKind::*;
        Self::new(vec![
            ColumnSpec::new("age", Ordinal, NonSensitive),
            ColumnSpec::new("decile1", Ordinal, NonSensitive),
            ColumnSpec::new("decile3", Ordinal, NonSensitive),
            ColumnSpec::new("fam_inc", Ordinal, NonSensitive),
            ColumnSpec::new("lsat", Numeric, NonSensitive),
            ColumnSpec::new("ugpa", Numeric, Outcome),
            ColumnSpec::categorical("gender", &["female", "male"], Sensitive),
            ColumnSpec::categorical(
                "race1",
                &["asian", "black", "hisp", "other", "white"],
                Sensitive,
            ),
            ColumnSpec::new("cluster", Ordinal, NonSensitive),
            ColumnSpec::new("fulltime", Boolean, NonSensitive),
            ColumnSpec::new("bar", Boolean, NonSensitive),
        ])
        .expect("static schema is valid")
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSpec> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))
    }

    pub fn names_with_role(&self, role: ColumnRole) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Returns a copy with `name` reassigned to `role`.
    pub fn with_role(mut self, name: &str, role: ColumnRole) -> Result<Self> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))?;
        self.columns[idx].role = role;
        Ok(self)
    }

    /// Keeps only the listed columns, in schema order.
    pub fn subset(&self, names: &[String]) -> Result<Self> {
        for n in names {
            self.column(n)?;
        }
        Self::new(
            self.columns
                .iter()
                .filter(|c| names.contains(&c.name))
                .cloned()
                .collect(),
        )
    }

    pub fn without_role(&self, role: ColumnRole) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .filter(|c| c.role != role)
                .cloned()
                .collect(),
        }
    }

    /// Checks the role layout required for training: exactly one outcome, at
    /// least one sensitive and one non-sensitive column, numeric outcome.
    pub fn validate_for_training(&self) -> Result<()> {
        let outcomes: Vec<_> = self
            .columns
            .iter()
            .filter(|c| c.role == ColumnRole::Outcome)
            .collect();
        match outcomes.as_slice() {
            [] => return Err(Error::Schema("no outcome column declared".into())),
            [one] => {
                if matches!(one.kind, ValueKind::Categorical(_)) {
                    return Err(Error::Schema(format!(
                        "outcome `{}` must be numeric",
                        one.name
                    )));
                }
            }
            _ => {
                return Err(Error::Schema(format!(
                    "{} outcome columns declared, expected exactly one",
                    outcomes.len()
                )))
            }
        }
        if self.names_with_role(ColumnRole::Sensitive).is_empty() {
            return Err(Error::Schema("no sensitive column declared".into()));
        }
        if self.names_with_role(ColumnRole::NonSensitive).is_empty() {
            return Err(Error::Schema("no non-sensitive column declared".into()));
        }
        Ok(())
    }

    /// Hash of the sensitive and non-sensitive column declarations. Two
    /// datasets with equal fingerprints encode identically, whether or not
    /// they carry the outcome column.
    pub fn feature_fingerprint(&self) -> String {
        let features: Vec<&ColumnSpec> = self
            .columns
            .iter()
            .filter(|c| matches!(c.role, ColumnRole::Sensitive | ColumnRole::NonSensitive))
            .collect();
        let canonical = serde_json::to_vec(&features).expect("schema serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

/// Column storage. Categorical cells hold indices into the schema level list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
    Boolean(Vec<bool>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
            Column::Boolean(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
            Column::Boolean(v) => Column::Boolean(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// Numeric view: booleans become 0/1, categoricals their level index.
    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            Column::Numeric(v) => v.clone(),
            Column::Categorical(v) => v.iter().map(|&i| f64::from(i)).collect(),
            Column::Boolean(v) => v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn is_constant(&self) -> bool {
        fn all_eq<T: PartialEq>(v: &[T]) -> bool {
            v.windows(2).all(|w| w[0] == w[1])
        }
        match self {
            Column::Numeric(v) => all_eq(v),
            Column::Categorical(v) => all_eq(v),
            Column::Boolean(v) => all_eq(v),
        }
    }
}

/// Immutable, schema-validated table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    /// Assembles a dataset from columns given in schema order.
    pub fn new(schema: Schema, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.columns().iter().zip(&columns) {
            if col.len() != n_rows {
                return input(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                ));
            }
            match (&spec.kind, col) {
                (ValueKind::Numeric, Column::Numeric(v)) => {
                    if let Some(r) = v.iter().position(|x| !x.is_finite()) {
                        return Err(parse_err(r, &spec.name, "non-finite value"));
                    }
                }
                (ValueKind::Ordinal, Column::Numeric(v)) => {
                    if let Some(r) = v.iter().position(|x| !x.is_finite() || x.fract() != 0.0) {
                        return Err(parse_err(r, &spec.name, "ordinal value is not an integer"));
                    }
                }
                (ValueKind::Categorical(levels), Column::Categorical(v)) => {
                    if let Some(r) = v.iter().position(|&i| i as usize >= levels.len()) {
                        return Err(parse_err(r, &spec.name, "level index out of range"));
                    }
                }
                (ValueKind::Boolean, Column::Boolean(_)) => {}
                _ => {
                    return Err(Error::Schema(format!(
                        "storage for column `{}` does not match its declared kind",
                        spec.name
                    )))
                }
            }
        }
        Ok(Self {
            schema,
            columns,
            n_rows,
        })
    }

    /// Parses rows of text cells, one string per schema column in order.
    pub fn from_text_rows<S: AsRef<str>>(schema: Schema, rows: &[Vec<S>]) -> Result<Self> {
        let mut builders: Vec<ColumnBuilder> = schema
            .columns()
            .iter()
            .map(|c| ColumnBuilder::new(&c.kind, rows.len()))
            .collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return input(format!(
                    "row {} has {} cells, expected {}",
                    r + 1,
                    row.len(),
                    schema.len()
                ));
            }
            for ((b, spec), cell) in builders.iter_mut().zip(schema.columns()).zip(row) {
                b.push(spec, cell.as_ref(), r + 1)?;
            }
        }
        let columns = builders.into_iter().map(ColumnBuilder::finish).collect();
        Self::new(schema, columns)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))?;
        Ok(&self.columns[idx])
    }

    /// Numeric view of a column (see [`Column::as_f64`]).
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(name)?.as_f64())
    }

    /// Values of the single outcome column.
    pub fn outcome(&self) -> Result<Vec<f64>> {
        let names = self.schema.names_with_role(ColumnRole::Outcome);
        match names.as_slice() {
            [name] => self.numeric(name),
            _ => Err(Error::Schema(
                "dataset must have exactly one outcome column".into(),
            )),
        }
    }

    /// Text rendering of a cell, as it would be written to CSV.
    pub fn cell_text(&self, row: usize, col: usize) -> String {
        let spec = &self.schema.columns()[col];
        match (&self.columns[col], &spec.kind) {
            (Column::Numeric(v), _) => format_number(v[row]),
            (Column::Categorical(v), ValueKind::Categorical(levels)) => {
                levels[v[row] as usize].clone()
            }
            (Column::Boolean(v), _) => if v[row] { "TRUE" } else { "FALSE" }.to_string(),
            _ => unreachable!("storage validated against schema"),
        }
    }

    /// Per-row text labels of a column; for categoricals the level names.
    pub fn labels(&self, name: &str) -> Result<Vec<String>> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::Schema(format!("no column named `{name}`")))?;
        Ok((0..self.n_rows).map(|r| self.cell_text(r, idx)).collect())
    }

    pub fn is_constant(&self, name: &str) -> Result<bool> {
        Ok(self.column(name)?.is_constant())
    }

    /// Level counts of a categorical or boolean column, in level order.
    pub fn level_counts(&self, name: &str) -> Result<BTreeMap<String, usize>> {
        let mut counts = BTreeMap::new();
        for label in self.labels(name)? {
            *counts.entry(label).or_insert(0) += 1;
        }
        Ok(counts)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n_rows) {
            return input(format!("row {r} out of range for {} rows", self.n_rows));
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        })
    }

    /// Keeps the named columns (schema order) and drops the rest.
    pub fn project(&self, names: &[String]) -> Result<Dataset> {
        let schema = self.schema.subset(names)?;
        let columns = schema
            .columns()
            .iter()
            .map(|c| self.column(&c.name).cloned())
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(schema, columns)
    }

    /// Re-expresses this dataset under `target`: columns are matched by name
    /// and reordered, categorical levels are remapped by name, and numeric and
    /// ordinal storage convert into each other. Columns absent from `target`
    /// are dropped.
    pub fn conform_to(&self, target: &Schema) -> Result<Dataset> {
        let mut columns = Vec::with_capacity(target.len());
        for spec in target.columns() {
            let idx = self.schema.index_of(&spec.name).ok_or_else(|| {
                Error::Schema(format!("missing required column `{}`", spec.name))
            })?;
            let own = &self.schema.columns()[idx];
            let col = &self.columns[idx];
            let converted = match (&own.kind, &spec.kind, col) {
                (
                    ValueKind::Numeric | ValueKind::Ordinal,
                    ValueKind::Numeric | ValueKind::Ordinal,
                    Column::Numeric(v),
                ) => Column::Numeric(v.clone()),
                (ValueKind::Boolean, ValueKind::Boolean, Column::Boolean(v)) => {
                    Column::Boolean(v.clone())
                }
                (ValueKind::Categorical(from), ValueKind::Categorical(to), Column::Categorical(v)) => {
                    let map: Vec<Option<u32>> = from
                        .iter()
                        .map(|l| to.iter().position(|t| t == l).map(|p| p as u32))
                        .collect();
                    let mut out = Vec::with_capacity(v.len());
                    for (r, &i) in v.iter().enumerate() {
                        match map[i as usize] {
                            Some(j) => out.push(j),
                            None => {
                                return Err(parse_err(
                                    r,
                                    &spec.name,
                                    &format!("level `{}` not in declared levels", from[i as usize]),
                                ))
                            }
                        }
                    }
                    Column::Categorical(out)
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column `{}` cannot be converted from {:?} to {:?}",
                        spec.name, own.kind, spec.kind
                    )))
                }
            };
            columns.push(converted);
        }
        Dataset::new(target.clone(), columns)
    }
}

fn parse_err(row0: usize, column: &str, message: &str) -> Error {
    Error::Parse {
        row: row0 + 1,
        column: column.to_string(),
        message: message.to_string(),
    }
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn format_number(x: f64) -> String {
    format!("{x}")
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "TRUE" | "true" | "True" | "T" | "1" => Some(true),
        "FALSE" | "false" | "False" | "F" | "0" => Some(false),
        _ => None,
    }
}

fn is_missing(s: &str) -> bool {
    s.is_empty() || s == "NA" || s == "NaN"
}

/// Incremental column parser shared by CSV loading and text rows.
pub(crate) enum ColumnBuilder {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
    Boolean(Vec<bool>),
}

impl ColumnBuilder {
    pub(crate) fn new(kind: &ValueKind, cap: usize) -> Self {
        match kind {
            ValueKind::Numeric | ValueKind::Ordinal => Self::Numeric(Vec::with_capacity(cap)),
            ValueKind::Categorical(_) => Self::Categorical(Vec::with_capacity(cap)),
            ValueKind::Boolean => Self::Boolean(Vec::with_capacity(cap)),
        }
    }

    /// `row` is 1-based and only used for error messages.
    pub(crate) fn push(&mut self, spec: &ColumnSpec, raw: &str, row: usize) -> Result<()> {
        let cell = raw.trim();
        let err = |message: String| Error::Parse {
            row,
            column: spec.name.clone(),
            message,
        };
        if is_missing(cell) {
            return Err(err("missing value".into()));
        }
        match (self, &spec.kind) {
            (Self::Numeric(v), kind) => {
                let x: f64 = cell
                    .parse()
                    .map_err(|_| err(format!("`{cell}` is not a number")))?;
                if !x.is_finite() {
                    return Err(err(format!("`{cell}` is not finite")));
                }
                if *kind == ValueKind::Ordinal && x.fract() != 0.0 {
                    return Err(err(format!("`{cell}` is not an integer")));
                }
                v.push(x);
            }
            (Self::Categorical(v), ValueKind::Categorical(levels)) => {
                let idx = levels.iter().position(|l| l == cell).ok_or_else(|| {
                    err(format!(
                        "`{cell}` is not one of the declared levels {levels:?}"
                    ))
                })?;
                v.push(idx as u32);
            }
            (Self::Boolean(v), _) => {
                v.push(parse_bool(cell).ok_or_else(|| err(format!("`{cell}` is not a boolean")))?);
            }
            _ => unreachable!("builder created from the same kind"),
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> Column {
        match self {
            Self::Numeric(v) => Column::Numeric(v),
            Self::Categorical(v) => Column::Categorical(v),
            Self::Boolean(v) => Column::Boolean(v),
        }
    }
}
