use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use super::{is_missing, parse_bool, ColumnBuilder, ColumnRole, ColumnSpec, Dataset, Schema, ValueKind};
use crate::error::{input, Error, Result};

/// Loads a CSV file with a header row, validating every cell against `schema`.
///
/// Columns may appear in any order in the file but the set of header names
/// must equal the set of schema columns.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return input("empty CSV file");
    }

    let mut positions = Vec::with_capacity(schema.len());
    for spec in schema.columns() {
        match headers.iter().position(|h| *h == spec.name) {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::Schema(format!(
                    "missing required column `{}`",
                    spec.name
                )))
            }
        }
    }
    for (i, h) in headers.iter().enumerate() {
        if schema.index_of(h).is_none() {
            return Err(Error::Schema(format!("unexpected column `{h}`")));
        }
        if headers[..i].contains(h) {
            return Err(Error::Schema(format!("column `{h}` appears twice")));
        }
    }

    let mut builders: Vec<ColumnBuilder> = schema
        .columns()
        .iter()
        .map(|c| ColumnBuilder::new(&c.kind, 0))
        .collect();
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record?;
        n += 1;
        for ((b, spec), &pos) in builders.iter_mut().zip(schema.columns()).zip(&positions) {
            let cell = record.get(pos).ok_or_else(|| Error::Parse {
                row: n,
                column: spec.name.clone(),
                message: "row is too short".into(),
            })?;
            b.push(spec, cell, n)?;
        }
    }
    if n == 0 {
        return input("CSV file has a header but no data rows");
    }
    Dataset::new(
        schema.clone(),
        builders.into_iter().map(ColumnBuilder::finish).collect(),
    )
}

/// Header names of a CSV file, trimmed.
pub fn read_headers(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Writes the dataset as CSV (schema column order), atomically.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv_to(data, &mut buf)?;
    crate::io::write_atomic(path, &buf)
}

pub fn write_csv_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(data.schema().columns().iter().map(|c| c.name.as_str()))?;
    for r in 0..data.n_rows() {
        wtr.write_record((0..data.schema().len()).map(|c| data.cell_text(r, c)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Role assignments for [`infer_schema`]. Columns not named here become
/// non-sensitive predictors.
#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    pub sensitive: Vec<String>,
    pub outcome: String,
    pub identifiers: Vec<String>,
    /// Force these columns to be categorical even when they look numeric.
    pub categorical: Vec<String>,
}

/// Guesses a schema from a CSV file: boolean if every cell is TRUE/FALSE,
/// ordinal if every cell is an integer, numeric if every cell is a number,
/// categorical (levels sorted) otherwise.
pub fn infer_schema(path: impl AsRef<Path>, opts: &InferOptions) -> Result<Schema> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return input("empty CSV file");
    }
    for name in opts
        .sensitive
        .iter()
        .chain(&opts.identifiers)
        .chain(&opts.categorical)
        .chain(std::iter::once(&opts.outcome))
    {
        if !headers.contains(name) {
            return Err(Error::Schema(format!("missing required column `{name}`")));
        }
    }

    struct Acc {
        boolean: bool,
        integer: bool,
        number: bool,
        levels: BTreeSet<String>,
    }
    let mut acc: Vec<Acc> = headers
        .iter()
        .map(|_| Acc {
            boolean: true,
            integer: true,
            number: true,
            levels: BTreeSet::new(),
        })
        .collect();
    let mut n = 0;
    for record in rdr.records() {
        let record = record?;
        n += 1;
        for (c, a) in acc.iter_mut().enumerate() {
            let cell = record.get(c).unwrap_or("").trim();
            if is_missing(cell) {
                return Err(Error::Parse {
                    row: n,
                    column: headers[c].clone(),
                    message: "missing value".into(),
                });
            }
            a.boolean &= parse_bool(cell).is_some() && cell != "0" && cell != "1";
            match cell.parse::<f64>() {
                Ok(x) if x.is_finite() => a.integer &= x.fract() == 0.0,
                _ => {
                    a.number = false;
                    a.integer = false;
                }
            }
            if a.levels.len() <= 10_000 {
                a.levels.insert(cell.to_string());
            }
        }
    }
    if n == 0 {
        return input("CSV file has a header but no data rows");
    }

    let columns = headers
        .iter()
        .zip(acc)
        .map(|(name, a)| {
            let role = if *name == opts.outcome {
                ColumnRole::Outcome
            } else if opts.sensitive.contains(name) {
                ColumnRole::Sensitive
            } else if opts.identifiers.contains(name) {
                ColumnRole::Identifier
            } else {
                ColumnRole::NonSensitive
            };
            let kind = if opts.categorical.contains(name) || !(a.boolean || a.number) {
                ValueKind::Categorical(a.levels.into_iter().collect())
            } else if a.boolean {
                ValueKind::Boolean
            } else if a.integer {
                ValueKind::Ordinal
            } else {
                ValueKind::Numeric
            };
            ColumnSpec::new(name.clone(), kind, role)
        })
        .collect();
    Schema::new(columns)
}
