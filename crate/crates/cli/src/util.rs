//! Loading helpers shared by the subcommands.

use std::path::Path;

use dmlfair::pipeline::DmlFairModel;
use dmlfair::tabular::{load_csv, read_headers, ColumnRole, Dataset};
use dmlfair::{persist, Error, Result};

use crate::bundle::ModelBundle;

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    persist::load(path)
}

/// Loads rows to score under the model's schema. The outcome column may be
/// absent.
pub fn load_scoring_data(path: &Path, model: &DmlFairModel) -> Result<Dataset> {
    let headers = read_headers(path)?;
    let outcome = model.schema.names_with_role(ColumnRole::Outcome);
    let schema = if outcome.iter().all(|o| headers.contains(o)) {
        model.schema.clone()
    } else {
        model.schema.without_role(ColumnRole::Outcome)
    };
    load_csv(path, &schema)
}

/// Rows of the outcome-free projection, for comparing against regenerated data.
pub fn same_features(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.n_rows() != b.n_rows() {
        return Err(Error::Input(format!(
            "latent file has {} rows but the data has {}",
            b.n_rows(),
            a.n_rows()
        )));
    }
    for (c, spec) in a.schema().columns().iter().enumerate() {
        let Some(j) = b.schema().index_of(&spec.name) else {
            continue;
        };
        for r in 0..a.n_rows() {
            let (x, y) = (a.cell_text(r, c), b.cell_text(r, j));
            if x != y {
                return Err(Error::Input(format!(
                    "latent file does not reproduce the data: row {}, column `{}` is {x} in the data but {y} from the latents",
                    r + 1,
                    spec.name
                )));
            }
        }
    }
    Ok(())
}

pub fn csv_bytes(data: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    dmlfair::tabular::write_csv_to(data, &mut buf)?;
    Ok(buf)
}

/// Writes rows of already-formatted cells as CSV.
pub fn table_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| quote(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// File-name-safe form of a subgroup expression.
pub fn slug(text: &str) -> String {
    let s: String = text
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '_' => c,
            '!' => 'n',
            '=' => 'e',
            '&' => 'a',
            '|' => 'o',
            _ => '_',
        })
        .collect();
    if s.is_empty() {
        "all".into()
    } else {
        s
    }
}

pub fn f(x: f64) -> String {
    format!("{x}")
}
