use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Column, ColumnRole, Dataset, ValueKind};
use crate::error::{input, Result};
use crate::matrix::Matrix;

/// How categorical columns expand into indicator columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    /// One indicator per level; each group sums to 1.
    FullOneHot,
    /// Omits the first level, avoiding exact collinearity with an intercept.
    DropFirst,
}

/// Provenance of one source column inside an [`EncodedMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub source: String,
    pub start: usize,
    /// One label per encoded column, e.g. `race=white` or `lsat`.
    pub labels: Vec<String>,
}

impl EncodedColumn {
    pub fn width(&self) -> usize {
        self.labels.len()
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub matrix: Matrix,
    pub provenance: Vec<EncodedColumn>,
    pub mode: EncodingMode,
}

impl EncodedMatrix {
    pub fn labels(&self) -> Vec<String> {
        self.provenance
            .iter()
            .flat_map(|p| p.labels.iter().cloned())
            .collect()
    }

    pub fn width(&self) -> usize {
        self.matrix.n_cols()
    }
}

/// Encodes every column whose role is in `roles`, in schema order.
pub fn one_hot_encode(data: &Dataset, roles: &[ColumnRole], mode: EncodingMode) -> Result<EncodedMatrix> {
    let names: Vec<String> = data
        .schema()
        .columns()
        .iter()
        .filter(|c| roles.contains(&c.role))
        .map(|c| c.name.clone())
        .collect();
    encode_columns(data, &names, mode)
}

/// Encodes the named columns (in the order given). Numeric and ordinal
/// columns pass through, booleans become 0/1 and categoricals expand into
/// indicators in level order.
pub fn encode_columns(data: &Dataset, names: &[String], mode: EncodingMode) -> Result<EncodedMatrix> {
    if names.is_empty() {
        return input("no columns selected for encoding");
    }
    let n = data.n_rows();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut provenance = Vec::with_capacity(names.len());
    for name in names {
        let spec = data.schema().column(name)?;
        let start = cols.len();
        match (&spec.kind, data.column(name)?) {
            (ValueKind::Categorical(levels), Column::Categorical(idx)) => {
                let skip = usize::from(mode == EncodingMode::DropFirst);
                let mut labels = Vec::new();
                for (li, level) in levels.iter().enumerate().skip(skip) {
                    cols.push(
                        idx.iter()
                            .map(|&i| if i as usize == li { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    labels.push(format!("{name}={level}"));
                }
                provenance.push(EncodedColumn {
                    source: name.clone(),
                    start,
                    labels,
                });
            }
            (_, col) => {
                cols.push(col.as_f64());
                provenance.push(EncodedColumn {
                    source: name.clone(),
                    start,
                    labels: vec![name.clone()],
                });
            }
        }
    }
    Ok(EncodedMatrix {
        matrix: Matrix::from_columns(n, &cols)?,
        provenance,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{ColumnSpec, Schema};
    use proptest::prelude::*;

    fn race_data(values: &[&str]) -> Dataset {
        let schema = Schema::new(vec![
            ColumnSpec::categorical(
                "race",
                &["asian", "black", "hisp", "other", "white"],
                ColumnRole::Sensitive,
            ),
            ColumnSpec::new("lsat", ValueKind::Numeric, ColumnRole::NonSensitive),
        ])
        .unwrap();
        let rows: Vec<Vec<String>> = values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![v.to_string(), format!("{}", 30 + i)])
            .collect();
        Dataset::from_text_rows(schema, &rows).unwrap()
    }

    #[test]
    fn full_one_hot_in_level_order() {
        let d = race_data(&["white"]);
        let e = encode_columns(&d, &["race".into()], EncodingMode::FullOneHot).unwrap();
        assert_eq!(e.matrix.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(e.labels()[4], "race=white");
    }

    #[test]
    fn drop_first_omits_first_level() {
        let schema = Schema::new(vec![ColumnSpec::categorical(
            "gender",
            &["female", "male", "nonbinary"],
            ColumnRole::Sensitive,
        )])
        .unwrap();
        let d = Dataset::from_text_rows(schema, &[vec!["female"], vec!["nonbinary"]]).unwrap();
        let e = one_hot_encode(&d, &[ColumnRole::Sensitive], EncodingMode::DropFirst).unwrap();
        assert_eq!(e.labels(), vec!["gender=male", "gender=nonbinary"]);
        assert_eq!(e.matrix.row(0), &[0.0, 0.0]);
        assert_eq!(e.matrix.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn numeric_passes_through() {
        let d = race_data(&["asian", "black"]);
        let e = encode_columns(&d, &["lsat".into()], EncodingMode::FullOneHot).unwrap();
        assert_eq!(e.provenance[0].range(), 0..1);
        assert_eq!(e.matrix.column(0), vec![30.0, 31.0]);
    }

    #[test]
    fn empty_selection_rejected() {
        let d = race_data(&["asian"]);
        assert!(one_hot_encode(&d, &[ColumnRole::Outcome], EncodingMode::FullOneHot).is_err());
    }

    proptest! {
        #[test]
        fn group_sums(levels in proptest::collection::vec(0usize..5, 1..40)) {
            let names = ["asian", "black", "hisp", "other", "white"];
            let values: Vec<&str> = levels.iter().map(|&i| names[i]).collect();
            let d = race_data(&values);
            let full = one_hot_encode(&d, &[ColumnRole::Sensitive, ColumnRole::NonSensitive], EncodingMode::FullOneHot).unwrap();
            let drop = one_hot_encode(&d, &[ColumnRole::Sensitive, ColumnRole::NonSensitive], EncodingMode::DropFirst).unwrap();
            prop_assert_eq!(full.width(), full.provenance.iter().map(EncodedColumn::width).sum::<usize>());
            prop_assert_eq!(drop.width(), 5);
            for r in 0..d.n_rows() {
                let s: f64 = full.matrix.row(r)[full.provenance[0].range()].iter().sum();
                prop_assert_eq!(s, 1.0);
                let s: f64 = drop.matrix.row(r)[drop.provenance[0].range()].iter().sum();
                prop_assert!(s == 0.0 || s == 1.0);
            }
        }
    }
}
