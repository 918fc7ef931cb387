//! Fairness measurement: group summaries, counterfactual error against a
//! known oracle, bootstrap intervals and surrogate trees over the adjustment.
//!
//! Standard deviations are sample (n - 1) deviations; a single value has
//! sd 0.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::learners::{fit_tree, RegressionTree, TreeNode, TreeParams};
use crate::matrix::Matrix;
use crate::seed::derive;
use crate::tabular::{encode_columns, EncodingMode};
use crate::tabular::{Column, ColumnRole, Dataset, ValueKind};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn variance(values: &[f64]) -> f64 {
    let sd = sample_sd(values);
    sd * sd
}

/// Mean with its normal-approximation 95% half-width for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub half_width: f64,
}

impl GroupStats {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

/// Per-group mean and 1.96 sd / sqrt(n) half-width, groups in sorted order.
pub fn group_stats(preds: &[f64], groups: &[String]) -> Result<Vec<GroupStats>> {
    if groups.is_empty() {
        return input("group vector is empty");
    }
    if preds.len() != groups.len() {
        return input(format!(
            "{} predictions but {} group labels",
            preds.len(),
            groups.len()
        ));
    }
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (p, g) in preds.iter().zip(groups) {
        by.entry(g.as_str()).or_default().push(*p);
    }
    Ok(by
        .into_iter()
        .map(|(g, v)| GroupStats {
            group: g.to_string(),
            count: v.len(),
            mean: mean(&v),
            half_width: 1.96 * sample_sd(&v) / (v.len() as f64).sqrt(),
        })
        .collect())
}

/// Row labels for grouping by one or more columns. A single column gives
/// its plain level text; several give `a=x&b=y`.
pub fn group_keys(data: &Dataset, columns: &[String]) -> Result<Vec<String>> {
    if columns.is_empty() {
        return input("no grouping columns given");
    }
    let labels = columns
        .iter()
        .map(|c| data.labels(c))
        .collect::<Result<Vec<_>>>()?;
    if columns.len() == 1 {
        return Ok(labels.into_iter().next().unwrap());
    }
    Ok((0..data.n_rows())
        .map(|i| {
            columns
                .iter()
                .zip(&labels)
                .map(|(c, l)| format!("{c}={}", l[i]))
                .collect::<Vec<_>>()
                .join("&")
        })
        .collect())
}

/// Factual minus counterfactual predictions over one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfErrorReport {
    pub subgroup: String,
    pub rows: Vec<usize>,
    pub errors: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

pub fn cf_error(factual: &[f64], counterfactual: &[f64], mask: &[bool], subgroup: &str) -> Result<CfErrorReport> {
    if factual.len() != counterfactual.len() || factual.len() != mask.len() {
        return input("factual, counterfactual and mask lengths differ");
    }
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return input(format!("subgroup `{subgroup}` selects no rows"));
    }
    let errors: Vec<f64> = rows.iter().map(|&i| factual[i] - counterfactual[i]).collect();
    Ok(CfErrorReport {
        subgroup: subgroup.to_string(),
        mean: mean(&errors),
        sd: sample_sd(&errors),
        count: errors.len(),
        rows,
        errors,
    })
}

/// Statistics available to [`bootstrap_ci`] by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Sd,
    Median,
}

impl Statistic {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Statistic::Mean => mean(values),
            Statistic::Sd => sample_sd(values),
            Statistic::Median => {
                let mut v = values.to_vec();
                v.sort_unstable_by(f64::total_cmp);
                quantile_sorted(&v, 0.5)
            }
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Statistic::Mean),
            "sd" => Ok(Statistic::Sd),
            "median" => Ok(Statistic::Median),
            _ => input(format!("unknown statistic `{s}` (mean, sd, median)")),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub resamples: usize,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Percentile 95% bootstrap interval of `statistic` over `b` row resamples.
///
/// Resample `i` always uses the stream derived from `(seed, i)`, so a run
/// with larger `b` extends rather than replaces a smaller one.
pub fn bootstrap_ci<F>(values: &[f64], statistic: F, b: usize, seed: u64) -> Result<Interval>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if b < 100 {
        return input(format!("bootstrap needs at least 100 resamples, got {b}"));
    }
    if values.is_empty() {
        return input("bootstrap over an empty sample");
    }
    let n = values.len();
    let mut stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[i as u64]));
                for slot in buf.iter_mut() {
                    *slot = values[rng.random_range(0..n)];
                }
                statistic(buf)
            },
        )
        .collect();
    stats.sort_unstable_by(f64::total_cmp);
    Ok(Interval {
        estimate: statistic(values),
        lower: quantile_sorted(&stats, 0.025),
        upper: quantile_sorted(&stats, 0.975),
        resamples: b,
    })
}

/// A node of a surrogate tree, with feature names resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AdjustmentNode {
    Split {
        feature: String,
        threshold: f64,
        count: usize,
        mean: f64,
        left: Box<AdjustmentNode>,
        right: Box<AdjustmentNode>,
    },
    Leaf {
        count: usize,
        mean: f64,
    },
}

impl AdjustmentNode {
    pub fn count(&self) -> usize {
        match self {
            AdjustmentNode::Split { count, .. } | AdjustmentNode::Leaf { count, .. } => *count,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            AdjustmentNode::Split { mean, .. } | AdjustmentNode::Leaf { mean, .. } => *mean,
        }
    }
}

/// Greedy CART surrogate explaining a per-row delta (for example unaware
/// minus fair predictions) in terms of the original features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentTree {
    pub features: Vec<String>,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub root: AdjustmentNode,
    #[serde(skip)]
    tree: Option<RegressionTree>,
    #[serde(skip)]
    design: Option<Matrix>,
    #[serde(skip)]
    target: Vec<f64>,
}

impl AdjustmentTree {
    pub fn depth(&self) -> usize {
        fn go(n: &AdjustmentNode) -> usize {
            match n {
                AdjustmentNode::Split { left, right, .. } => 1 + go(left).max(go(right)),
                AdjustmentNode::Leaf { .. } => 0,
            }
        }
        go(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        fn go(n: &AdjustmentNode) -> usize {
            match n {
                AdjustmentNode::Split { left, right, .. } => go(left) + go(right),
                AdjustmentNode::Leaf { .. } => 1,
            }
        }
        go(&self.root)
    }

    /// Mean squared error of the tree on the rows it was fitted to.
    pub fn training_mse(&self) -> f64 {
        let (Some(tree), Some(x)) = (&self.tree, &self.design) else {
            return f64::NAN;
        };
        let ss: f64 = self
            .target
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let e = t - tree.predict_row(x.row(i));
                e * e
            })
            .sum();
        ss / self.target.len() as f64
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    /// Indented text, one line per node.
    pub fn render(&self) -> String {
        let mut out = String::new();
        render_node(&self.root, 0, &mut out);
        out
    }
}

impl fmt::Display for AdjustmentTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn condition(feature: &str, threshold: f64, left: bool) -> String {
    // Indicator columns split at 0.5 read better as equalities.
    if threshold == 0.5 {
        if let Some((col, level)) = feature.split_once('=') {
            return format!("{col} {} {level}", if left { "!=" } else { "==" });
        }
    }
    format!("{feature} {} {threshold}", if left { "<=" } else { ">" })
}

fn render_node(node: &AdjustmentNode, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match node {
        AdjustmentNode::Leaf { count, mean } => {
            let _ = writeln!(out, "{pad}-> mean {mean:.4} (n={count})");
        }
        AdjustmentNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            for (child, is_left) in [(left, true), (right, false)] {
                let _ = writeln!(
                    out,
                    "{pad}{} [n={}, mean {:.4}]",
                    condition(feature, *threshold, is_left),
                    child.count(),
                    child.mean()
                );
                render_node(child, indent + 1, out);
            }
        }
    }
}

fn resolve(tree: &RegressionTree, i: usize, labels: &[String], x: &Matrix, rows: &[usize], y: &[f64]) -> AdjustmentNode {
    let count = rows.len();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / count.max(1) as f64;
    match tree.nodes()[i] {
        TreeNode::Leaf { .. } => AdjustmentNode::Leaf { count, mean },
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x.get(r, feature) <= threshold);
            AdjustmentNode::Split {
                feature: labels[feature].clone(),
                threshold,
                count,
                mean,
                left: Box::new(resolve(tree, left, labels, x, &l, y)),
                right: Box::new(resolve(tree, right, labels, x, &r, y)),
            }
        }
    }
}

/// Default surrogate features: every sensitive and non-sensitive column.
pub fn default_tree_features(data: &Dataset) -> Vec<String> {
    data.schema()
        .columns()
        .iter()
        .filter(|c| matches!(c.role, ColumnRole::Sensitive | ColumnRole::NonSensitive))
        .map(|c| c.name.clone())
        .collect()
}

/// Fits a depth-limited CART surrogate on the masked rows, targeting `delta`.
pub fn adjustment_tree(
    data: &Dataset,
    delta: &[f64],
    mask: &[bool],
    max_depth: usize,
    min_leaf: usize,
    features: &[String],
) -> Result<AdjustmentTree> {
    if delta.len() != data.n_rows() || mask.len() != data.n_rows() {
        return input("delta and mask must align with the data rows");
    }
    if min_leaf == 0 {
        return input("min_leaf must be at least 1");
    }
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if rows.len() < 2 * min_leaf {
        return input(format!(
            "subgroup has {} rows; a tree with min_leaf {min_leaf} needs at least {}",
            rows.len(),
            2 * min_leaf
        ));
    }
    if let Some(bad) = delta.iter().zip(mask).find(|(d, &m)| m && !d.is_finite()) {
        return input(format!("delta contains a non-finite value {}", bad.0));
    }
    let sub = data.select_rows(&rows)?;
    let enc = encode_columns(&sub, features, EncodingMode::FullOneHot)?;
    let labels = enc.labels();
    let y: Vec<f64> = rows.iter().map(|&r| delta[r]).collect();
    let params = TreeParams {
        max_depth: Some(max_depth),
        min_leaf,
        mtry: None,
    };
    let tree = fit_tree(&enc.matrix, &y, None, &params, None, 0)?;
    let all: Vec<usize> = (0..y.len()).collect();
    let root = resolve(&tree, 0, &labels, &enc.matrix, &all, &y);
    Ok(AdjustmentTree {
        features: labels,
        max_depth,
        min_leaf,
        root,
        tree: Some(tree),
        design: Some(enc.matrix),
        target: y,
    })
}

/// Bin counts over shared edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let bins = bins.max(1);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect()
}

/// Counts values into bins `[e_i, e_{i+1})`, the last bin closed.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return input("histogram edges must be increasing with at least two entries");
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < edges[0] || v > edges[bins] || v.is_nan() {
            continue;
        }
        let k = edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
    })
}

/// Row filter over categorical, boolean and numeric columns.
///
/// Syntax: comparisons `col==value` or `col!=value`, combined with `&`
/// (binds tighter) and `|`, with parentheses for grouping. Example:
/// `race!=white|gender!=male`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Subgroup {
    Cmp { column: String, value: String, equal: bool },
    And(Box<Subgroup>, Box<Subgroup>),
    Or(Box<Subgroup>, Box<Subgroup>),
}

impl Subgroup {
    pub fn parse(expr: &str) -> Result<Subgroup> {
        let tokens = tokenize(expr)?;
        let mut p = Parser { tokens, pos: 0 };
        let out = p.or()?;
        if p.pos != p.tokens.len() {
            return input(format!("unexpected `{}` in subgroup `{expr}`", p.tokens[p.pos]));
        }
        Ok(out)
    }

    pub fn columns(&self) -> Vec<&str> {
        match self {
            Subgroup::Cmp { column, .. } => vec![column.as_str()],
            Subgroup::And(a, b) | Subgroup::Or(a, b) => {
                let mut v = a.columns();
                v.extend(b.columns());
                v
            }
        }
    }

    pub fn mask(&self, data: &Dataset) -> Result<Vec<bool>> {
        match self {
            Subgroup::Cmp { column, value, equal } => {
                let spec = data.schema().column(column)?;
                let hit: Vec<bool> = match (&spec.kind, data.column(column)?) {
                    (ValueKind::Categorical(levels), Column::Categorical(codes)) => {
                        let Some(code) = levels.iter().position(|l| l == value) else {
                            return Err(Error::UnseenLevel {
                                column: column.clone(),
                                level: value.clone(),
                            });
                        };
                        codes.iter().map(|&c| c as usize == code).collect()
                    }
                    (_, Column::Boolean(v)) => {
                        let Some(b) = crate::tabular::parse_bool(value) else {
                            return input(format!("`{value}` is not a boolean for `{column}`"));
                        };
                        v.iter().map(|&x| x == b).collect()
                    }
                    (_, Column::Numeric(v)) => {
                        let t: f64 = value
                            .parse()
                            .map_err(|_| Error::Input(format!("`{value}` is not a number for `{column}`")))?;
                        v.iter().map(|&x| x == t).collect()
                    }
                    _ => unreachable!("storage matches schema"),
                };
                Ok(hit.into_iter().map(|h| h == *equal).collect())
            }
            Subgroup::And(a, b) => Ok(a.mask(data)?.into_iter().zip(b.mask(data)?).map(|(x, y)| x && y).collect()),
            Subgroup::Or(a, b) => Ok(a.mask(data)?.into_iter().zip(b.mask(data)?).map(|(x, y)| x || y).collect()),
        }
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subgroup::Cmp { column, value, equal } => {
                write!(f, "{column}{}{value}", if *equal { "==" } else { "!=" })
            }
            Subgroup::And(a, b) => {
                let wrap = |s: &Subgroup| matches!(s, Subgroup::Or(..));
                for (i, s) in [a, b].into_iter().enumerate() {
                    if i == 1 {
                        f.write_str("&")?;
                    }
                    if wrap(s) {
                        write!(f, "({s})")?;
                    } else {
                        write!(f, "{s}")?;
                    }
                }
                Ok(())
            }
            Subgroup::Or(a, b) => write!(f, "{a}|{b}"),
        }
    }
}

fn tokenize(expr: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let chars: Vec<char> = expr.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
            '&' | '|' | '(' | ')' => {
                out.push(c.to_string());
                i += 1;
            }
            '=' | '!' => {
                let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
                if two == "==" || two == "!=" {
                    out.push(two);
                    i += 2;
                } else if c == '=' {
                    out.push("==".into());
                    i += 1;
                } else {
                    return input(format!("stray `!` in subgroup `{expr}`"));
                }
            }
            _ => {
                let start = i;
                while i < chars.len() && !"&|()=! \t".contains(chars[i]) {
                    i += 1;
                }
                out.push(chars[start..i].iter().collect());
            }
        }
    }
    if out.is_empty() {
        return input("empty subgroup expression");
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<String>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> Result<String> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Input("subgroup expression ends early".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn or(&mut self) -> Result<Subgroup> {
        let mut lhs = self.and()?;
        while self.peek() == Some("|") {
            self.pos += 1;
            lhs = Subgroup::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Subgroup> {
        let mut lhs = self.atom()?;
        while self.peek() == Some("&") {
            self.pos += 1;
            lhs = Subgroup::And(Box::new(lhs), Box::new(self.atom()?));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Subgroup> {
        let t = self.next()?;
        if t == "(" {
            let inner = self.or()?;
            if self.next()? != ")" {
                return input("missing `)` in subgroup expression");
            }
            return Ok(inner);
        }
        if ["&", "|", ")", "==", "!="].contains(&t.as_str()) {
            return input(format!("expected a column name, found `{t}`"));
        }
        let op = self.next()?;
        let equal = match op.as_str() {
            "==" => true,
            "!=" => false,
            _ => return input(format!("expected `==` or `!=` after `{t}`, found `{op}`")),
        };
        let value = self.next()?;
        if ["&", "|", "(", ")", "==", "!="].contains(&value.as_str()) {
            return input(format!("missing value after `{t}{op}`"));
        }
        Ok(Subgroup::Cmp {
            column: t,
            value,
            equal,
        })
    }
}
