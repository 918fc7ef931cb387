//! CART regression trees with exact split search.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of a
//! feature within the node. A split is scored by its reduction in (weighted)
//! sum of squared errors. Among equally good splits the lowest feature index
//! wins, then the smallest threshold. Prediction routes `value <= threshold`
//! to the left child.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

/// Growth limits for a single tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features drawn at random for each split; `None` searches all allowed.
    pub mtry: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            mtry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
                TreeNode::Leaf { value, .. } => return value,
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Fits a tree on all rows of `x`.
///
/// `feature_subset` restricts the features considered at every split; `seed`
/// drives the per-split feature sampling when `params.mtry` is set.
pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
    params: &TreeParams,
    feature_subset: Option<&[usize]>,
    seed: u64,
) -> Result<RegressionTree> {
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fit_tree_on_rows(x, y, weights, params, feature_subset, rows, &mut rng)
}

/// Fits a tree on a multiset of row indices (bootstrap draws may repeat).
pub(crate) fn fit_tree_on_rows(
    x: &Matrix,
    y: &[f64],
    weights: Option<&[f64]>,
    params: &TreeParams,
    feature_subset: Option<&[usize]>,
    mut rows: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<RegressionTree> {
    if x.n_rows() != y.len() {
        return input(format!(
            "design has {} rows but target has {}",
            x.n_rows(),
            y.len()
        ));
    }
    if rows.is_empty() {
        return input("cannot fit a tree on empty data");
    }
    if params.min_leaf == 0 {
        return input("min_leaf must be at least 1");
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return input("weight vector length does not match rows");
        }
        if w.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return input("tree weights must be finite and positive");
        }
    }
    let features: Vec<usize> = match feature_subset {
        Some(f) => {
            if let Some(&bad) = f.iter().find(|&&j| j >= x.n_cols()) {
                return input(format!("feature index {bad} out of range"));
            }
            let mut f = f.to_vec();
            f.sort_unstable();
            f.dedup();
            f
        }
        None => (0..x.n_cols()).collect(),
    };
    if let Some(m) = params.mtry {
        if m == 0 || m > features.len().max(1) {
            return input(format!(
                "mtry {m} must lie in [1, {}]",
                features.len()
            ));
        }
    }
    let mut builder = Builder {
        x,
        y,
        w: weights,
        params,
        features,
        rng,
        nodes: Vec::new(),
        buf: Vec::new(),
    };
    builder.grow(&mut rows, 0);
    Ok(RegressionTree {
        nodes: builder.nodes,
    })
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    w: Option<&'a [f64]>,
    params: &'a TreeParams,
    features: Vec<usize>,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, f64, f64)>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    #[inline]
    fn weight(&self, r: usize) -> f64 {
        self.w.map_or(1.0, |w| w[r])
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let (w_sum, wy_sum) = rows.iter().fold((0.0, 0.0), |(ws, wys), &r| {
            let w = self.weight(r);
            (ws + w, wys + w * self.y[r])
        });
        let mean = wy_sum / w_sum;
        self.nodes.push(TreeNode::Leaf {
            value: mean,
            count: rows.len(),
        });

        let at_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        let too_small = rows.len() < 2 * self.params.min_leaf;
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        if at_depth || too_small || pure {
            return id;
        }

        let Some(best) = self.best_split(rows, mean) else {
            return id;
        };

        let mut left: Vec<usize> = Vec::with_capacity(rows.len());
        let mut right: Vec<usize> = Vec::with_capacity(rows.len());
        for &r in rows.iter() {
            if self.x.get(r, best.feature) <= best.threshold {
                left.push(r);
            } else {
                right.push(r);
            }
        }
        let n_left = left.len();
        rows[..n_left].copy_from_slice(&left);
        rows[n_left..].copy_from_slice(&right);
        drop((left, right));

        let (lrows, rrows) = rows.split_at_mut(n_left);
        let l = self.grow(lrows, depth + 1);
        let r = self.grow(rrows, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.params.mtry {
            Some(m) if m < self.features.len() => {
                let mut picked: Vec<usize> = sample(self.rng, self.features.len(), m)
                    .into_iter()
                    .map(|i| self.features[i])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => self.features.clone(),
        }
    }

    fn best_split(&mut self, rows: &[usize], mean: f64) -> Option<Candidate> {
        let min_leaf = self.params.min_leaf;
        let n = rows.len();
        let features = self.candidate_features();

        let mut node_ss = 0.0;
        for &r in rows {
            let d = self.y[r] - mean;
            node_ss += self.weight(r) * d * d;
        }
        let tol = 1e-12 * node_ss;

        let mut best: Option<Candidate> = None;
        let mut buf = std::mem::take(&mut self.buf);
        for &f in &features {
            buf.clear();
            buf.extend(
                rows.iter()
                    .map(|&r| (self.x.get(r, f), self.y[r] - mean, self.weight(r))),
            );
            buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if buf[0].0 == buf[n - 1].0 {
                continue;
            }
            let (w_tot, s_tot) = buf
                .iter()
                .fold((0.0, 0.0), |(w, s), &(_, yc, wi)| (w + wi, s + wi * yc));
            let base = s_tot * s_tot / w_tot;
            let (mut wl, mut sl) = (0.0, 0.0);
            for i in 0..n - 1 {
                let (xi, yc, wi) = buf[i];
                wl += wi;
                sl += wi * yc;
                let next = buf[i + 1].0;
                if xi == next {
                    continue;
                }
                let n_left = i + 1;
                if n_left < min_leaf {
                    continue;
                }
                if n - n_left < min_leaf {
                    break;
                }
                let wr = w_tot - wl;
                let sr = s_tot - sl;
                let gain = sl * sl / wl + sr * sr / wr - base;
                if best.as_ref().map_or(true, |b| gain > b.gain + tol) {
                    let mut threshold = 0.5 * (xi + next);
                    if threshold >= next {
                        threshold = xi;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        self.buf = buf;
        best
    }
}
