use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::FEATURES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease, `n_node/N · (G − n_l/n·G_l − n_r/n·G_r)`.
        gain: f64,
    },
    Leaf {
        positive: f64,
        samples: usize,
    },
}

/// Binary CART tree. Goes left when `x[feature] <= threshold`. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [[f64; FEATURES]],
    y: &'a [bool],
    cfg: &'a TreeConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    /// Best split of `idx` as (feature, threshold, weighted child impurity).
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.y[i]).count();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..FEATURES {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left_pos = 0;
            for k in 1..n {
                if self.y[order[k - 1]] {
                    left_pos += 1;
                }
                let lo = self.x[order[k - 1]][f];
                let hi = self.x[order[k]][f];
                if lo == hi || k < self.cfg.min_samples_leaf || n - k < self.cfg.min_samples_leaf {
                    continue;
                }
                let child = (k as f64 * gini(left_pos, k)
                    + (n - k) as f64 * gini(total_pos - left_pos, n - k))
                    / n as f64;
                if best.is_none_or(|(_, _, b)| child < b - 1e-12) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((f, threshold, child));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            positive: pos as f64 / n as f64,
            samples: n,
        });
        let parent = gini(pos, n);
        if parent == 0.0 || n < self.cfg.min_samples_split || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some((feature, threshold, child)) = self.best_split(&idx) else {
            return id;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let gain = n as f64 / self.y.len() as f64 * (parent - child);
        let left = self.grow(li, depth + 1);
        let right = self.grow(ri, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            gain,
        };
        id
    }
}

impl DecisionTree {
    pub fn train(x: &[[f64; FEATURES]], y: &[bool], cfg: &TreeConfig) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} feature rows, {} labels", x.len(), y.len())));
        }
        let pos = y.iter().filter(|&&b| b).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::DegenerateData(format!(
                "{pos} positive of {} examples; need both classes",
                y.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("non-finite feature".into()));
        }
        let mut b = Builder {
            x,
            y,
            cfg,
            nodes: Vec::new(),
        };
        b.grow((0..x.len()).collect(), 0);
        Ok(DecisionTree { nodes: b.nodes })
    }

    /// Probability that `x` is salient.
    pub fn probability(&self, x: &[f64; FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { positive, .. } => return *positive,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    /// Total impurity decrease per feature, normalized to sum to 1.
    pub fn feature_importance(&self) -> [f64; FEATURES] {
        let mut imp = [0.0; FEATURES];
        for node in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                imp[*feature] += gain;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for v in &mut imp {
                *v /= total;
            }
        }
        imp
    }
}
