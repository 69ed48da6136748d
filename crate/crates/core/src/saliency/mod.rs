//! Pivotal-event classifiers and their evaluation.

mod mlp;
mod tree;

use serde::{Deserialize, Serialize};

use crate::events::FEATURES;

pub use mlp::{forward as mlp_forward, init_params as mlp_init_params, Mlp, MlpConfig, MlpMeta, Mode};
pub use tree::{DecisionTree, TreeConfig, TreeNode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Binary precision, recall and F1; a zero denominator gives 0.
pub fn prf(pred: &[bool], gold: &[bool]) -> Prf {
    assert_eq!(pred.len(), gold.len(), "prediction and label counts differ");
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

/// Salient iff the probability is strictly above one half.
pub fn is_salient(probability: f64) -> bool {
    probability > 0.5
}

/// Per-column standardization fitted on one split and reused on others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[[f64; FEATURES]]) -> Self {
        let n = x.len().max(1) as f64;
        let mut mean = vec![0.0; FEATURES];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; FEATURES];
        for r in x {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        // constant columns pass through centred
        let std = std.into_iter().map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: &[f64; FEATURES]) -> [f64; FEATURES] {
        let mut out = [0.0; FEATURES];
        for i in 0..FEATURES {
            out[i] = (x[i] - self.mean[i]) / self.std[i];
        }
        out
    }

    pub fn transform_all(&self, x: &[[f64; FEATURES]]) -> Vec<[f64; FEATURES]> {
        x.iter().map(|r| self.transform(r)).collect()
    }
}

/// Any of the three event classifiers.
#[derive(Clone, Debug)]
pub enum Classifier {
    AllPositive,
    Tree(DecisionTree),
    Mlp(Box<Mlp>),
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::AllPositive => "baseline",
            Classifier::Tree(_) => "tree",
            Classifier::Mlp(_) => "mlp",
        }
    }

    pub fn probabilities(&self, x: &[[f64; FEATURES]]) -> Vec<f64> {
        match self {
            Classifier::AllPositive => vec![1.0; x.len()],
            Classifier::Tree(t) => x.iter().map(|r| t.probability(r)).collect(),
            Classifier::Mlp(m) => m.predict_all(x),
        }
    }

    pub fn evaluate(&self, x: &[[f64; FEATURES]], y: &[bool]) -> (Vec<f64>, Prf) {
        let p = self.probabilities(x);
        let pred: Vec<bool> = p.iter().map(|&v| is_salient(v)).collect();
        let score = prf(&pred, y);
        (p, score)
    }
}
