use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{prf, Standardizer};
use crate::error::{Error, Result};
use crate::events::FEATURES;
use crate::nn::{sigmoid, Graph, ParamSet, SgdMomentum, Var, NORM_EPS};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub positive_weight: f64,
    pub bn_momentum: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![128, 128, 32],
            dropout: 0.15,
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 500,
            patience: 25,
            positive_weight: 1.0,
            bn_momentum: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout with the given mask seed.
    Train(u64),
    /// Running statistics, no dropout.
    Infer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpMeta {
    pub config: MlpConfig,
    pub standardizer: Standardizer,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub config: MlpConfig,
    pub params: ParamSet,
    pub standardizer: Standardizer,
    pub best_epoch: usize,
    pub best_val_f1: f64,
}

/// Batch statistics of one batch-norm layer: (mean, variance).
type BnStats = (Vec<f64>, Vec<f64>);

pub fn init_params(cfg: &MlpConfig, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    let mut fan_in = FEATURES;
    for (l, &w) in cfg.hidden.iter().enumerate() {
        // He initialization suits the ReLU layers
        let a = (6.0 / fan_in as f64).sqrt();
        p.add_uniform(&format!("l{l}.w"), fan_in, w, a, &mut rng);
        p.add_zeros(&format!("l{l}.b"), 1, w);
        p.add_const(&format!("l{l}.gamma"), 1, w, 1.0);
        p.add_zeros(&format!("l{l}.beta"), 1, w);
        p.add_zeros(&format!("l{l}.mean"), 1, w);
        p.add_const(&format!("l{l}.var"), 1, w, 1.0);
        fan_in = w;
    }
    p.add_glorot("out.w", fan_in, 1, &mut rng);
    p.add_zeros("out.b", 1, 1);
    p
}

/// Builds the logit column for standardized inputs `x`. In training mode
/// also returns each layer's batch statistics.
pub fn forward(g: &mut Graph, cfg: &MlpConfig, x: Array2<f64>, mode: Mode) -> (Var, Vec<BnStats>) {
    let mut h = g.constant(x);
    let mut stats = Vec::new();
    let mut rng = match mode {
        Mode::Train(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Infer => None,
    };
    for l in 0..cfg.hidden.len() {
        let w = g.param_by_name(&format!("l{l}.w"));
        let b = g.param_by_name(&format!("l{l}.b"));
        let gamma = g.param_by_name(&format!("l{l}.gamma"));
        let beta = g.param_by_name(&format!("l{l}.beta"));
        let z = g.linear(h, w, b);
        let zn = match mode {
            Mode::Train(_) => {
                let (zn, mean, var) = g.batch_norm(z);
                stats.push((mean, var));
                zn
            }
            Mode::Infer => {
                let p = g.params();
                let mean = p.get(&format!("l{l}.mean")).mapv(|m| -m);
                let inv = p.get(&format!("l{l}.var")).mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
                let shift = g.constant(mean);
                let scale = g.constant(inv);
                let c = g.add_row(z, shift);
                g.mul_row(c, scale)
            }
        };
        let y = g.mul_row(zn, gamma);
        let y = g.add_row(y, beta);
        h = g.relu(y);
        if let Some(rng) = rng.as_mut() {
            if cfg.dropout > 0.0 {
                let keep = 1.0 - cfg.dropout;
                let shape = g.value(h).raw_dim();
                let mask = Array2::from_shape_fn(shape, |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                let m = g.constant(mask);
                h = g.mul(h, m);
            }
        }
    }
    let w = g.param_by_name("out.w");
    let b = g.param_by_name("out.b");
    (g.linear(h, w, b), stats)
}

fn rows_of(x: &[[f64; FEATURES]], idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), FEATURES), |(r, c)| x[idx[r]][c])
}

impl Mlp {
    /// Trains on raw (unstandardized) features; the standardizer is fit on
    /// `train_x` only and early stopping tracks F1 on the validation pair.
    pub fn train(
        train_x: &[[f64; FEATURES]],
        train_y: &[bool],
        val_x: &[[f64; FEATURES]],
        val_y: &[bool],
        cfg: &MlpConfig,
        seed: u64,
    ) -> Result<Self> {
        if train_x.is_empty() || train_x.len() != train_y.len() {
            return Err(Error::Shape("empty or mismatched training data".into()));
        }
        let standardizer = Standardizer::fit(train_x);
        let xs = standardizer.transform_all(train_x);
        let mut params = init_params(cfg, seed);
        let mut opt = SgdMomentum::new(&params, cfg.lr, cfg.momentum);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut model = Mlp {
            config: cfg.clone(),
            params: params.clone(),
            standardizer,
            best_epoch: 0,
            best_val_f1: -1.0,
        };
        let mut since_best = 0;
        let mut best = params.clone();
        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                // batch statistics are undefined for a single row
                if chunk.len() < 2 {
                    continue;
                }
                let x = rows_of(&xs, chunk);
                let targets: Vec<f64> = chunk.iter().map(|&i| if train_y[i] { 1.0 } else { 0.0 }).collect();
                let weights: Vec<f64> = chunk
                    .iter()
                    .map(|&i| if train_y[i] { cfg.positive_weight } else { 1.0 })
                    .collect();
                let (grads, stats, loss) = {
                    let mut g = Graph::new(&params);
                    let (logit, stats) = forward(&mut g, cfg, x, Mode::Train(rng.random()));
                    let loss = g.bce_with_logits(logit, targets, weights);
                    (g.backward(loss), stats, g.scalar(loss))
                };
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        stage: "train-classifier",
                        epoch,
                        detail: format!("batch loss {loss}"),
                    });
                }
                epoch_loss += loss;
                opt.step(&mut params, &grads);
                let n = chunk.len() as f64;
                for (l, (mean, var)) in stats.iter().enumerate() {
                    let m = cfg.bn_momentum;
                    let rm = params.get_mut(&format!("l{l}.mean"));
                    for (r, &b) in rm.iter_mut().zip(mean) {
                        *r = (1.0 - m) * *r + m * b;
                    }
                    let rv = params.get_mut(&format!("l{l}.var"));
                    for (r, &b) in rv.iter_mut().zip(var) {
                        *r = (1.0 - m) * *r + m * b * n / (n - 1.0);
                    }
                }
            }
            model.params = params.clone();
            let val_f1 = if val_x.is_empty() {
                0.0
            } else {
                let pred: Vec<bool> = model.predict_all(val_x).into_iter().map(|p| p > 0.5).collect();
                prf(&pred, val_y).f1
            };
            log::debug!("mlp epoch {epoch}: loss {epoch_loss:.4} val f1 {val_f1:.4}");
            if val_f1 > model.best_val_f1 {
                model.best_val_f1 = val_f1;
                model.best_epoch = epoch;
                best = params.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        model.params = best;
        Ok(model)
    }

    pub fn probability(&self, x: &[f64; FEATURES]) -> f64 {
        self.predict_all(std::slice::from_ref(x))[0]
    }

    pub fn predict_all(&self, x: &[[f64; FEATURES]]) -> Vec<f64> {
        if x.is_empty() {
            return Vec::new();
        }
        let xs = self.standardizer.transform_all(x);
        let idx: Vec<usize> = (0..xs.len()).collect();
        let mut g = Graph::new(&self.params);
        let (logit, _) = forward(&mut g, &self.config, rows_of(&xs, &idx), Mode::Infer);
        g.value(logit).iter().map(|&z| sigmoid(z)).collect()
    }

    pub fn meta(&self) -> MlpMeta {
        MlpMeta {
            config: self.config.clone(),
            standardizer: self.standardizer.clone(),
            best_epoch: self.best_epoch,
            best_val_f1: self.best_val_f1,
        }
    }

    pub fn from_parts(params: ParamSet, meta: MlpMeta) -> Self {
        Mlp {
            config: meta.config,
            params,
            standardizer: meta.standardizer,
            best_epoch: meta.best_epoch,
            best_val_f1: meta.best_val_f1,
        }
    }
}
