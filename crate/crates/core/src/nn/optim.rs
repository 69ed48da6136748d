use ndarray::Array2;

use super::graph::Gradients;
use super::params::ParamSet;

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads
        .params
        .iter()
        .flatten()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for g in grads.params.iter_mut().flatten() {
            g.mapv_inplace(|v| v * k);
        }
    }
    norm
}

pub fn grads_finite(grads: &Gradients) -> bool {
    grads.params.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()))
}

/// SGD with classical momentum: `v ← μv + g; θ ← θ − ηv`.
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Array2<f64>>,
}

impl SgdMomentum {
    pub fn new(params: &ParamSet, lr: f64, momentum: f64) -> Self {
        let velocity = params.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect();
        SgdMomentum { lr, momentum, velocity }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) {
        for (i, g) in grads.params.iter().enumerate() {
            let v = &mut self.velocity[i];
            v.mapv_inplace(|x| x * self.momentum);
            if let Some(g) = g {
                *v += g;
            }
            params.values[i].scaled_add(-self.lr, v);
        }
    }
}

/// Adam with decoupled weight decay.
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Parameters excluded from weight decay (biases, norms).
    pub no_decay: Vec<bool>,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            no_decay: vec![false; params.len()],
            t: 0,
            m: params.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
            v: params.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
        }
    }

    /// One update at learning rate `lr_scale · lr`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, lr_scale: f64) {
        self.t += 1;
        let lr = self.lr * lr_scale;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, g) in grads.params.iter().enumerate() {
            let p = &mut params.values[i];
            if !self.no_decay[i] {
                p.mapv_inplace(|x| x * (1.0 - lr * self.weight_decay));
            }
            let Some(g) = g else { continue };
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            ndarray::Zip::from(p)
                .and(&mut self.m[i])
                .and(&mut self.v[i])
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                });
        }
    }
}

/// Linear warmup to 1 over `warmup` steps, then linear decay to 0 at `total`.
pub fn warmup_linear(step: usize, warmup: usize, total: usize) -> f64 {
    if step < warmup {
        (step + 1) as f64 / warmup as f64
    } else if total <= warmup {
        1.0
    } else {
        ((total - step) as f64 / (total - warmup) as f64).max(0.0)
    }
}
