//! Small reverse-mode autodiff engine shared by the neural models.

mod graph;
mod optim;
mod params;

pub use graph::{sigmoid, softmax_rows, Gradients, Graph, Var, NORM_EPS};
pub use optim::{clip_grad_norm, grads_finite, warmup_linear, AdamW, SgdMomentum};
pub use params::{ParamSet, WeightsFile, WEIGHTS_FORMAT, WEIGHTS_VERSION};

/// Worst entry found by [`grad_check_report`].
#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Maximum relative error between analytic and central-difference gradients
/// of `loss` over every parameter entry. Relative error is
/// `|a − n| / max(|a| + |n|, floor)`.
pub fn grad_check<F>(params: &mut ParamSet, loss: F, h: f64, floor: f64) -> f64
where
    F: Fn(&mut Graph) -> Var,
{
    grad_check_report(params, loss, h, floor).max_rel_error
}

pub fn grad_check_report<F>(params: &mut ParamSet, loss: F, h: f64, floor: f64) -> GradCheck
where
    F: Fn(&mut Graph) -> Var,
{
    grad_check_where(params, loss, h, floor, |_| true)
}

/// Like [`grad_check_report`] but only over tensors whose name passes `keep`
/// (e.g. to leave out running statistics that are read as constants).
pub fn grad_check_where<F, K>(params: &mut ParamSet, loss: F, h: f64, floor: f64, keep: K) -> GradCheck
where
    F: Fn(&mut Graph) -> Var,
    K: Fn(&str) -> bool,
{
    let analytic = {
        let mut g = Graph::new(params);
        let l = loss(&mut g);
        g.backward(l)
    };
    let eval = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let l = loss(&mut g);
        g.scalar(l)
    };
    let mut worst = GradCheck::default();
    for pid in 0..params.len() {
        if !keep(&params.names[pid]) {
            continue;
        }
        for k in 0..params.values[pid].len() {
            let orig = params.values[pid].as_slice().expect("contiguous")[k];
            params.values[pid].as_slice_mut().expect("contiguous")[k] = orig + h;
            let up = eval(params);
            params.values[pid].as_slice_mut().expect("contiguous")[k] = orig - h;
            let down = eval(params);
            params.values[pid].as_slice_mut().expect("contiguous")[k] = orig;
            let num = (up - down) / (2.0 * h);
            let cols = params.values[pid].ncols();
            let a = analytic.params[pid].as_ref().map_or(0.0, |g| g[[k / cols, k % cols]]);
            let rel = (a - num).abs() / (a.abs() + num.abs()).max(floor);
            if rel > worst.max_rel_error {
                worst = GradCheck {
                    max_rel_error: rel,
                    param: params.names[pid].clone(),
                    index: k,
                    analytic: a,
                    numeric: num,
                };
            }
        }
    }
    worst
}
