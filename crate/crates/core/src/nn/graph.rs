//! Tape-based reverse-mode differentiation over row-major matrices.

use ndarray::{s, Array2, Axis, Zip};

use super::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    /// Softmax of a column vector within groups of rows.
    GroupSoftmax(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    SumRows(Var),
    SumAll(Var),
    /// Normalizes each row; stores the inverse standard deviations.
    LayerNorm(Var, Vec<f64>),
    /// Normalizes each column over the batch; stores inverse std devs.
    BatchNorm(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
    BceWithLogits(Var, Vec<f64>, Vec<f64>),
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

/// Gradients of a scalar with respect to every parameter it touched.
pub struct Gradients {
    pub params: Vec<Option<Array2<f64>>>,
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    param_nodes: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

pub const NORM_EPS: f64 = 1e-5;

fn row_sums(a: &Array2<f64>) -> Array2<f64> {
    a.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn col_sums(a: &Array2<f64>) -> Array2<f64> {
    a.sum_axis(Axis(1)).insert_axis(Axis(1))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

/// Returns the normalized rows and each row's inverse standard deviation.
fn normalize_rows(a: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = a.clone();
    let mut inv = Vec::with_capacity(a.nrows());
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / n;
        let is = 1.0 / (var + NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) * is);
        inv.push(is);
    }
    (out, inv)
}

/// Backward of row normalization: `dx = is·(dy − mean(dy) − x̂·mean(dy⊙x̂))`.
fn normalize_rows_backward(y: &Array2<f64>, dy: &Array2<f64>, inv: &[f64]) -> Array2<f64> {
    let mut dx = Array2::zeros(y.raw_dim());
    for (i, ((yr, dyr), mut dxr)) in y.rows().into_iter().zip(dy.rows()).zip(dx.rows_mut()).enumerate() {
        let n = yr.len() as f64;
        let mdy = dyr.sum() / n;
        let mdyy = dyr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
        Zip::from(&mut dxr)
            .and(&yr)
            .and(&dyr)
            .for_each(|o, &yv, &d| *o = inv[i] * (d - mdy - yv * mdyy));
    }
    dx
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(a), _) => a,
            (None, Op::Param(id)) => &self.params.values[*id],
            _ => unreachable!("node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: usize) -> Var {
        if let Some(v) = self.param_nodes[id] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id] = Some(v);
        v
    }

    pub fn param_by_name(&mut self, name: &str) -> Var {
        let id = self.params.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.param(id)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a` plus the 1×n row `r` added to every row.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        assert_eq!(self.value(r).nrows(), 1, "add_row expects a single row");
        let v = self.value(a) + self.value(r);
        self.push(v, Op::AddRow(a, r))
    }

    /// `a` plus the m×1 column `c` added to every column.
    pub fn add_col(&mut self, a: Var, c: Var) -> Var {
        assert_eq!(self.value(c).ncols(), 1, "add_col expects a single column");
        let v = self.value(a) + self.value(c);
        self.push(v, Op::AddCol(a, c))
    }

    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        assert_eq!(self.value(r).nrows(), 1, "mul_row expects a single row");
        let v = self.value(a) * self.value(r);
        self.push(v, Op::MulRow(a, r))
    }

    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        assert_eq!(self.value(c).ncols(), 1, "mul_col expects a single column");
        let v = self.value(a) * self.value(c);
        self.push(v, Op::MulCol(a, c))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(v, Op::AddConst(a))
    }

    /// `1 − a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -1.0);
        self.add_const(n, 1.0)
    }

    /// Row-broadcast affine map `a·w + b`.
    pub fn linear(&mut self, a: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(a, w);
        self.add_row(h, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Softmax of the column vector `a` taken separately over each group of
    /// rows sharing a `groups` label.
    pub fn group_softmax(&mut self, a: Var, groups: Vec<usize>) -> Var {
        let x = self.value(a);
        assert_eq!(x.ncols(), 1);
        assert_eq!(x.nrows(), groups.len());
        let n_groups = groups.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_groups];
        for (i, &g) in groups.iter().enumerate() {
            max[g] = max[g].max(x[[i, 0]]);
        }
        let mut v = Array2::zeros(x.raw_dim());
        let mut sum = vec![0.0; n_groups];
        for (i, &g) in groups.iter().enumerate() {
            let e = (x[[i, 0]] - max[g]).exp();
            v[[i, 0]] = e;
            sum[g] += e;
        }
        for (i, &g) in groups.iter().enumerate() {
            v[[i, 0]] /= sum[g];
        }
        self.push(v, Op::GroupSoftmax(a, groups))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts differ");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts differ");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let v = self.value(a).select(Axis(0), &idx);
        self.push(v, Op::GatherRows(a, idx))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    /// Column sums as a 1×n row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = row_sums(self.value(a));
        self.push(v, Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).nrows() as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let (v, inv) = normalize_rows(self.value(a));
        self.push(v, Op::LayerNorm(a, inv))
    }

    /// Per-column standardization with batch statistics. Returns the node
    /// and the batch mean and (biased) variance of every column.
    pub fn batch_norm(&mut self, a: Var) -> (Var, Vec<f64>, Vec<f64>) {
        let x = self.value(a);
        let (vt, inv) = normalize_rows(&x.t().to_owned());
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let var: Vec<f64> = inv.iter().map(|is| 1.0 / (is * is) - NORM_EPS).collect();
        let v = vt.t().to_owned();
        (self.push(v, Op::BatchNorm(a, inv)), mean, var)
    }

    /// Weighted mean negative log-likelihood of `targets` under row-softmax
    /// of `logits`. Rows with zero weight are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>, weights: Vec<f64>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.nrows(), targets.len());
        assert_eq!(z.nrows(), weights.len());
        let total: f64 = weights.iter().sum();
        let mut loss = 0.0;
        for (i, row) in z.rows().into_iter().enumerate() {
            if weights[i] == 0.0 {
                continue;
            }
            let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            loss += weights[i] * (lse - row[targets[i]]);
        }
        let v = Array2::from_elem((1, 1), if total > 0.0 { loss / total } else { 0.0 });
        self.push(v, Op::CrossEntropy(logits, targets, weights))
    }

    /// Binary cross-entropy of an n×1 logit column against 0/1 targets,
    /// weighted per row and divided by n.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>, weights: Vec<f64>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.ncols(), 1);
        assert_eq!(z.nrows(), targets.len());
        assert_eq!(z.nrows(), weights.len());
        let n = targets.len() as f64;
        let loss: f64 = z
            .iter()
            .zip(&targets)
            .zip(&weights)
            .map(|((&x, &y), &w)| w * (x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()))
            .sum();
        let v = Array2::from_elem((1, 1), loss / n);
        self.push(v, Op::BceWithLogits(logits, targets, weights))
    }

    /// Gradients of the 1×1 node `out` with respect to all parameters.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).dim(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones((1, 1)));
        let mut pgrads: Vec<Option<Array2<f64>>> = (0..self.params.len()).map(|_| None).collect();

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = || node.value.as_ref().expect("computed node");
            match &node.op {
                Op::Const => {}
                Op::Param(id) => pgrads[*id] = Some(g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, r) => {
                    acc(&mut grads, *r, row_sums(&g));
                    acc(&mut grads, *a, g);
                }
                Op::AddCol(a, c) => {
                    acc(&mut grads, *c, col_sums(&g));
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let gr = row_sums(&(&g * self.value(*a)));
                    let ga = &g * self.value(*r);
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, ga);
                }
                Op::MulCol(a, c) => {
                    let gc = col_sums(&(&g * self.value(*a)));
                    let ga = &g * self.value(*c);
                    acc(&mut grads, *c, gc);
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g * *k),
                Op::AddConst(a) => acc(&mut grads, *a, g),
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(y()).for_each(|d, &s| *d *= s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(y()).for_each(|d, &t| *d *= 1.0 - t * t);
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = y();
                    let mut ga = g;
                    for (mut gr, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut gr).and(&yr).for_each(|d, &p| *d = p * (*d - dot));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GroupSoftmax(a, groups) => {
                    let y = y();
                    let n_groups = groups.iter().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; n_groups];
                    for (j, &k) in groups.iter().enumerate() {
                        dot[k] += g[[j, 0]] * y[[j, 0]];
                    }
                    let mut ga = g;
                    for (j, &k) in groups.iter().enumerate() {
                        ga[[j, 0]] = y[[j, 0]] * (ga[[j, 0]] - dot[k]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).nrows();
                        acc(&mut grads, p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::SliceCols(a, s0, e0) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![.., *s0..*e0]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, s0, e0) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![*s0..*e0, ..]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (r, &i) in idx.iter().enumerate() {
                        let mut dst = ga.row_mut(i);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                Op::SumRows(a) => {
                    let shape = self.value(*a).raw_dim();
                    let ga = g.broadcast(shape).expect("row broadcast").to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm(a, inv) => acc(&mut grads, *a, normalize_rows_backward(y(), &g, inv)),
                Op::BatchNorm(a, inv) => {
                    let yt = y().t().to_owned();
                    let gt = g.t().to_owned();
                    let ga = normalize_rows_backward(&yt, &gt, inv).t().to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::CrossEntropy(logits, targets, weights) => {
                    let total: f64 = weights.iter().sum();
                    let mut ga = softmax_rows(self.value(*logits));
                    for (i, mut row) in ga.rows_mut().into_iter().enumerate() {
                        if weights[i] == 0.0 || total == 0.0 {
                            row.fill(0.0);
                            continue;
                        }
                        row[targets[i]] -= 1.0;
                        let k = g[[0, 0]] * weights[i] / total;
                        row.mapv_inplace(|v| v * k);
                    }
                    acc(&mut grads, *logits, ga);
                }
                Op::BceWithLogits(logits, targets, weights) => {
                    let n = targets.len() as f64;
                    let z = self.value(*logits);
                    let mut ga = Array2::zeros(z.raw_dim());
                    for (i, &t) in targets.iter().enumerate() {
                        ga[[i, 0]] = g[[0, 0]] * weights[i] * (sigmoid(z[[i, 0]]) - t) / n;
                    }
                    acc(&mut grads, *logits, ga);
                }
            }
        }
        Gradients { params: pgrads }
    }
}
