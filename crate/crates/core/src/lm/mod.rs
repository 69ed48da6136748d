//! Small causal transformer for prompted scene and simulation descriptions.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::tokenize;
use crate::events::ObjectRecord;
use crate::nn::{clip_grad_norm, grads_finite, softmax_rows, warmup_linear, AdamW, Graph, ParamSet, Var};
use crate::physics::{ShapeClass, ShapeSpec, Side};
use crate::vocab::{Vocab, BOS, EOS};

pub const INIT_CUE: &str = "In the physical simulation";
pub const SIM_CUE: &str = "The red ball is placed and";
pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_LEN: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    Init,
    Sim,
}

impl PromptKind {
    pub const ALL: [PromptKind; 2] = [PromptKind::Init, PromptKind::Sim];

    pub fn name(self) -> &'static str {
        match self {
            PromptKind::Init => "init",
            PromptKind::Sim => "sim",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub context: Vec<String>,
    pub target: Vec<String>,
}

fn size_word(o: &ObjectRecord) -> &'static str {
    match o.shape {
        ShapeSpec::Circle { radius } if radius < 8.0 => "small",
        ShapeSpec::Circle { radius } if radius < 12.0 => "medium",
        ShapeSpec::Bar { length, .. } if length < 40.0 => "small",
        ShapeSpec::Bar { length, .. } if length < 120.0 => "medium",
        ShapeSpec::Jar { base_length, .. } if base_length < 60.0 => "small",
        ShapeSpec::Jar { base_length, .. } if base_length < 70.0 => "medium",
        _ => "large",
    }
}

/// Attribute phrase such as `small red dynamic ball`.
pub fn object_phrase(o: &ObjectRecord) -> Vec<String> {
    let noun: &str = match (&o.shape, o.class) {
        (ShapeSpec::Boundary { side }, _) => match side {
            Side::Floor => "floor",
            Side::Ceiling => "ceiling",
            Side::Left => "left wall",
            Side::Right => "right wall",
        },
        (_, ShapeClass::Circle) => "ball",
        (_, ShapeClass::Jar) => "jar",
        _ => "bar",
    };
    let state = if o.dynamic { "dynamic" } else { "static" };
    let mut out = Vec::new();
    if !matches!(o.shape, ShapeSpec::Boundary { .. }) {
        out.push(size_word(o).to_string());
    }
    out.push(o.color.name().to_string());
    out.push(state.to_string());
    out.extend(tokenize(noun));
    out
}

/// Object phrases in the given order followed by the initial-scene cue.
pub fn build_context_init(objects: &[ObjectRecord]) -> Vec<String> {
    let mut ctx: Vec<String> = objects.iter().flat_map(object_phrase).collect();
    ctx.extend(tokenize(INIT_CUE));
    ctx
}

/// The initial-scene description followed by the simulation cue.
pub fn build_context_sim(init_description: &[String]) -> Vec<String> {
    let mut ctx = init_description.to_vec();
    ctx.extend(tokenize(SIM_CUE));
    ctx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub layers: usize,
    /// Context window k in tokens, BOS and EOS included.
    pub window: usize,
    pub lr: f64,
    pub warmup: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: Option<usize>,
    pub clip: f64,
    pub init_std: f64,
    /// Without a validation split, stop once continuation accuracy reaches this.
    pub target_train_accuracy: Option<f64>,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            d_model: 128,
            heads: 4,
            ffn: 256,
            layers: 2,
            window: 160,
            lr: 3e-4,
            warmup: 0.01,
            weight_decay: 0.01,
            batch_size: 12,
            max_epochs: 50,
            patience: None,
            clip: 1.0,
            init_std: 0.02,
            target_train_accuracy: None,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Shape(format!("d_model {} not divisible by {} heads", self.d_model, self.heads)));
        }
        if self.window < 3 || self.batch_size == 0 {
            return Err(Error::Shape("window must hold BOS, a token and EOS; batch must be positive".into()));
        }
        Ok(())
    }
}

pub fn init_params(cfg: &LmConfig, vocab: usize, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    let a = cfg.init_std * 3f64.sqrt();
    let d = cfg.d_model;
    p.add_uniform("tok", vocab, d, a, &mut rng);
    p.add_uniform("pos", cfg.window, d, a, &mut rng);
    for l in 0..cfg.layers {
        p.add_const(&format!("b{l}.ln1.g"), 1, d, 1.0);
        p.add_zeros(&format!("b{l}.ln1.b"), 1, d);
        p.add_uniform(&format!("b{l}.qkv.w"), d, 3 * d, a, &mut rng);
        p.add_zeros(&format!("b{l}.qkv.b"), 1, 3 * d);
        p.add_uniform(&format!("b{l}.proj.w"), d, d, a, &mut rng);
        p.add_zeros(&format!("b{l}.proj.b"), 1, d);
        p.add_const(&format!("b{l}.ln2.g"), 1, d, 1.0);
        p.add_zeros(&format!("b{l}.ln2.b"), 1, d);
        p.add_uniform(&format!("b{l}.ff1.w"), d, cfg.ffn, a, &mut rng);
        p.add_zeros(&format!("b{l}.ff1.b"), 1, cfg.ffn);
        p.add_uniform(&format!("b{l}.ff2.w"), cfg.ffn, d, a, &mut rng);
        p.add_zeros(&format!("b{l}.ff2.b"), 1, d);
    }
    p.add_const("lnf.g", 1, d, 1.0);
    p.add_zeros("lnf.b", 1, d);
    p
}

fn norm(g: &mut Graph, x: Var, name: &str) -> Var {
    let n = g.layer_norm(x);
    let gain = g.param_by_name(&format!("{name}.g"));
    let bias = g.param_by_name(&format!("{name}.b"));
    let y = g.mul_row(n, gain);
    g.add_row(y, bias)
}

fn causal_mask(t: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, t), |(i, j)| if j > i { -1e9 } else { 0.0 })
}

/// Next-token logits (T×V) for every position of `ids`.
pub fn forward(g: &mut Graph, cfg: &LmConfig, ids: &[usize]) -> Var {
    let t = ids.len();
    assert!(t >= 1 && t <= cfg.window, "sequence length {t} outside window {}", cfg.window);
    let tok = g.param_by_name("tok");
    let pos = g.param_by_name("pos");
    let te = g.gather_rows(tok, ids.to_vec());
    let pe = g.slice_rows(pos, 0, t);
    let mut h = g.add(te, pe);
    let mask = g.constant(causal_mask(t));
    let d = cfg.d_model;
    let dh = d / cfg.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    for l in 0..cfg.layers {
        let a = norm(g, h, &format!("b{l}.ln1"));
        let w = g.param_by_name(&format!("b{l}.qkv.w"));
        let b = g.param_by_name(&format!("b{l}.qkv.b"));
        let qkv = g.linear(a, w, b);
        let mut heads = Vec::with_capacity(cfg.heads);
        for k in 0..cfg.heads {
            let q = g.slice_cols(qkv, k * dh, (k + 1) * dh);
            let kk = g.slice_cols(qkv, d + k * dh, d + (k + 1) * dh);
            let v = g.slice_cols(qkv, 2 * d + k * dh, 2 * d + (k + 1) * dh);
            let s = g.matmul_t(q, kk);
            let s = g.scale(s, scale);
            let s = g.add(s, mask);
            let p = g.softmax_rows(s);
            heads.push(g.matmul(p, v));
        }
        let o = g.concat_cols(&heads);
        let w = g.param_by_name(&format!("b{l}.proj.w"));
        let b = g.param_by_name(&format!("b{l}.proj.b"));
        let o = g.linear(o, w, b);
        h = g.add(h, o);
        let a = norm(g, h, &format!("b{l}.ln2"));
        let w1 = g.param_by_name(&format!("b{l}.ff1.w"));
        let b1 = g.param_by_name(&format!("b{l}.ff1.b"));
        let w2 = g.param_by_name(&format!("b{l}.ff2.w"));
        let b2 = g.param_by_name(&format!("b{l}.ff2.b"));
        let f = g.linear(a, w1, b1);
        let f = g.relu(f);
        let f = g.linear(f, w2, b2);
        h = g.add(h, f);
    }
    let h = norm(g, h, "lnf");
    g.matmul_t(h, tok)
}

/// A prompt as model input: `[BOS] context target [EOS]`, with the context
/// cut from the left to fit the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub ids: Vec<usize>,
    /// Index in `ids` of the first continuation token.
    pub start: usize,
}

impl Sequence {
    pub fn new(p: &Prompt, vocab: &Vocab, window: usize) -> Self {
        let ctx = vocab.encode(&p.context);
        let tgt = vocab.encode(&p.target);
        let room = window.saturating_sub(tgt.len() + 2);
        assert!(room > 0 || ctx.is_empty(), "target of {} tokens leaves no context room", tgt.len());
        let ctx = &ctx[ctx.len().saturating_sub(room)..];
        let mut ids = vec![BOS];
        ids.extend_from_slice(ctx);
        let start = ids.len();
        ids.extend(tgt);
        ids.push(EOS);
        assert!(ids.len() <= window, "target does not fit the window");
        Sequence { ids, start }
    }

    /// Inputs, next-token targets and loss weights (continuation only).
    pub fn shifted(&self) -> (&[usize], &[usize], Vec<f64>) {
        let n = self.ids.len();
        let weights = (1..n).map(|j| if j >= self.start { 1.0 } else { 0.0 }).collect();
        (&self.ids[..n - 1], &self.ids[1..], weights)
    }
}

/// Masked continuation loss over a batch. Returns the mean-NLL node, the
/// correct argmax count and the continuation token count.
pub fn batch_loss(g: &mut Graph, cfg: &LmConfig, seqs: &[&Sequence]) -> (Var, usize, usize) {
    let mut logits = Vec::with_capacity(seqs.len());
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    for s in seqs {
        let (x, y, w) = s.shifted();
        logits.push(forward(g, cfg, x));
        targets.extend_from_slice(y);
        weights.extend(w);
    }
    let all = g.concat_rows(&logits);
    let z = g.value(all);
    let mut correct = 0;
    for (r, row) in z.rows().into_iter().enumerate() {
        if weights[r] > 0.0 && crate::data2text::argmax(row.iter().copied()) == targets[r] {
            correct += 1;
        }
    }
    let total = weights.iter().filter(|&&w| w > 0.0).count();
    (g.cross_entropy(all, targets, weights), correct, total)
}

/// Top-k candidates of `logits` and their temperature-scaled, renormalized
/// probabilities, most likely first. Ties keep the lower id.
pub fn top_k_distribution(logits: &[f64], top_k: usize, temperature: f64) -> Vec<(usize, f64)> {
    assert!(top_k >= 1 && temperature > 0.0);
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(top_k.min(logits.len()));
    let scaled = Array2::from_shape_fn((1, idx.len()), |(_, i)| logits[idx[i]] / temperature);
    let p = softmax_rows(&scaled);
    idx.into_iter().zip(p.iter().copied()).collect()
}

pub fn sample_from<R: Rng>(dist: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(id, p) in dist {
        acc += p;
        if u < acc {
            return id;
        }
    }
    dist.last().expect("empty distribution").0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub valid_perplexity: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LmMeta {
    pub config: LmConfig,
    pub vocab: Vocab,
    pub best_epoch: usize,
    pub best_valid_perplexity: f64,
    pub history: Vec<LmEpoch>,
}

#[derive(Clone, Debug)]
pub struct LmModel {
    pub params: ParamSet,
    pub meta: LmMeta,
}

/// Mean continuation NLL, correct count and token count over `seqs`.
pub fn evaluate(params: &ParamSet, cfg: &LmConfig, seqs: &[Sequence]) -> (f64, usize, usize) {
    let (mut loss, mut correct, mut total) = (0.0, 0, 0);
    for chunk in seqs.chunks(cfg.batch_size) {
        let mut g = Graph::new(params);
        let refs: Vec<&Sequence> = chunk.iter().collect();
        let (l, c, t) = batch_loss(&mut g, cfg, &refs);
        loss += g.scalar(l) * t as f64;
        correct += c;
        total += t;
    }
    (if total > 0 { loss / total as f64 } else { 0.0 }, correct, total)
}

impl LmModel {
    /// Trains with AdamW under linear warmup and decay; keeps the epoch with
    /// the lowest validation perplexity (training perplexity when `valid`
    /// is empty).
    pub fn train(train: &[Prompt], valid: &[Prompt], cfg: &LmConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::DegenerateData("no training prompts".into()));
        }
        let vocab = Vocab::build(
            train
                .iter()
                .flat_map(|p| p.context.iter().chain(&p.target))
                .map(String::as_str),
        );
        let tr: Vec<Sequence> = train.iter().map(|p| Sequence::new(p, &vocab, cfg.window)).collect();
        let va: Vec<Sequence> = valid.iter().map(|p| Sequence::new(p, &vocab, cfg.window)).collect();
        let mut params = init_params(cfg, vocab.len(), seed);
        let mut opt = AdamW::new(&params, cfg.lr, cfg.weight_decay);
        for (i, name) in params.names.iter().enumerate() {
            opt.no_decay[i] = name.ends_with(".b") || name.ends_with(".g");
        }
        let batches = tr.len().div_ceil(cfg.batch_size);
        let total_steps = batches * cfg.max_epochs;
        let warmup = ((cfg.warmup * total_steps as f64).ceil() as usize).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
        let mut order: Vec<usize> = (0..tr.len()).collect();
        let mut best = params.clone();
        let mut meta = LmMeta {
            config: cfg.clone(),
            vocab,
            best_epoch: 0,
            best_valid_perplexity: f64::INFINITY,
            history: Vec::new(),
        };
        let mut step = 0;
        for epoch in 1..=cfg.max_epochs {
            let t0 = Instant::now();
            order.shuffle(&mut rng);
            let (mut loss_sum, mut correct, mut total) = (0.0, 0, 0);
            for chunk in order.chunks(cfg.batch_size) {
                let (mut grads, loss, c, t) = {
                    let mut g = Graph::new(&params);
                    let seqs: Vec<&Sequence> = chunk.iter().map(|&i| &tr[i]).collect();
                    let (l, c, t) = batch_loss(&mut g, cfg, &seqs);
                    (g.backward(l), g.scalar(l), c, t)
                };
                if !loss.is_finite() || !grads_finite(&grads) {
                    return Err(Error::NonFiniteLoss {
                        stage: "train-lm",
                        epoch,
                        detail: format!("batch loss {loss}"),
                    });
                }
                clip_grad_norm(&mut grads, cfg.clip);
                opt.step(&mut params, &grads, warmup_linear(step, warmup, total_steps));
                step += 1;
                loss_sum += loss * t as f64;
                correct += c;
                total += t;
            }
            let held = if va.is_empty() { &tr } else { &va };
            let (vloss, vc, vt) = evaluate(&params, cfg, held);
            let stats = LmEpoch {
                epoch,
                loss: loss_sum / total.max(1) as f64,
                train_accuracy: correct as f64 / total.max(1) as f64,
                valid_perplexity: vloss.exp(),
                seconds: t0.elapsed().as_secs_f64(),
            };
            log::info!(
                "lm epoch {epoch}: loss {:.4} train acc {:.4} valid ppl {:.3} ({:.1}s)",
                stats.loss,
                stats.train_accuracy,
                stats.valid_perplexity,
                stats.seconds
            );
            let ppl = stats.valid_perplexity;
            meta.history.push(stats);
            if ppl < meta.best_valid_perplexity {
                meta.best_valid_perplexity = ppl;
                meta.best_epoch = epoch;
                best = params.clone();
            } else if cfg.patience.is_some_and(|p| epoch - meta.best_epoch >= p) {
                break;
            }
            let held_acc = vc as f64 / vt.max(1) as f64;
            if va.is_empty() && cfg.target_train_accuracy.is_some_and(|a| held_acc >= a) {
                break;
            }
        }
        Ok(LmModel { params: best, meta })
    }

    pub fn config(&self) -> &LmConfig {
        &self.meta.config
    }

    /// Next-token logits after `ids` (the last row of the forward pass).
    pub fn next_logits(&self, ids: &[usize]) -> Vec<f64> {
        let w = self.meta.config.window;
        let ids = &ids[ids.len().saturating_sub(w)..];
        let mut g = Graph::new(&self.params);
        let z = forward(&mut g, &self.meta.config, ids);
        g.value(z).row(ids.len() - 1).to_vec()
    }

    /// Samples a continuation of `context`.
    pub fn sample<R: Rng>(&self, context: &[String], top_k: usize, temperature: f64, max_len: usize, rng: &mut R) -> Vec<String> {
        let mut ids = vec![BOS];
        ids.extend(self.meta.vocab.encode(context));
        let mut out = Vec::new();
        while out.len() < max_len {
            let logits = self.next_logits(&ids);
            let next = sample_from(&top_k_distribution(&logits, top_k, temperature), rng);
            if next == EOS {
                break;
            }
            out.push(next);
            ids.push(next);
        }
        self.meta.vocab.decode(&out)
    }

    /// Teacher-forced continuation accuracy.
    pub fn accuracy(&self, prompts: &[Prompt]) -> f64 {
        let seqs: Vec<Sequence> = prompts
            .iter()
            .map(|p| Sequence::new(p, &self.meta.vocab, self.meta.config.window))
            .collect();
        let (_, c, t) = evaluate(&self.params, &self.meta.config, &seqs);
        c as f64 / t.max(1) as f64
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(&self.meta, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = ParamSet::load(path)?;
        Ok(LmModel { params, meta })
    }
}

/// The scene prompt and the simulation prompt for one solved task.
/// Boundaries are left out of the scene context.
pub fn task_prompts(objects: &[ObjectRecord], init_text: &[String], sim_text: &[String]) -> [Prompt; 2] {
    let objs: Vec<ObjectRecord> = objects
        .iter()
        .filter(|o| !matches!(o.shape, ShapeSpec::Boundary { .. }))
        .cloned()
        .collect();
    [
        Prompt {
            kind: PromptKind::Init,
            context: build_context_init(&objs),
            target: init_text.to_vec(),
        },
        Prompt {
            kind: PromptKind::Sim,
            context: build_context_sim(init_text),
            target: sim_text.to_vec(),
        },
    ]
}
