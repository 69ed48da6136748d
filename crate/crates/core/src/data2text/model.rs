use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Record, RecordTable};
use crate::nn::{Graph, ParamSet, Var};
use crate::vocab::{Vocab, BOS, EOS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Avg,
    BiLstm,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Avg => "avg",
            EncoderKind::BiLstm => "bilstm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct D2tConfig {
    pub encoder: EncoderKind,
    /// Embedding width of each of the four record features.
    pub feature_dim: usize,
    pub record_dim: usize,
    pub hidden: usize,
    pub memory: usize,
    pub token_dim: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a better validation accuracy.
    pub patience: Option<usize>,
    pub max_len: usize,
    pub init_scale: f64,
    /// Without a validation split, stop once training accuracy reaches this.
    pub target_train_accuracy: Option<f64>,
}

impl Default for D2tConfig {
    /// The desk configuration with the AVG encoder.
    fn default() -> Self {
        Self::desk(EncoderKind::Avg)
    }
}

impl D2tConfig {
    pub fn new(encoder: EncoderKind) -> Self {
        D2tConfig {
            encoder,
            feature_dim: 64,
            record_dim: 128,
            hidden: 128,
            memory: 128,
            token_dim: 64,
            lr: 1e-3,
            momentum: 0.9,
            clip: 5.0,
            batch_size: 8,
            max_epochs: 125,
            patience: None,
            max_len: 80,
            init_scale: 1.0,
            target_train_accuracy: None,
        }
    }

    /// Smaller widths and a larger step so all four models train in minutes
    /// on one core.
    pub fn desk(encoder: EncoderKind) -> Self {
        D2tConfig {
            feature_dim: 32,
            record_dim: 64,
            hidden: 64,
            memory: 64,
            token_dim: 32,
            lr: 0.3,
            max_epochs: 30,
            patience: Some(8),
            ..Self::new(encoder)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder == EncoderKind::Avg && self.record_dim != self.hidden {
            return Err(Error::Shape(format!(
                "AVG encoder initializes the decoder with a record mean: record_dim {} must equal hidden {}",
                self.record_dim, self.hidden
            )));
        }
        if self.encoder == EncoderKind::BiLstm && !self.record_dim.is_multiple_of(2) {
            return Err(Error::Shape("BiLSTM needs an even record_dim".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Shape("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Vocabularies of the four record features and of the output text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct D2tVocabs {
    pub values: Vocab,
    pub entities: Vocab,
    pub features: Vocab,
    pub segments: Vocab,
    pub text: Vocab,
}

impl D2tVocabs {
    pub fn build<'a>(tables: impl IntoIterator<Item = &'a RecordTable>, texts: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut values = Vec::new();
        let mut entities = Vec::new();
        let mut features = Vec::new();
        let mut segments = Vec::new();
        for t in tables {
            for r in &t.records {
                values.push(r.value.clone());
                entities.push(r.entity.clone());
                features.push(r.feature.to_string());
                segments.push(r.segment.to_string());
            }
        }
        let words: Vec<&str> = texts.into_iter().flat_map(|t| t.iter().map(String::as_str)).collect();
        D2tVocabs {
            values: Vocab::build(values.iter().map(String::as_str)),
            entities: Vocab::build(entities.iter().map(String::as_str)),
            features: Vocab::build(features.iter().map(String::as_str)),
            segments: Vocab::build(segments.iter().map(String::as_str)),
            text: Vocab::build(words),
        }
    }
}

/// A record table as feature ids, with each record's entity slot.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTable {
    pub ids: Vec<[usize; 4]>,
    /// Index of each record's entity among the table's distinct entities,
    /// numbered by first appearance.
    pub entity_of: Vec<usize>,
    pub n_entities: usize,
}

impl EncodedTable {
    pub fn new(table: &RecordTable, v: &D2tVocabs) -> Self {
        let mut names: Vec<&str> = Vec::new();
        let mut ids = Vec::with_capacity(table.records.len());
        let mut entity_of = Vec::with_capacity(table.records.len());
        for r in &table.records {
            let Record {
                value,
                entity,
                feature,
                segment,
            } = r;
            let k = names.iter().position(|n| n == entity).unwrap_or_else(|| {
                names.push(entity);
                names.len() - 1
            });
            entity_of.push(k);
            ids.push([
                v.values.id(value),
                v.entities.id(entity),
                v.features.id(&feature.to_string()),
                v.segments.id(&segment.to_string()),
            ]);
        }
        EncodedTable {
            ids,
            entity_of,
            n_entities: names.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn init_params(cfg: &D2tConfig, v: &D2tVocabs, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    let (f, rd, h, m, ey) = (cfg.feature_dim, cfg.record_dim, cfg.hidden, cfg.memory, cfg.token_dim);
    let s = cfg.init_scale;
    let mut glorot = |p: &mut ParamSet, name: &str, r: usize, c: usize| {
        let a = s * (6.0 / (r + c) as f64).sqrt();
        p.add_uniform(name, r, c, a, &mut rng);
    };
    glorot(&mut p, "emb.value", v.values.len(), f);
    glorot(&mut p, "emb.entity", v.entities.len(), f);
    glorot(&mut p, "emb.feature", v.features.len(), f);
    glorot(&mut p, "emb.segment", v.segments.len(), f);
    glorot(&mut p, "rec.w", 4 * f, rd);
    p.add_zeros("rec.b", 1, rd);
    if cfg.encoder == EncoderKind::BiLstm {
        let hd = rd / 2;
        for dir in ["fw", "bw"] {
            glorot(&mut p, &format!("{dir}.w"), rd + hd, 4 * hd);
            let id = p.add_zeros(&format!("{dir}.b"), 1, 4 * hd);
            p.values[id].slice_mut(ndarray::s![.., hd..2 * hd]).fill(1.0);
        }
        glorot(&mut p, "init.w", rd, h);
        p.add_zeros("init.b", 1, h);
    }
    glorot(&mut p, "mem.wi", rd, m);
    glorot(&mut p, "mem.wd", h, m);
    p.add_zeros("mem.bd", 1, m);
    glorot(&mut p, "mem.we", h, m);
    p.add_zeros("mem.be", 1, m);
    glorot(&mut p, "mem.wf", m, m);
    p.add_zeros("mem.bf", 1, m);
    glorot(&mut p, "mem.wg", h, m);
    glorot(&mut p, "att.wa", h, rd);
    glorot(&mut p, "att.wh", h, m);
    glorot(&mut p, "dec.emb", v.text.len(), ey);
    glorot(&mut p, "dec.w", ey + h + h, 4 * h);
    let id = p.add_zeros("dec.b", 1, 4 * h);
    p.values[id].slice_mut(ndarray::s![.., h..2 * h]).fill(1.0);
    glorot(&mut p, "out.wc", h + rd, h);
    glorot(&mut p, "out.wy", h, v.text.len());
    p.add_zeros("out.by", 1, v.text.len());
    p
}

/// One LSTM step on a batch. `w` maps `[x; h]` to the four gates
/// (input, forget, candidate, output).
pub fn lstm_cell(g: &mut Graph, x: Var, h: Var, c: Var, w: Var, b: Var) -> (Var, Var) {
    let n = g.value(h).ncols();
    let xh = g.concat_cols(&[x, h]);
    let z = g.linear(xh, w, b);
    let zi = g.slice_cols(z, 0, n);
    let zf = g.slice_cols(z, n, 2 * n);
    let zg = g.slice_cols(z, 2 * n, 3 * n);
    let zo = g.slice_cols(z, 3 * n, 4 * n);
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let fc = g.mul(f, c);
    let ic = g.mul(i, cand);
    let c2 = g.add(fc, ic);
    let tc = g.tanh(c2);
    let h2 = g.mul(o, tc);
    (h2, c2)
}

/// `r_j = ReLU(W_r [r_j1; r_j2; r_j3; r_j4] + b_r)` for every record of
/// every table, stacked in order.
pub fn embed_records(g: &mut Graph, tables: &[&EncodedTable]) -> Var {
    let names = ["emb.value", "emb.entity", "emb.feature", "emb.segment"];
    let mut cols = Vec::with_capacity(4);
    for (l, name) in names.iter().enumerate() {
        let table = g.param_by_name(name);
        let idx: Vec<usize> = tables.iter().flat_map(|t| t.ids.iter().map(|r| r[l])).collect();
        cols.push(g.gather_rows(table, idx));
    }
    let x = g.concat_cols(&cols);
    let w = g.param_by_name("rec.w");
    let b = g.param_by_name("rec.b");
    let z = g.linear(x, w, b);
    g.relu(z)
}

pub struct Encoded {
    /// Encoder outputs `e_j` per table.
    pub outputs: Vec<Var>,
    /// Initial entity memories `u_{-1,k}` per table (one row per entity).
    pub memories: Vec<Var>,
    /// Decoder initial hidden state, one row per table.
    pub d0: Var,
    pub entity_of: Vec<Vec<usize>>,
}

fn mask_col(g: &mut Graph, keep: &[bool]) -> (Var, Var) {
    let m = ndarray::Array2::from_shape_fn((keep.len(), 1), |(i, _)| if keep[i] { 1.0 } else { 0.0 });
    let inv = m.mapv(|v| 1.0 - v);
    (g.constant(m), g.constant(inv))
}

fn masked(g: &mut Graph, new: Var, old: Var, m: Var, inv: Var) -> Var {
    let a = g.mul_col(new, m);
    let b = g.mul_col(old, inv);
    g.add(a, b)
}

pub fn encode(g: &mut Graph, cfg: &D2tConfig, tables: &[&EncodedTable]) -> Encoded {
    assert!(tables.iter().all(|t| !t.is_empty()), "every table needs a record");
    let r = embed_records(g, tables);
    let mut offsets = Vec::with_capacity(tables.len());
    let mut off = 0;
    for t in tables {
        offsets.push(off);
        off += t.len();
    }
    // entity means x_k via one averaging matrix over the stacked records
    let total_k: usize = tables.iter().map(|t| t.n_entities).sum();
    let mut avg = ndarray::Array2::zeros((total_k, off));
    let mut k0 = 0;
    for (t, &o) in tables.iter().zip(&offsets) {
        let mut counts = vec![0usize; t.n_entities];
        for &k in &t.entity_of {
            counts[k] += 1;
        }
        for (j, &k) in t.entity_of.iter().enumerate() {
            avg[[k0 + k, o + j]] = 1.0 / counts[k] as f64;
        }
        k0 += t.n_entities;
    }
    let avg = g.constant(avg);
    let x = g.matmul(avg, r);
    let wi = g.param_by_name("mem.wi");
    let u_all = g.matmul(x, wi);
    let mut memories = Vec::with_capacity(tables.len());
    let mut k0 = 0;
    for t in tables {
        memories.push(g.slice_rows(u_all, k0, k0 + t.n_entities));
        k0 += t.n_entities;
    }

    let (outputs, d0) = match cfg.encoder {
        EncoderKind::Avg => {
            let outputs: Vec<Var> = tables
                .iter()
                .zip(&offsets)
                .map(|(t, &o)| g.slice_rows(r, o, o + t.len()))
                .collect();
            let means: Vec<Var> = outputs.iter().map(|&e| g.mean_rows(e)).collect();
            let d0 = g.concat_rows(&means);
            (outputs, d0)
        }
        EncoderKind::BiLstm => {
            let b = tables.len();
            let hd = cfg.record_dim / 2;
            let steps = tables.iter().map(|t| t.len()).max().unwrap_or(0);
            let inputs: Vec<Var> = (0..steps)
                .map(|s| {
                    let idx = tables
                        .iter()
                        .zip(&offsets)
                        .map(|(t, &o)| o + s.min(t.len() - 1))
                        .collect();
                    g.gather_rows(r, idx)
                })
                .collect();
            let masks: Vec<(Var, Var)> = (0..steps)
                .map(|s| {
                    let keep: Vec<bool> = tables.iter().map(|t| s < t.len()).collect();
                    mask_col(g, &keep)
                })
                .collect();
            let zero = g.constant(ndarray::Array2::zeros((b, hd)));
            let run = |g: &mut Graph, dir: &str, order: Vec<usize>| {
                let w = g.param_by_name(&format!("{dir}.w"));
                let bias = g.param_by_name(&format!("{dir}.b"));
                let (mut h, mut c) = (zero, zero);
                let mut states = vec![zero; steps];
                for s in order {
                    let (h2, c2) = lstm_cell(g, inputs[s], h, c, w, bias);
                    let (m, inv) = masks[s];
                    h = masked(g, h2, h, m, inv);
                    c = masked(g, c2, c, m, inv);
                    states[s] = h;
                }
                (states, h)
            };
            let (fw, fw_last) = run(g, "fw", (0..steps).collect());
            let (bw, bw_last) = run(g, "bw", (0..steps).rev().collect());
            let fw_all = g.concat_rows(&fw);
            let bw_all = g.concat_rows(&bw);
            let e_all = g.concat_cols(&[fw_all, bw_all]);
            let outputs = tables
                .iter()
                .enumerate()
                .map(|(i, t)| g.gather_rows(e_all, (0..t.len()).map(|s| s * b + i).collect()))
                .collect();
            let last = g.concat_cols(&[fw_last, bw_last]);
            let w = g.param_by_name("init.w");
            let bias = g.param_by_name("init.b");
            (outputs, g.linear(last, w, bias))
        }
    };
    Encoded {
        outputs,
        memories,
        d0,
        entity_of: tables.iter().map(|t| t.entity_of.clone()).collect(),
    }
}

pub struct MemoryUpdate {
    pub u: Var,
    pub gamma: Var,
    pub delta: Var,
}

/// Gated entity-memory update for one table, given the projections of its
/// decoder state `d_t`: `dw_d = W_d d + b_d`, `dw_e = W_e d + b_e` and
/// `dw_g = W_g d` (each 1×M).
pub fn memory_update_projected(g: &mut Graph, u: Var, dw_d: Var, dw_e: Var, dw_g: Var) -> MemoryUpdate {
    let wf = g.param_by_name("mem.wf");
    let bf = g.param_by_name("mem.bf");
    let gamma = g.sigmoid(dw_d);
    let fu = g.linear(u, wf, bf);
    let z = g.add_row(fu, dw_e);
    let s = g.sigmoid(z);
    let delta = g.mul_row(s, gamma);
    let keep = g.one_minus(delta);
    let old = g.mul(keep, u);
    let new = g.mul_row(delta, dw_g);
    let u = g.add(old, new);
    MemoryUpdate { u, gamma, delta }
}

/// Memory update from the decoder state `d` (1×H) directly.
pub fn update_entity_memory(g: &mut Graph, u: Var, d: Var) -> MemoryUpdate {
    let (wd, bd) = (g.param_by_name("mem.wd"), g.param_by_name("mem.bd"));
    let (we, be) = (g.param_by_name("mem.we"), g.param_by_name("mem.be"));
    let wg = g.param_by_name("mem.wg");
    let dd = g.linear(d, wd, bd);
    let de = g.linear(d, we, be);
    let dg = g.matmul(d, wg);
    memory_update_projected(g, u, dd, de, dg)
}

pub struct Attention {
    /// Context vector `q_t` (1×record_dim).
    pub q: Var,
    /// Record weights α, a column summing to 1 within each entity.
    pub alpha: Var,
    /// Entity weights φ, a column summing to 1.
    pub phi: Var,
}

/// Hierarchical attention for one table given `dw_a = d W_a` and
/// `dw_h = d W_h` (row vectors).
pub fn attention_projected(g: &mut Graph, e: Var, entity_of: &[usize], u: Var, dw_a: Var, dw_h: Var) -> Attention {
    let scores = g.matmul_t(e, dw_a);
    let alpha = g.group_softmax(scores, entity_of.to_vec());
    let escores = g.matmul_t(u, dw_h);
    let n_k = g.value(u).nrows();
    let phi = g.group_softmax(escores, vec![0; n_k]);
    let phi_j = g.gather_rows(phi, entity_of.to_vec());
    let w = g.mul(alpha, phi_j);
    let wt = g.transpose(w);
    let q = g.matmul(wt, e);
    Attention { q, alpha, phi }
}

pub fn hierarchical_attention(g: &mut Graph, e: Var, entity_of: &[usize], u: Var, d: Var) -> Attention {
    let wa = g.param_by_name("att.wa");
    let wh = g.param_by_name("att.wh");
    let da = g.matmul(d, wa);
    let dh = g.matmul(d, wh);
    attention_projected(g, e, entity_of, u, da, dh)
}

/// `d^att = tanh(W_c [d; q])`
pub fn attentional_vector(g: &mut Graph, d: Var, q: Var) -> Var {
    let wc = g.param_by_name("out.wc");
    let dq = g.concat_cols(&[d, q]);
    let z = g.matmul(dq, wc);
    g.tanh(z)
}

/// Output logits `W_y d^att + b_y`.
pub fn output_logits(g: &mut Graph, datt: Var) -> Var {
    let wy = g.param_by_name("out.wy");
    let by = g.param_by_name("out.by");
    g.linear(datt, wy, by)
}

/// Decoder state carried between steps for a batch of tables.
pub struct DecoderState {
    pub h: Var,
    pub c: Var,
    pub datt: Var,
    pub memories: Vec<Var>,
}

impl DecoderState {
    pub fn start(g: &mut Graph, cfg: &D2tConfig, enc: &Encoded) -> Self {
        let b = enc.outputs.len();
        let c = g.constant(ndarray::Array2::zeros((b, cfg.hidden)));
        let datt = g.constant(ndarray::Array2::zeros((b, cfg.hidden)));
        DecoderState {
            h: enc.d0,
            c,
            datt,
            memories: enc.memories.clone(),
        }
    }
}

/// Advances the decoder one token: recurrent step on
/// `[emb(prev); d^att_{t-1}]`, then memory update, then attention.
/// Returns `d^att_t` for the batch.
pub fn decode_step(g: &mut Graph, enc: &Encoded, st: &mut DecoderState, prev: &[usize]) -> Var {
    let emb = g.param_by_name("dec.emb");
    let x = g.gather_rows(emb, prev.to_vec());
    let xin = g.concat_cols(&[x, st.datt]);
    let w = g.param_by_name("dec.w");
    let b = g.param_by_name("dec.b");
    let (h, c) = lstm_cell(g, xin, st.h, st.c, w, b);
    st.h = h;
    st.c = c;

    let (wd, bd) = (g.param_by_name("mem.wd"), g.param_by_name("mem.bd"));
    let (we, be) = (g.param_by_name("mem.we"), g.param_by_name("mem.be"));
    let wg = g.param_by_name("mem.wg");
    let wa = g.param_by_name("att.wa");
    let wh = g.param_by_name("att.wh");
    let dd = g.linear(h, wd, bd);
    let de = g.linear(h, we, be);
    let dg = g.matmul(h, wg);
    let da = g.matmul(h, wa);
    let dh = g.matmul(h, wh);
    let mut qs = Vec::with_capacity(prev.len());
    for i in 0..prev.len() {
        let row = |g: &mut Graph, v: Var| g.slice_rows(v, i, i + 1);
        let (ddi, dei, dgi) = (row(g, dd), row(g, de), row(g, dg));
        let upd = memory_update_projected(g, st.memories[i], ddi, dei, dgi);
        st.memories[i] = upd.u;
        let (dai, dhi) = (row(g, da), row(g, dh));
        let att = attention_projected(g, enc.outputs[i], &enc.entity_of[i], upd.u, dai, dhi);
        qs.push(att.q);
    }
    let q = g.concat_rows(&qs);
    let datt = attentional_vector(g, h, q);
    st.datt = datt;
    datt
}

/// Teacher-forced loss on a batch. Returns the mean per-token NLL node,
/// the number of correct argmax predictions and the token count.
pub fn teacher_forced(g: &mut Graph, cfg: &D2tConfig, tables: &[&EncodedTable], targets: &[&[usize]]) -> (Var, usize, usize) {
    let enc = encode(g, cfg, tables);
    let mut st = DecoderState::start(g, cfg, &enc);
    let b = tables.len();
    let steps = targets.iter().map(|t| t.len() + 1).max().unwrap_or(1);
    let mut prev = vec![BOS; b];
    let mut outs = Vec::with_capacity(steps);
    let mut gold = Vec::with_capacity(steps * b);
    let mut weights = Vec::with_capacity(steps * b);
    for s in 0..steps {
        outs.push(decode_step(g, &enc, &mut st, &prev));
        for (i, t) in targets.iter().enumerate() {
            let (tok, w) = match s.cmp(&t.len()) {
                std::cmp::Ordering::Less => (t[s], 1.0),
                std::cmp::Ordering::Equal => (EOS, 1.0),
                std::cmp::Ordering::Greater => (EOS, 0.0),
            };
            gold.push(tok);
            weights.push(w);
            prev[i] = tok;
        }
    }
    let all = g.concat_rows(&outs);
    let logits = output_logits(g, all);
    let z = g.value(logits);
    let mut correct = 0;
    for (r, row) in z.rows().into_iter().enumerate() {
        if weights[r] > 0.0 {
            let best = argmax(row.iter().copied());
            if best == gold[r] {
                correct += 1;
            }
        }
    }
    let total = weights.iter().filter(|&&w| w > 0.0).count();
    let loss = g.cross_entropy(logits, gold, weights);
    (loss, correct, total)
}

pub fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Greedy decoding until EOS or `max_len` tokens.
pub fn generate_ids(params: &ParamSet, cfg: &D2tConfig, table: &EncodedTable, max_len: usize) -> Vec<usize> {
    if table.is_empty() {
        return Vec::new();
    }
    let mut g = Graph::new(params);
    let enc = encode(&mut g, cfg, &[table]);
    let mut st = DecoderState::start(&mut g, cfg, &enc);
    let mut prev = BOS;
    let mut out = Vec::new();
    while out.len() < max_len {
        let datt = decode_step(&mut g, &enc, &mut st, &[prev]);
        let logits = output_logits(&mut g, datt);
        let next = argmax(g.value(logits).iter().copied());
        if next == EOS {
            break;
        }
        out.push(next);
        prev = next;
    }
    out
}
