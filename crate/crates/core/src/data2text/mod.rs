//! Entity-based table-to-text generation with AVG or BiLSTM record encoders.

mod model;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::RecordTable;
use crate::nn::{clip_grad_norm, grads_finite, Graph, ParamSet, SgdMomentum};

pub use model::*;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-token training NLL.
    pub loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct D2tMeta {
    pub config: D2tConfig,
    pub vocabs: D2tVocabs,
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
    pub history: Vec<EpochStats>,
}

#[derive(Clone, Debug)]
pub struct D2tModel {
    pub params: ParamSet,
    pub meta: D2tMeta,
}

/// A table and its reference text, both encoded.
pub struct Example {
    pub table: EncodedTable,
    pub target: Vec<usize>,
}

pub fn encode_pairs(pairs: &[(RecordTable, Vec<String>)], v: &D2tVocabs) -> Vec<Example> {
    pairs
        .iter()
        .map(|(t, text)| Example {
            table: EncodedTable::new(t, v),
            target: v.text.encode(text),
        })
        .collect()
}

/// Teacher-forced (loss, correct, total) over `data`, in batches, without
/// gradients.
pub fn evaluate_tf(params: &ParamSet, cfg: &D2tConfig, data: &[Example]) -> (f64, usize, usize) {
    let mut loss = 0.0;
    let (mut correct, mut total) = (0, 0);
    for chunk in data.chunks(cfg.batch_size) {
        let mut g = Graph::new(params);
        let tables: Vec<&EncodedTable> = chunk.iter().map(|e| &e.table).collect();
        let targets: Vec<&[usize]> = chunk.iter().map(|e| e.target.as_slice()).collect();
        let (l, c, t) = teacher_forced(&mut g, cfg, &tables, &targets);
        loss += g.scalar(l) * t as f64;
        correct += c;
        total += t;
    }
    (if total > 0 { loss / total as f64 } else { 0.0 }, correct, total)
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl D2tModel {
    /// Trains on `train` and keeps the epoch with the best teacher-forced
    /// validation accuracy (training accuracy when `valid` is empty).
    pub fn train(
        train: &[(RecordTable, Vec<String>)],
        valid: &[(RecordTable, Vec<String>)],
        cfg: &D2tConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(Error::DegenerateData("no training pairs".into()));
        }
        if train.iter().chain(valid).any(|(t, _)| t.records.is_empty()) {
            return Err(Error::DegenerateData("empty record table".into()));
        }
        let vocabs = D2tVocabs::build(train.iter().map(|p| &p.0), train.iter().map(|p| p.1.as_slice()));
        let tr = encode_pairs(train, &vocabs);
        let va = encode_pairs(valid, &vocabs);
        let mut params = init_params(cfg, &vocabs, seed);
        let mut opt = SgdMomentum::new(&params, cfg.lr, cfg.momentum);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd2d2);
        let mut order: Vec<usize> = (0..tr.len()).collect();
        let mut best = params.clone();
        let mut meta = D2tMeta {
            config: cfg.clone(),
            vocabs,
            best_epoch: 0,
            best_valid_accuracy: -1.0,
            history: Vec::new(),
        };
        for epoch in 1..=cfg.max_epochs {
            let t0 = Instant::now();
            order.shuffle(&mut rng);
            let (mut loss_sum, mut correct, mut total) = (0.0, 0, 0);
            for chunk in order.chunks(cfg.batch_size) {
                let (mut grads, loss, c, t) = {
                    let mut g = Graph::new(&params);
                    let tables: Vec<&EncodedTable> = chunk.iter().map(|&i| &tr[i].table).collect();
                    let targets: Vec<&[usize]> = chunk.iter().map(|&i| tr[i].target.as_slice()).collect();
                    let (l, c, t) = teacher_forced(&mut g, cfg, &tables, &targets);
                    (g.backward(l), g.scalar(l), c, t)
                };
                if !loss.is_finite() || !grads_finite(&grads) {
                    return Err(Error::NonFiniteLoss {
                        stage: "train-nlg",
                        epoch,
                        detail: format!("batch loss {loss}"),
                    });
                }
                clip_grad_norm(&mut grads, cfg.clip);
                opt.step(&mut params, &grads);
                loss_sum += loss * t as f64;
                correct += c;
                total += t;
            }
            let train_accuracy = ratio(correct, total);
            // without a validation split, score the training set after the epoch
            let held = if va.is_empty() { &tr } else { &va };
            let (_, c, t) = evaluate_tf(&params, cfg, held);
            let valid_accuracy = ratio(c, t);
            let stats = EpochStats {
                epoch,
                loss: loss_sum / total.max(1) as f64,
                train_accuracy,
                valid_accuracy,
                seconds: t0.elapsed().as_secs_f64(),
            };
            log::info!(
                "{} epoch {epoch}: loss {:.4} train acc {:.4} valid acc {:.4} ({:.1}s)",
                cfg.encoder.name(),
                stats.loss,
                stats.train_accuracy,
                stats.valid_accuracy,
                stats.seconds
            );
            meta.history.push(stats);
            if valid_accuracy > meta.best_valid_accuracy {
                meta.best_valid_accuracy = valid_accuracy;
                meta.best_epoch = epoch;
                best = params.clone();
            } else if cfg.patience.is_some_and(|p| epoch - meta.best_epoch >= p) {
                break;
            }
            if va.is_empty() && cfg.target_train_accuracy.is_some_and(|a| valid_accuracy >= a) {
                break;
            }
        }
        Ok(D2tModel { params: best, meta })
    }

    pub fn config(&self) -> &D2tConfig {
        &self.meta.config
    }

    pub fn encode_table(&self, table: &RecordTable) -> EncodedTable {
        EncodedTable::new(table, &self.meta.vocabs)
    }

    pub fn generate(&self, table: &RecordTable, max_len: usize) -> Vec<String> {
        let enc = self.encode_table(table);
        let ids = generate_ids(&self.params, &self.meta.config, &enc, max_len);
        self.meta.vocabs.text.decode(&ids)
    }

    /// Teacher-forced token accuracy on `pairs`.
    pub fn accuracy(&self, pairs: &[(RecordTable, Vec<String>)]) -> f64 {
        let data = encode_pairs(pairs, &self.meta.vocabs);
        let (_, c, t) = evaluate_tf(&self.params, &self.meta.config, &data);
        ratio(c, t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(&self.meta, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = ParamSet::load(path)?;
        Ok(D2tModel { params, meta })
    }
}
