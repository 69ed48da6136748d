use ndarray::{array, Array2};
use qualsim::data2text::*;
use qualsim::dataset::{build_example, Seeds};
use qualsim::events::RecordTable;
use qualsim::nn::{grad_check, Graph, ParamSet};
use qualsim::tasks::builtin_templates;
use qualsim::vocab::EOS;

fn table(lines: &[&str]) -> RecordTable {
    RecordTable::from_lines(&lines.join("\n")).unwrap()
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(String::from).collect()
}

fn toy_pairs() -> Vec<(RecordTable, Vec<String>)> {
    vec![
        (
            table(&[
                "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
                "dynamic|red_circle_1|OBJ_STATE|INITIAL_STATE",
                "green|green_circle_1|OBJ_COLOR|INITIAL_STATE",
                "40|green_circle_1|X|INITIAL_STATE",
                "12|red_circle_1|TIMESTEP|EVENT_1",
            ]),
            words("the red ball hits the green ball ."),
        ),
        (
            table(&[
                "black|black_bar_1|OBJ_COLOR|INITIAL_STATE",
                "90|black_bar_1|X|INITIAL_STATE",
                "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
            ]),
            words("the red ball lands on the black bar ."),
        ),
    ]
}

fn tiny(encoder: EncoderKind, d: usize) -> D2tConfig {
    D2tConfig {
        feature_dim: d,
        record_dim: d,
        hidden: d,
        memory: d,
        token_dim: d,
        ..D2tConfig::new(encoder)
    }
}

fn setup(cfg: &D2tConfig, seed: u64) -> (ParamSet, D2tVocabs, Vec<Example>) {
    let pairs = toy_pairs();
    let v = D2tVocabs::build(pairs.iter().map(|p| &p.0), pairs.iter().map(|p| p.1.as_slice()));
    let p = init_params(cfg, &v, seed);
    let ex = encode_pairs(&pairs, &v);
    (p, v, ex)
}

#[test]
fn record_embeddings_match_hand_product() {
    let cfg = D2tConfig {
        feature_dim: 1,
        record_dim: 2,
        ..tiny(EncoderKind::Avg, 2)
    };
    let (mut p, _, ex) = setup(&cfg, 1);
    // embedding value = id + 1 in every table
    for name in ["emb.value", "emb.entity", "emb.feature", "emb.segment"] {
        let e = p.get_mut(name);
        for (i, v) in e.iter_mut().enumerate() {
            *v = i as f64 + 1.0;
        }
    }
    *p.get_mut("rec.w") = array![[1.0, -1.0], [0.5, 0.0], [0.0, 2.0], [-1.0, 1.0]];
    *p.get_mut("rec.b") = array![[0.25, -30.0]];
    let mut g = Graph::new(&p);
    let r = embed_records(&mut g, &[&ex[0].table]);
    let r = g.value(r).clone();
    for (j, ids) in ex[0].table.ids.iter().enumerate() {
        let x: Vec<f64> = ids.iter().map(|&i| i as f64 + 1.0).collect();
        let a = x[0] + 0.5 * x[1] - x[3] + 0.25;
        let b = -x[0] + 2.0 * x[2] + x[3] - 30.0;
        assert_eq!(r[[j, 0]], a.max(0.0));
        assert_eq!(r[[j, 1]], b.max(0.0));
    }
}

#[test]
fn embeddings_are_nonnegative_and_pure() {
    let cfg = tiny(EncoderKind::Avg, 8);
    let (p, v, _) = setup(&cfg, 2);
    let t = table(&[
        "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
        "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
        "7|green_circle_1|X|EVENT_1",
    ]);
    let enc = EncodedTable::new(&t, &v);
    let mut g = Graph::new(&p);
    let r = embed_records(&mut g, &[&enc]);
    let r = g.value(r);
    assert!(r.iter().all(|&x| x >= 0.0));
    assert_eq!(r.row(0), r.row(1));
}

#[test]
fn avg_encoder_initial_state() {
    let cfg = tiny(EncoderKind::Avg, 4);
    let (p, v, _) = setup(&cfg, 3);
    let one = EncodedTable::new(&table(&["red|red_circle_1|OBJ_COLOR|INITIAL_STATE"]), &v);
    let mut g = Graph::new(&p);
    let enc = encode(&mut g, &cfg, &[&one]);
    let r = embed_records(&mut g, &[&one]);
    assert_eq!(g.value(enc.d0), g.value(r));
    // x_k of a one-record entity is that record; with W_i = I the memory is x_k
    let mut p2 = p.clone();
    *p2.get_mut("mem.wi") = Array2::eye(4);
    let mut g = Graph::new(&p2);
    let enc = encode(&mut g, &cfg, &[&one]);
    let r = embed_records(&mut g, &[&one]);
    assert_eq!(g.value(enc.memories[0]), g.value(r));
}

#[test]
fn avg_is_permutation_invariant_bilstm_is_not() {
    let lines = [
        "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
        "40|green_circle_1|X|INITIAL_STATE",
        "12|red_circle_1|TIMESTEP|EVENT_1",
    ];
    let rev: Vec<&str> = lines.iter().rev().copied().collect();
    for (kind, invariant) in [(EncoderKind::Avg, true), (EncoderKind::BiLstm, false)] {
        let cfg = tiny(kind, 4);
        let (p, v, _) = setup(&cfg, 4);
        let a = EncodedTable::new(&table(&lines), &v);
        let b = EncodedTable::new(&table(&rev), &v);
        let mut g = Graph::new(&p);
        let ea = encode(&mut g, &cfg, &[&a]);
        let eb = encode(&mut g, &cfg, &[&b]);
        let diff = (g.value(ea.d0) - g.value(eb.d0)).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert_eq!(diff < 1e-12, invariant, "{kind:?} diff {diff}");
    }
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar LSTM step with gates ordered (i, f, g, o) over `[x; h]`.
fn manual_lstm(x: &[f64], h: &[f64], c: &[f64], w: &Array2<f64>, b: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let xh: Vec<f64> = x.iter().chain(h).copied().collect();
    let z: Vec<f64> = (0..4 * n)
        .map(|k| b[[0, k]] + xh.iter().enumerate().map(|(i, v)| v * w[[i, k]]).sum::<f64>())
        .collect();
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for u in 0..n {
        let i = sig(z[u]);
        let f = sig(z[n + u]);
        let g = z[2 * n + u].tanh();
        let o = sig(z[3 * n + u]);
        c2[u] = f * c[u] + i * g;
        h2[u] = o * c2[u].tanh();
    }
    (h2, c2)
}

#[test]
fn bilstm_matches_manual_recurrence() {
    // record_dim 2: one unit per direction
    let cfg = tiny(EncoderKind::BiLstm, 2);
    let (p, v, _) = setup(&cfg, 5);
    let t = EncodedTable::new(
        &table(&[
            "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
            "40|green_circle_1|X|INITIAL_STATE",
            "12|red_circle_1|TIMESTEP|EVENT_1",
        ]),
        &v,
    );
    let mut g = Graph::new(&p);
    let enc = encode(&mut g, &cfg, &[&t]);
    let r = embed_records(&mut g, &[&t]);
    let r = g.value(r).clone();
    let e = g.value(enc.outputs[0]).clone();
    let xs: Vec<Vec<f64>> = r.rows().into_iter().map(|row| row.to_vec()).collect();
    let run = |dir: &str, order: Vec<usize>| {
        let (w, b) = (p.get(&format!("{dir}.w")), p.get(&format!("{dir}.b")));
        let (mut h, mut c) = (vec![0.0], vec![0.0]);
        let mut out = vec![0.0; 3];
        for j in order {
            (h, c) = manual_lstm(&xs[j], &h, &c, w, b);
            out[j] = h[0];
        }
        (out, h[0])
    };
    let (fw, fl) = run("fw", vec![0, 1, 2]);
    let (bw, bl) = run("bw", vec![2, 1, 0]);
    for j in 0..3 {
        assert!((e[[j, 0]] - fw[j]).abs() < 1e-12);
        assert!((e[[j, 1]] - bw[j]).abs() < 1e-12);
    }
    let (w, b) = (p.get("init.w"), p.get("init.b"));
    let d0 = g.value(enc.d0);
    for k in 0..2 {
        let want = fl * w[[0, k]] + bl * w[[1, k]] + b[[0, k]];
        assert!((d0[[0, k]] - want).abs() < 1e-12);
    }
}

#[test]
fn initial_memory_is_entity_local() {
    let cfg = tiny(EncoderKind::Avg, 4);
    let (p, v, _) = setup(&cfg, 6);
    let a = EncodedTable::new(
        &table(&[
            "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
            "40|green_circle_1|X|INITIAL_STATE",
        ]),
        &v,
    );
    let b = EncodedTable::new(
        &table(&[
            "red|red_circle_1|OBJ_COLOR|INITIAL_STATE",
            "90|green_circle_1|X|INITIAL_STATE",
        ]),
        &v,
    );
    let mut g = Graph::new(&p);
    let ua = encode(&mut g, &cfg, &[&a]).memories[0];
    let ub = encode(&mut g, &cfg, &[&b]).memories[0];
    assert_eq!(g.value(ua).row(0), g.value(ub).row(0));
    assert_ne!(g.value(ua).row(1), g.value(ub).row(1));
}

#[test]
fn memory_update_endpoints_and_scalar_oracle() {
    let cfg = tiny(EncoderKind::Avg, 3);
    let (mut p, _, _) = setup(&cfg, 7);
    let u0 = array![[0.3, -0.7, 1.1], [2.0, 0.1, -0.4]];
    let d0 = array![[0.5, -0.2, 0.9]];

    // scalar-by-scalar evaluation of the gate equations
    {
        let mut g = Graph::new(&p);
        let u = g.constant(u0.clone());
        let d = g.constant(d0.clone());
        let upd = update_entity_memory(&mut g, u, d);
        let got = g.value(upd.u);
        let (wd, bd, we, be) = (p.get("mem.wd"), p.get("mem.bd"), p.get("mem.we"), p.get("mem.be"));
        let (wf, bf, wg) = (p.get("mem.wf"), p.get("mem.bf"), p.get("mem.wg"));
        for k in 0..2 {
            for m in 0..3 {
                let dot = |w: &Array2<f64>, x: &[f64]| x.iter().enumerate().map(|(i, v)| v * w[[i, m]]).sum::<f64>();
                let d: Vec<f64> = d0.row(0).to_vec();
                let uk: Vec<f64> = u0.row(k).to_vec();
                let gamma = sig(dot(wd, &d) + bd[[0, m]]);
                let delta = gamma * sig(dot(we, &d) + be[[0, m]] + dot(wf, &uk) + bf[[0, m]]);
                let cand = dot(wg, &d);
                let want = (1.0 - delta) * uk[m] + delta * cand;
                assert!((got[[k, m]] - want).abs() < 1e-14);
                assert!(gamma > 0.0 && gamma < 1.0 && delta > 0.0 && delta < 1.0);
            }
        }
    }

    // δ → 0: memories bitwise unchanged
    p.get_mut("mem.be").fill(-50.0);
    p.get_mut("mem.bf").fill(-50.0);
    {
        let mut g = Graph::new(&p);
        let u = g.constant(u0.clone());
        let d = g.constant(d0.clone());
        let upd = update_entity_memory(&mut g, u, d);
        assert_eq!(g.value(upd.u), &u0);
    }

    // δ → 1: memories become W_g d
    p.get_mut("mem.bd").fill(50.0);
    p.get_mut("mem.be").fill(50.0);
    p.get_mut("mem.bf").fill(50.0);
    let mut g = Graph::new(&p);
    let u = g.constant(u0.clone());
    let d = g.constant(d0.clone());
    let upd = update_entity_memory(&mut g, u, d);
    let cand = d0.dot(p.get("mem.wg"));
    for k in 0..2 {
        for m in 0..3 {
            assert!((g.value(upd.u)[[k, m]] - cand[[0, m]]).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_toy_matches_hand_softmax() {
    let cfg = tiny(EncoderKind::Avg, 2);
    let (mut p, _, _) = setup(&cfg, 8);
    *p.get_mut("att.wa") = Array2::eye(2);
    *p.get_mut("att.wh") = Array2::eye(2);
    // two entities with two records each
    let e0 = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [-1.0, 2.0]];
    let entity_of = [0, 1, 0, 1];
    let u0 = array![[1.0, 1.0], [0.0, -1.0]];
    let d0 = array![[2.0, -1.0]];
    let mut g = Graph::new(&p);
    let e = g.constant(e0.clone());
    let u = g.constant(u0.clone());
    let d = g.constant(d0.clone());
    let att = hierarchical_attention(&mut g, e, &entity_of, u, d);
    // scores d·g: 2, -1, 0.5, -4; d·u: 1, 1
    let a0 = [2f64.exp() / (2f64.exp() + 0.5f64.exp()), 0.5f64.exp() / (2f64.exp() + 0.5f64.exp())];
    let a1 = [(-1f64).exp() / ((-1f64).exp() + (-4f64).exp()), (-4f64).exp() / ((-1f64).exp() + (-4f64).exp())];
    let alpha = g.value(att.alpha);
    assert!((alpha[[0, 0]] - a0[0]).abs() < 1e-12);
    assert!((alpha[[2, 0]] - a0[1]).abs() < 1e-12);
    assert!((alpha[[1, 0]] - a1[0]).abs() < 1e-12);
    assert!((alpha[[3, 0]] - a1[1]).abs() < 1e-12);
    let phi = g.value(att.phi);
    assert!((phi[[0, 0]] - 0.5).abs() < 1e-12 && (phi[[1, 0]] - 0.5).abs() < 1e-12);
    let s0 = [a0[0] * 1.0 + a0[1] * 0.5, a0[0] * 0.0 + a0[1] * 0.5];
    let s1 = [a1[0] * 0.0 + -a1[1], a1[0] * 1.0 + a1[1] * 2.0];
    let q = g.value(att.q);
    for m in 0..2 {
        assert!((q[[0, m]] - 0.5 * (s0[m] + s1[m])).abs() < 1e-12);
    }
}

#[test]
fn single_record_attention_is_trivial() {
    let cfg = tiny(EncoderKind::Avg, 3);
    let (p, _, _) = setup(&cfg, 9);
    let mut g = Graph::new(&p);
    let e = g.constant(array![[0.2, -0.3, 0.9]]);
    let u = g.constant(array![[1.0, 2.0, 3.0]]);
    let d = g.constant(array![[0.1, 0.1, -0.5]]);
    let att = hierarchical_attention(&mut g, e, &[0], u, d);
    assert_eq!(g.value(att.alpha)[[0, 0]], 1.0);
    assert_eq!(g.value(att.phi)[[0, 0]], 1.0);
    assert_eq!(g.value(att.q), g.value(e));
}

#[test]
fn attention_and_outputs_are_normalized() {
    for seed in 0..5 {
        let cfg = tiny(EncoderKind::BiLstm, 6);
        let (p, _, ex) = setup(&cfg, seed);
        let mut g = Graph::new(&p);
        let enc = encode(&mut g, &cfg, &[&ex[0].table]);
        let mut st = DecoderState::start(&mut g, &cfg, &enc);
        let datt = decode_step(&mut g, &enc, &mut st, &[ex[0].target[0]]);
        let d = st.h;
        let att = hierarchical_attention(&mut g, enc.outputs[0], &enc.entity_of[0], st.memories[0], d);
        let alpha = g.value(att.alpha);
        for k in 0..ex[0].table.n_entities {
            let s: f64 = ex[0].table.entity_of.iter().zip(alpha.iter()).filter(|(&e, _)| e == k).map(|(_, a)| a).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        assert!((g.value(att.phi).sum() - 1.0).abs() < 1e-6);
        assert!(g.value(datt).iter().all(|&x| x > -1.0 && x < 1.0));
        let logits = output_logits(&mut g, datt);
        let probs = g.softmax_rows(logits);
        let pr = g.value(probs);
        assert!((pr.sum() - 1.0).abs() < 1e-9);
        assert!(pr.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn zero_output_layer_is_uniform() {
    let cfg = tiny(EncoderKind::Avg, 4);
    let (mut p, v, ex) = setup(&cfg, 10);
    p.get_mut("out.wy").fill(0.0);
    p.get_mut("out.by").fill(0.0);
    let mut g = Graph::new(&p);
    let enc = encode(&mut g, &cfg, &[&ex[1].table]);
    let mut st = DecoderState::start(&mut g, &cfg, &enc);
    let datt = decode_step(&mut g, &enc, &mut st, &[2]);
    let logits = output_logits(&mut g, datt);
    let probs = g.softmax_rows(logits);
    let n = v.text.len() as f64;
    assert!(g.value(probs).iter().all(|&x| (x - 1.0 / n).abs() < 1e-15));
}

#[test]
fn gradients_match_finite_differences() {
    for kind in [EncoderKind::Avg, EncoderKind::BiLstm] {
        for seed in [11, 12, 13] {
            let cfg = D2tConfig {
                init_scale: 2.0,
                ..tiny(kind, 2)
            };
            let (mut p, _, ex) = setup(&cfg, seed);
            let tables: Vec<&EncodedTable> = ex.iter().map(|e| &e.table).collect();
            let targets: Vec<&[usize]> = ex.iter().map(|e| e.target.as_slice()).collect();
            let err = grad_check(
                &mut p,
                |g| teacher_forced(g, &cfg, &tables, &targets).0,
                1e-4,
                1e-7,
            );
            assert!(err < 1e-4, "{kind:?} seed {seed}: relative error {err}");
        }
    }
}

fn corpus(n_per_template: usize) -> Vec<(RecordTable, Vec<String>)> {
    let seeds = Seeds {
        tasks: 1,
        solver: 2,
        text: 3,
        split: 4,
    };
    let mut out = Vec::new();
    for t in builtin_templates() {
        for i in 0..n_per_template {
            let ex = build_example(&t, i, &seeds, 10_000).unwrap().unwrap();
            out.push((RecordTable::from_lines(&ex.records.join("\n")).unwrap(), ex.sim_text));
        }
    }
    out
}

#[test]
fn first_epoch_loss_is_near_log_vocab() {
    let pairs = corpus(2);
    let cfg = D2tConfig {
        max_epochs: 1,
        ..D2tConfig::new(EncoderKind::Avg)
    };
    let m = D2tModel::train(&pairs, &[], &cfg, 1).unwrap();
    let ln_v = (m.meta.vocabs.text.len() as f64).ln();
    let loss = m.meta.history[0].loss;
    assert!((loss - ln_v).abs() <= 0.1 * ln_v, "loss {loss} vs ln|V| {ln_v}");
}

#[test]
fn overfits_twenty_pairs() {
    let pairs = corpus(4);
    assert_eq!(pairs.len(), 20);
    for kind in [EncoderKind::Avg, EncoderKind::BiLstm] {
        let cfg = D2tConfig {
            max_epochs: 500,
            patience: None,
            target_train_accuracy: Some(0.97),
            ..D2tConfig::desk(kind)
        };
        let m = D2tModel::train(&pairs, &[], &cfg, 3).unwrap();
        let acc = m.accuracy(&pairs);
        assert!(acc >= 0.95, "{kind:?}: accuracy {acc} after {} epochs", m.meta.history.len());
    }
}

#[test]
fn single_pair_is_memorized() {
    let pairs = vec![toy_pairs().remove(0)];
    let cfg = D2tConfig {
        max_epochs: 300,
        patience: None,
        target_train_accuracy: Some(1.0),
        ..D2tConfig::desk(EncoderKind::Avg)
    };
    let m = D2tModel::train(&pairs, &[], &cfg, 4).unwrap();
    let out = m.generate(&pairs[0].0, 40);
    assert_eq!(out, pairs[0].1);
    // greedy decoding is deterministic and bounded
    assert_eq!(m.generate(&pairs[0].0, 40), out);
    assert!(m.generate(&pairs[0].0, 3).len() <= 3);
    let ids = generate_ids(&m.params, m.config(), &m.encode_table(&pairs[0].0), 40);
    assert!(!ids.contains(&EOS));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    let back = D2tModel::load(&path).unwrap();
    assert_eq!(back.params.values, m.params.values);
    assert_eq!(back.generate(&pairs[0].0, 40), out);
}
