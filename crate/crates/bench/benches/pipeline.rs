use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qualsim::data2text::{D2tConfig, D2tModel, EncoderKind};
use qualsim::eval::{bleu, meteor, rouge_l};
use qualsim::events::RecordTable;
use qualsim::lm::{forward, init_params, LmConfig};
use qualsim::nn::Graph;
use qualsim::physics::{random_scene, simulate};
use qualsim::saliency::{DecisionTree, TreeConfig};
use qualsim::tasks::{builtin_templates, instantiate, solve};
use qualsim_bench::{examples, rows, SEEDS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn physics(c: &mut Criterion) {
    let scene = random_scene(&mut ChaCha8Rng::seed_from_u64(3), 8);
    c.bench_function("simulate 300 frames, 8 objects", |b| b.iter(|| simulate(black_box(&scene), 300)));
    let task = instantiate(&builtin_templates()[0], 0, SEEDS.tasks).unwrap();
    c.bench_function("solve one task", |b| b.iter(|| solve(black_box(&task), 10_000, SEEDS.solver)));
}

fn saliency(c: &mut Criterion) {
    let (x, y) = rows(5000, 1);
    c.bench_function("tree on 5000 events", |b| {
        b.iter(|| DecisionTree::train(black_box(&x), &y, &TreeConfig::default()))
    });
}

fn text(c: &mut Criterion) {
    let ex = examples();
    let pairs: Vec<(RecordTable, Vec<String>)> = ex
        .iter()
        .map(|e| (RecordTable::from_lines(&e.records.join("\n")).unwrap(), e.sim_text.clone()))
        .collect();
    let cfg = D2tConfig {
        max_epochs: 1,
        ..D2tConfig::desk(EncoderKind::Avg)
    };
    let m = D2tModel::train(&pairs, &[], &cfg, 1).unwrap();
    c.bench_function("data2text greedy decode", |b| b.iter(|| m.generate(black_box(&pairs[0].0), 80)));

    let lm = LmConfig::default();
    let params = init_params(&lm, 50, 1);
    let ids: Vec<usize> = (0..120).map(|i| 4 + i % 40).collect();
    c.bench_function("lm forward, 120 tokens", |b| {
        b.iter(|| {
            let mut g = Graph::new(&params);
            forward(&mut g, &lm, black_box(&ids))
        })
    });

    let cands: Vec<Vec<String>> = ex.iter().map(|e| e.init_text.clone()).collect();
    let refs: Vec<Vec<String>> = ex.iter().rev().map(|e| e.init_text.clone()).collect();
    c.bench_function("metrics on 5 pairs", |b| {
        b.iter(|| (bleu(&cands, &refs, 2), rouge_l(&cands, &refs), meteor(&cands, &refs)))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = physics, saliency, text
}
criterion_main!(benches);
