use std::fs;
use std::sync::OnceLock;

use qualsim::physics::{Color, ShapeSpec, WORLD_SIZE};
use qualsim_cli::pipeline::{self, EvalReport, TEXT_MODELS};
use qualsim_cli::render::{rasterize, render_task, replay, scene_at, strip_frames, RenderMode};
use qualsim_cli::run::{hash_files, RunDir};
use qualsim_cli::Config;

const MINI: &str = r#"
seed = 7

[dataset]
tasks_per_template = 4
solver_budget = 2000

[classifier.mlp]
hidden = [16, 8]
max_epochs = 20

[nlg.model]
feature_dim = 4
record_dim = 8
hidden = 8
memory = 8
token_dim = 4
max_epochs = 2
max_len = 20

[lm.model]
d_model = 16
heads = 2
ffn = 32
max_epochs = 2

[render]
size = 64
"#;

fn mini() -> Config {
    toml::from_str(MINI).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    run: RunDir,
    report: String,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path().join("run"));
        let report = pipeline::run_all(&run, &mini()).unwrap();
        Fixture { _dir: dir, run, report }
    })
}

#[test]
fn config_defaults_and_overrides() {
    let c = mini();
    assert_eq!(c.dataset.tasks_per_template, 4);
    assert_eq!(c.dataset.templates, [0, 1, 2, 3, 4]);
    assert_eq!(c.nlg.model.hidden, 8);
    assert_eq!(c.nlg.model.lr, Config::default().nlg.model.lr);
    assert_eq!((c.lm.top_k, c.lm.temperature, c.lm.max_len), (3, 0.1, 40));
    let d = Config::default();
    let back: Config = toml::from_str(&d.to_toml().unwrap()).unwrap();
    assert_eq!(back.to_toml().unwrap(), d.to_toml().unwrap());
    assert!(toml::from_str::<Config>("sed = 1").is_err());
}

#[test]
fn bundle_is_reproducible_and_split() {
    let f = fixture();
    let b = pipeline::load_bundle(&f.run).unwrap();
    assert_eq!(b.tasks.len() + b.excluded.len(), 20);
    let s = &b.splits;
    let mut all: Vec<&String> = s.train.iter().chain(&s.valid).chain(&s.test).collect();
    all.sort();
    all.dedup();
    assert_eq!(all.len(), b.tasks.len());

    let dir = tempfile::tempdir().unwrap();
    let again = RunDir::new(dir.path());
    pipeline::build_dataset(&again, &mini()).unwrap();
    let a = fs::read(f.run.path("dataset", pipeline::BUNDLE)).unwrap();
    let b2 = fs::read(again.path("dataset", pipeline::BUNDLE)).unwrap();
    assert!(a == b2, "bundle bytes differ");
}

#[test]
fn manifest_hashes_match_outputs() {
    let f = fixture();
    let m = f.run.manifest().unwrap();
    assert_eq!(m.root_seed, 7);
    assert_eq!(m.templates, [0, 1, 2, 3, 4]);
    assert!(m.seeds.contains_key("solver") && m.seeds.contains_key("lm"));
    assert!(!m.splits.train.is_empty());
    for stage in ["dataset", "classifier", "nlg", "lm", "generate", "evaluate", "report"] {
        let files = &m.outputs[stage];
        assert!(!files.is_empty(), "{stage}");
        assert!(m.config_hashes.contains_key(stage));
        let rel: Vec<String> = files.keys().cloned().collect();
        assert_eq!(&hash_files(&f.run.root, &rel).unwrap(), files, "{stage}");
    }
    assert!(f.run.root.join("config.toml").exists());
}

#[test]
fn evaluation_is_repeatable_and_complete() {
    let f = fixture();
    let first = fs::read(f.run.path("evaluate", "metrics.json")).unwrap();
    let r = pipeline::evaluate(&f.run, &mini()).unwrap();
    assert_eq!(fs::read(f.run.path("evaluate", "metrics.json")).unwrap(), first);
    let r2: EvalReport = serde_json::from_slice(&first).unwrap();
    assert_eq!(r, r2);
    for m in TEXT_MODELS {
        for k in ["init", "sim"] {
            let x = &r[m][k];
            for v in [x.bleu1, x.bleu2, x.rouge_l, x.meteor] {
                assert!((0.0..=1.0).contains(&v), "{m} {k}");
            }
        }
    }
    for col in ["| lm |", "| avg |", "| bilstm |", "BLEU-1", "BLEU-2", "ROUGE-L", "METEOR", "| tree |", "| mlp |"] {
        assert!(f.report.contains(col), "{col}");
    }
    assert_eq!(f.report.matches("| lm |").count(), 2);
}

#[test]
fn generated_files_align_with_references() {
    let f = fixture();
    for k in ["init", "sim"] {
        let refs = fs::read_to_string(f.run.path("generate", &format!("reference-{k}.txt"))).unwrap();
        for m in TEXT_MODELS {
            let g = fs::read_to_string(f.run.path("generate", &format!("{m}-{k}.txt"))).unwrap();
            assert_eq!(g.lines().count(), refs.lines().count(), "{m} {k}");
        }
    }
}

#[test]
fn missing_artifacts_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::new(dir.path());
    let e = pipeline::train_classifier(&run, &mini()).unwrap_err().to_string();
    assert!(e.contains("dataset"), "{e}");
    let e = pipeline::report(&run, &mini()).unwrap_err().to_string();
    assert!(e.contains("classifier"), "{e}");
}

#[test]
fn strip_has_one_panel_per_key_frame() {
    let f = fixture();
    let b = pipeline::load_bundle(&f.run).unwrap();
    let ex = &b.tasks[0];
    let n = 1 + ex.n_salient() + 1;
    assert_eq!(strip_frames(ex).len(), n);
    let imgs = render_task(ex, RenderMode::Strip, 30, 64).unwrap();
    assert_eq!(imgs.len(), 1);
    assert_eq!(imgs[0].1.width, n * 64 + (n - 1) * 4);
    assert_eq!(imgs[0].1.height, 64);
    let again = render_task(ex, RenderMode::Strip, 30, 64).unwrap();
    assert_eq!(imgs[0].1.to_ppm(), again[0].1.to_ppm());

    let files = pipeline::render(&f.run, &mini(), &ex.id, RenderMode::Frames).unwrap();
    let (_, rollout) = replay(ex).unwrap();
    assert_eq!(files.len(), rollout.frames.len().div_ceil(30));
    assert!(pipeline::render(&f.run, &mini(), "t9-999", RenderMode::Strip).is_err());
}

fn pixel_of(x: f64, y: f64, size: usize) -> (usize, usize) {
    let s = WORLD_SIZE / size as f64;
    ((x / s) as usize, size - 1 - (y / s) as usize)
}

#[test]
fn colors_follow_the_map() {
    let f = fixture();
    let b = pipeline::load_bundle(&f.run).unwrap();
    let mut purple_seen = false;
    for ex in &b.tasks {
        let (scene, rollout) = replay(ex).unwrap();
        let img = rasterize(&scene_at(&scene, &rollout, 0), 256);
        let (px, py) = pixel_of(ex.action.center.x, ex.action.center.y, 256);
        assert_eq!(img.pixel(px, py), Color::Red.rgb(), "{}", ex.id);
        for body in scene.bodies.iter().filter(|b| b.color == Color::Purple) {
            if matches!(body.shape, ShapeSpec::Bar { .. } | ShapeSpec::Circle { .. }) {
                let (px, py) = pixel_of(body.position.x, body.position.y, 256);
                assert_eq!(img.pixel(px, py), Color::Purple.rgb(), "{}", ex.id);
                assert!(!body.dynamic);
                purple_seen = true;
            }
        }
    }
    assert!(purple_seen);
}

#[test]
fn ppm_header_and_size() {
    let img = qualsim_cli::render::Image::new(3, 2, [1, 2, 3]);
    let bytes = img.to_ppm();
    assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
    assert_eq!(bytes.len(), "P6\n3 2\n255\n".len() + 18);
}
