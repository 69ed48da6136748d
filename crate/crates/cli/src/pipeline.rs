//! Pipeline stages. Each reads its inputs from earlier stage directories,
//! writes under its own directory and records itself in the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use log::info;
use qualsim::data2text::{D2tConfig, D2tModel, EncoderKind};
use qualsim::dataset::{assemble, build_example, task_id, DatasetBundle, TaskExample};
use qualsim::eval::{evaluate as text_metrics, tokenize, ConceptLexicon, MetricReport};
use qualsim::events::{RecordTable, FEATURE_NAMES};
use qualsim::lm::{task_prompts, LmModel, Prompt, PromptKind};
use qualsim::nn::ParamSet;
use qualsim::saliency::{Classifier, DecisionTree, Mlp, MlpMeta, Prf};
use qualsim::tasks::{builtin_templates, mix_seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::render::{render_task, RenderMode};
use crate::run::{dataset_seeds, stage_seed, RunDir};

pub const BUNDLE: &str = "bundle.json";
pub const TEXT_MODELS: [&str; 3] = ["lm", "avg", "bilstm"];

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec_pretty(v)?)
}

pub fn build_dataset(run: &RunDir, cfg: &Config) -> Result<DatasetBundle> {
    let t0 = Instant::now();
    let seeds = dataset_seeds(cfg.seed);
    let templates: Vec<_> = builtin_templates()
        .into_iter()
        .filter(|t| cfg.dataset.templates.contains(&t.template_id))
        .collect();
    if templates.len() != cfg.dataset.templates.len() {
        return Err(anyhow!("unknown template id in {:?}", cfg.dataset.templates));
    }
    let jobs: Vec<(usize, usize)> = (0..templates.len())
        .flat_map(|t| (0..cfg.dataset.tasks_per_template).map(move |i| (t, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(t, i)| {
            let tpl = &templates[t];
            build_example(tpl, i, &seeds, cfg.dataset.solver_budget)
                .map(|r| ((tpl.template_id, i), r))
                .with_context(|| format!("task {}", task_id(tpl.template_id, i)))
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = assemble(results, seeds.split);
    let path = run.write("dataset", BUNDLE, &serde_json::to_vec(&bundle)?)?;
    run.set_splits(&bundle.splits)?;
    run.record(cfg, "dataset", &cfg.dataset, &[path])?;
    info!(
        "built {} tasks ({} excluded) in {:.1}s",
        bundle.tasks.len(),
        bundle.excluded.len(),
        t0.elapsed().as_secs_f64()
    );
    Ok(bundle)
}

pub fn load_bundle(run: &RunDir) -> Result<DatasetBundle> {
    let p = run.input("dataset", BUNDLE)?;
    serde_json::from_slice(&fs::read(&p)?).with_context(|| format!("parsing {}", p.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub test_events: usize,
    pub test_positives: usize,
    /// (model name, scores) for baseline, tree and mlp.
    pub models: Vec<(String, Prf)>,
    pub importance: Vec<(String, f64)>,
    pub tree_depth: usize,
    pub mlp_best_epoch: usize,
}

impl ClassifierReport {
    pub fn prf(&self, model: &str) -> Option<Prf> {
        self.models.iter().find(|(n, _)| n == model).map(|(_, p)| *p)
    }
}

pub fn train_classifier(run: &RunDir, cfg: &Config) -> Result<ClassifierReport> {
    let b = load_bundle(run)?;
    let (train_x, train_y) = DatasetBundle::event_rows(&b.split(&b.splits.train));
    let (val_x, val_y) = DatasetBundle::event_rows(&b.split(&b.splits.valid));
    let test = b.split(&b.splits.test);
    let (test_x, test_y) = DatasetBundle::event_rows(&test);
    let seed = stage_seed(cfg.seed, "classifier");

    let tree = DecisionTree::train(&train_x, &train_y, &cfg.classifier.tree)?;
    let mlp = Mlp::train(&train_x, &train_y, &val_x, &val_y, &cfg.classifier.mlp, seed)?;
    let mut importance: Vec<(String, f64)> = FEATURE_NAMES
        .iter()
        .zip(tree.feature_importance())
        .map(|(n, w)| (n.to_string(), w))
        .collect();
    importance.sort_by(|a, b| b.1.total_cmp(&a.1));
    let tree_depth = tree.depth();
    let mlp_best_epoch = mlp.best_epoch;

    let tree_path = run.write("classifier", "tree.json", &to_json(&(&cfg.classifier.tree, &tree))?)?;
    let mlp_path = run.stage_dir("classifier")?.join("mlp.json");
    mlp.params.save(mlp.meta(), &mlp_path)?;

    let models = [Classifier::AllPositive, Classifier::Tree(tree), Classifier::Mlp(Box::new(mlp))];
    let mut probs = Vec::new();
    let mut scores = Vec::new();
    for m in &models {
        let (p, s) = m.evaluate(&test_x, &test_y);
        probs.push(p);
        scores.push((m.name().to_string(), s));
    }
    let mut csv = String::from("task_id,event,timestep,label,p_baseline,p_tree,p_mlp\n");
    let mut row = 0;
    for t in &test {
        for (k, (ev, &label)) in t.events.iter().zip(&t.labels).enumerate() {
            csv += &format!(
                "{},{k},{},{},{},{},{}\n",
                t.id, ev.timestep, label as u8, probs[0][row], probs[1][row], probs[2][row]
            );
            row += 1;
        }
    }
    let csv_path = run.write("classifier", "predictions.csv", csv.as_bytes())?;
    let report = ClassifierReport {
        test_events: test_y.len(),
        test_positives: test_y.iter().filter(|&&l| l).count(),
        models: scores,
        importance,
        tree_depth,
        mlp_best_epoch,
    };
    let report_path = run.write("classifier", "prf.json", &to_json(&report)?)?;
    run.record(cfg, "classifier", &cfg.classifier, &[tree_path, mlp_path, csv_path, report_path])?;
    Ok(report)
}

pub fn load_mlp(path: &std::path::Path) -> Result<Mlp> {
    let (params, meta): (ParamSet, MlpMeta) = ParamSet::load(path)?;
    Ok(Mlp::from_parts(params, meta))
}

/// (record table, gold text) pairs for a text kind. Scene descriptions are
/// generated from the initial-state records only.
pub fn text_pairs(tasks: &[&TaskExample], kind: PromptKind) -> Result<Vec<(RecordTable, Vec<String>)>> {
    tasks
        .iter()
        .map(|t| {
            let table = RecordTable::from_lines(&t.records.join("\n"))?;
            Ok(match kind {
                PromptKind::Init => (table.initial_only(), t.init_text.clone()),
                PromptKind::Sim => (table, t.sim_text.clone()),
            })
        })
        .collect()
}

pub fn nlg_file(encoder: EncoderKind, kind: PromptKind) -> String {
    format!("{}-{}.json", encoder.name(), kind.name())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlgSummary {
    pub model: String,
    pub kind: String,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
    pub seconds: f64,
}

pub fn train_nlg(run: &RunDir, cfg: &Config) -> Result<Vec<NlgSummary>> {
    let b = load_bundle(run)?;
    let seed = stage_seed(cfg.seed, "nlg");
    let mut files = Vec::new();
    let mut out = Vec::new();
    for &enc in &cfg.nlg.encoders {
        for kind in PromptKind::ALL {
            let t0 = Instant::now();
            let train = text_pairs(&b.split(&b.splits.train), kind)?;
            let valid = text_pairs(&b.split(&b.splits.valid), kind)?;
            let mc = D2tConfig {
                encoder: enc,
                ..cfg.nlg.model.clone()
            };
            let m = D2tModel::train(&train, &valid, &mc, mix_seed(&[seed, enc as u64, kind as u64]))?;
            let p = run.stage_dir("nlg")?.join(nlg_file(enc, kind));
            m.save(&p)?;
            files.push(p);
            let s = NlgSummary {
                model: enc.name().into(),
                kind: kind.name().into(),
                epochs: m.meta.history.len(),
                best_epoch: m.meta.best_epoch,
                best_valid_accuracy: m.meta.best_valid_accuracy,
                seconds: t0.elapsed().as_secs_f64(),
            };
            info!(
                "nlg {}-{}: best valid accuracy {:.3} at epoch {} ({:.0}s)",
                s.model, s.kind, s.best_valid_accuracy, s.best_epoch, s.seconds
            );
            out.push(s);
        }
    }
    files.push(run.write("nlg", "summary.json", &to_json(&out)?)?);
    run.record(cfg, "nlg", &cfg.nlg, &files)?;
    Ok(out)
}

pub fn prompts(tasks: &[&TaskExample]) -> Vec<Prompt> {
    tasks
        .iter()
        .flat_map(|t| task_prompts(&t.objects, &t.init_text, &t.sim_text))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_valid_perplexity: f64,
    pub train_accuracy: f64,
    pub seconds: f64,
}

pub fn train_lm(run: &RunDir, cfg: &Config) -> Result<LmSummary> {
    let t0 = Instant::now();
    let b = load_bundle(run)?;
    let train = prompts(&b.split(&b.splits.train));
    let valid = prompts(&b.split(&b.splits.valid));
    let m = LmModel::train(&train, &valid, &cfg.lm.model, stage_seed(cfg.seed, "lm"))?;
    let p = run.stage_dir("lm")?.join("lm.json");
    m.save(&p)?;
    let s = LmSummary {
        epochs: m.meta.history.len(),
        best_epoch: m.meta.best_epoch,
        best_valid_perplexity: m.meta.best_valid_perplexity,
        train_accuracy: m.meta.history.get(m.meta.best_epoch.saturating_sub(1)).map_or(0.0, |h| h.train_accuracy),
        seconds: t0.elapsed().as_secs_f64(),
    };
    let sp = run.write("lm", "summary.json", &to_json(&s)?)?;
    run.record(cfg, "lm", &cfg.lm, &[p, sp])?;
    Ok(s)
}

/// Joins tokens with spaces, attaching punctuation to the previous word.
pub fn detokenize(tokens: &[String]) -> String {
    let mut s = String::new();
    for t in tokens {
        let punct = t.chars().all(|c| c.is_ascii_punctuation());
        if !s.is_empty() && !punct {
            s.push(' ');
        }
        s.push_str(t);
    }
    s
}

pub fn generated_file(model: &str, kind: PromptKind) -> String {
    format!("{model}-{}.txt", kind.name())
}

pub fn reference_file(kind: PromptKind) -> String {
    format!("reference-{}.txt", kind.name())
}

fn lines(texts: &[Vec<String>]) -> String {
    texts.iter().map(|t| detokenize(t) + "\n").collect()
}

/// Generates both descriptions for every test task with every text model.
pub fn generate(run: &RunDir, cfg: &Config) -> Result<()> {
    let b = load_bundle(run)?;
    let test = b.split(&b.splits.test);
    let lm = LmModel::load(&run.input("lm", "lm.json")?)?;
    let sample_seed = stage_seed(cfg.seed, "sample");
    let mut files = Vec::new();
    for kind in PromptKind::ALL {
        let pairs = text_pairs(&test, kind)?;
        let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.1.clone()).collect();
        files.push(run.write("generate", &reference_file(kind), lines(&refs).as_bytes())?);

        let ps = prompts(&test);
        let out: Vec<Vec<String>> = ps
            .iter()
            .filter(|p| p.kind == kind)
            .enumerate()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(i, p)| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[sample_seed, *i as u64, kind as u64]));
                lm.sample(&p.context, cfg.lm.top_k, cfg.lm.temperature, cfg.lm.max_len, &mut rng)
            })
            .collect();
        files.push(run.write("generate", &generated_file("lm", kind), lines(&out).as_bytes())?);

        for &enc in &cfg.nlg.encoders {
            let m = D2tModel::load(&run.input("nlg", &nlg_file(enc, kind))?)?;
            let max_len = m.config().max_len;
            let out: Vec<Vec<String>> = pairs.par_iter().map(|(t, _)| m.generate(t, max_len)).collect();
            files.push(run.write("generate", &generated_file(enc.name(), kind), lines(&out).as_bytes())?);
        }
    }
    run.record(cfg, "generate", &(&cfg.lm.top_k, &cfg.lm.temperature, &cfg.lm.max_len), &files)?;
    Ok(())
}

/// Metric reports keyed by model then text kind; `gold` holds the
/// references' own concept coverage.
pub type EvalReport = BTreeMap<String, BTreeMap<String, MetricReport>>;

pub fn lexicon(cfg: &Config) -> Result<ConceptLexicon> {
    let l = &cfg.lexicon;
    Ok(ConceptLexicon::default().with_overrides(l.gravity.as_deref(), l.friction.as_deref(), l.collision.as_deref())?)
}

fn read_lines(p: PathBuf) -> Result<Vec<Vec<String>>> {
    Ok(fs::read_to_string(&p)
        .with_context(|| format!("reading {}", p.display()))?
        .lines()
        .map(tokenize)
        .collect())
}

pub fn evaluate(run: &RunDir, cfg: &Config) -> Result<EvalReport> {
    let lex = lexicon(cfg)?;
    let mut report = EvalReport::new();
    let models: Vec<&str> = TEXT_MODELS
        .iter()
        .copied()
        .filter(|m| *m == "lm" || cfg.nlg.encoders.iter().any(|e| e.name() == *m))
        .collect();
    for kind in PromptKind::ALL {
        let refs = read_lines(run.input("generate", &reference_file(kind))?)?;
        report
            .entry("gold".into())
            .or_default()
            .insert(kind.name().into(), text_metrics(&refs, &refs, &lex));
        for m in &models {
            let cands = read_lines(run.input("generate", &generated_file(m, kind))?)?;
            if cands.len() != refs.len() {
                return Err(anyhow!("{m}-{}: {} candidates for {} references", kind.name(), cands.len(), refs.len()));
            }
            report
                .entry(m.to_string())
                .or_default()
                .insert(kind.name().into(), text_metrics(&cands, &refs, &lex));
        }
    }
    let p = run.write("evaluate", "metrics.json", &to_json(&report)?)?;
    run.record(cfg, "evaluate", &lex, &[p])?;
    Ok(report)
}

/// Markdown tables: classification scores, text metrics and concept coverage.
pub fn report(run: &RunDir, cfg: &Config) -> Result<String> {
    let cls: ClassifierReport = serde_json::from_slice(&fs::read(run.input("classifier", "prf.json")?)?)?;
    let ev: EvalReport = serde_json::from_slice(&fs::read(run.input("evaluate", "metrics.json")?)?)?;
    let mut s = String::from("# Results\n\n## Pivotal event classification\n\n");
    s += &format!("{} test events, {} salient.\n\n", cls.test_events, cls.test_positives);
    s += "| Model | Precision | Recall | F1 |\n|---|---|---|---|\n";
    for (name, p) in &cls.models {
        s += &format!("| {name} | {:.3} | {:.3} | {:.3} |\n", p.precision, p.recall, p.f1);
    }
    s += "\nTop tree features: ";
    s += &cls
        .importance
        .iter()
        .take(3)
        .map(|(n, w)| format!("{n} {w:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    s += "\n";
    for kind in PromptKind::ALL {
        let title = match kind {
            PromptKind::Init => "Initial scene description",
            PromptKind::Sim => "Simulation description",
        };
        s += &format!("\n## {title}\n\n| Model | BLEU-1 | BLEU-2 | ROUGE-L | METEOR | gravity | friction | collision |\n|---|---|---|---|---|---|---|---|\n");
        for model in TEXT_MODELS.iter().chain(&["gold"]) {
            if let Some(r) = ev.get(*model).and_then(|k| k.get(kind.name())) {
                let c = r.coverage_per_text;
                if *model == "gold" {
                    s += &format!("| gold | | | | | {:.2} | {:.2} | {:.2} |\n", c[0], c[1], c[2]);
                } else {
                    s += &format!(
                        "| {model} | {:.4} | {:.4} | {:.4} | {:.4} | {:.2} | {:.2} | {:.2} |\n",
                        r.bleu1, r.bleu2, r.rouge_l, r.meteor, c[0], c[1], c[2]
                    );
                }
            }
        }
    }
    s += "\nCoverage columns are concept words per description.\n";
    let md = run.write("report", "report.md", s.as_bytes())?;
    let js = run.write("report", "report.json", &to_json(&(&cls, &ev))?)?;
    run.record(cfg, "report", &(), &[md, js])?;
    Ok(s)
}

pub fn render(run: &RunDir, cfg: &Config, task: &str, mode: RenderMode) -> Result<Vec<PathBuf>> {
    let b = load_bundle(run)?;
    let ex = b.get(task).ok_or_else(|| anyhow!("unknown task id {task}"))?;
    let mut files = Vec::new();
    for (name, img) in render_task(ex, mode, cfg.render.every, cfg.render.size)? {
        files.push(run.write("render", &format!("{task}/{name}"), &img.to_ppm())?);
    }
    run.record(cfg, "render", &cfg.render, &files)?;
    Ok(files)
}

/// Every stage in order.
pub fn run_all(run: &RunDir, cfg: &Config) -> Result<String> {
    build_dataset(run, cfg)?;
    train_classifier(run, cfg)?;
    train_nlg(run, cfg)?;
    train_lm(run, cfg)?;
    generate(run, cfg)?;
    evaluate(run, cfg)?;
    report(run, cfg)
}
