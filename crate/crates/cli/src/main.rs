use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use qualsim::data2text::D2tModel;
use qualsim::events::RecordTable;
use qualsim_cli::pipeline::{self, detokenize};
use qualsim_cli::render::RenderMode;
use qualsim_cli::{Config, RunDir};

#[derive(Parser)]
#[command(name = "qualsim", version, about = "Physical simulation datasets, saliency classifiers and text generators")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory holding every stage's outputs and the manifest.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Frames,
    Strip,
}

#[derive(Subcommand)]
enum Command {
    /// Instantiate, solve, label and describe tasks, then split them.
    BuildDataset,
    /// Train the decision tree and MLP and score them on the test split.
    TrainClassifier,
    /// Train the data-to-text models.
    TrainNlg,
    /// Train the conditional language model.
    TrainLm,
    /// Describe the test split with every model, or one record table with one model.
    Generate {
        /// Overrides `lm.top_k` (default 3).
        #[arg(long)]
        top_k: Option<usize>,
        /// Overrides `lm.temperature` (default 0.1).
        #[arg(long)]
        temperature: Option<f64>,
        /// Overrides `lm.max_len` (default 40).
        #[arg(long)]
        max_len: Option<usize>,
        /// Record table file (one `value|entity|feature|segment` record per line).
        #[arg(long, requires = "model")]
        table: Option<PathBuf>,
        /// Data-to-text weight file used with --table.
        #[arg(long, requires = "table")]
        model: Option<PathBuf>,
    },
    /// Score generated text against the references.
    Evaluate,
    /// Rasterize a task's solved rollout.
    Render {
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value = "strip")]
        mode: Mode,
    },
    /// Write the result tables.
    Report,
    /// Run every stage in order.
    All,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let run = RunDir::new(&cli.run_dir);
    match cli.command {
        Command::BuildDataset => {
            let b = pipeline::build_dataset(&run, &cfg)?;
            println!(
                "{} tasks solved, {} excluded; splits {}/{}/{}",
                b.tasks.len(),
                b.excluded.len(),
                b.splits.train.len(),
                b.splits.valid.len(),
                b.splits.test.len()
            );
        }
        Command::TrainClassifier => {
            let r = pipeline::train_classifier(&run, &cfg)?;
            for (name, p) in &r.models {
                println!("{name}: P {:.3} R {:.3} F1 {:.3}", p.precision, p.recall, p.f1);
            }
        }
        Command::TrainNlg => {
            for s in pipeline::train_nlg(&run, &cfg)? {
                println!("{}-{}: valid accuracy {:.3} (epoch {})", s.model, s.kind, s.best_valid_accuracy, s.best_epoch);
            }
        }
        Command::TrainLm => {
            let s = pipeline::train_lm(&run, &cfg)?;
            println!("valid perplexity {:.3} (epoch {})", s.best_valid_perplexity, s.best_epoch);
        }
        Command::Generate {
            top_k,
            temperature,
            max_len,
            table,
            model,
        } => {
            if let (Some(table), Some(model)) = (table, model) {
                let m = D2tModel::load(&model)?;
                let t = RecordTable::from_lines(&std::fs::read_to_string(table)?)?;
                println!("{}", detokenize(&m.generate(&t, m.config().max_len)));
            } else {
                cfg.lm.top_k = top_k.unwrap_or(cfg.lm.top_k);
                cfg.lm.temperature = temperature.unwrap_or(cfg.lm.temperature);
                cfg.lm.max_len = max_len.unwrap_or(cfg.lm.max_len);
                pipeline::generate(&run, &cfg)?;
            }
        }
        Command::Evaluate => {
            let r = pipeline::evaluate(&run, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Render { task, mode } => {
            let mode = match mode {
                Mode::Frames => RenderMode::Frames,
                Mode::Strip => RenderMode::Strip,
            };
            for f in pipeline::render(&run, &cfg, &task, mode)? {
                println!("{}", f.display());
            }
        }
        Command::Report => print!("{}", pipeline::report(&run, &cfg)?),
        Command::All => print!("{}", pipeline::run_all(&run, &cfg)?),
    }
    Ok(())
}
