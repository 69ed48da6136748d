//! Run directory layout, stage seeds and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qualsim::dataset::{Seeds, Splits};
use qualsim::tasks::mix_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;

pub const MANIFEST: &str = "manifest.json";
pub const STAGES: [&str; 8] = ["dataset", "classifier", "nlg", "lm", "generate", "evaluate", "report", "render"];
const SEED_NAMES: [&str; 8] = ["tasks", "solver", "text", "split", "classifier", "nlg", "lm", "sample"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Named sub-seed of the root seed.
pub fn stage_seed(root: u64, name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    mix_seed(&[root, u64::from_le_bytes(b)])
}

pub fn dataset_seeds(root: u64) -> Seeds {
    Seeds {
        tasks: stage_seed(root, "tasks"),
        solver: stage_seed(root, "solver"),
        text: stage_seed(root, "text"),
        split: stage_seed(root, "split"),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub templates: Vec<usize>,
    pub splits: Splits,
    /// SHA-256 of each stage's configuration (JSON) with the root seed.
    pub config_hashes: BTreeMap<String, String>,
    /// SHA-256 of every file a stage wrote, keyed by stage then path.
    pub outputs: BTreeMap<String, BTreeMap<String, String>>,
}

/// All outputs of a run live under one directory, one subdirectory per stage.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        if !STAGES.contains(&stage) {
            bail!("unknown stage {stage}");
        }
        let d = self.root.join(stage);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.root.join(stage).join(file)
    }

    /// Fails with a message naming the stage that should have produced `file`.
    pub fn input(&self, stage: &str, file: &str) -> Result<PathBuf> {
        let p = self.path(stage, file);
        if !p.exists() {
            bail!("missing artifact {}: run the {stage} stage first", p.display());
        }
        Ok(p)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let p = self.root.join(MANIFEST);
        if !p.exists() {
            return Ok(Manifest::default());
        }
        serde_json::from_str(&fs::read_to_string(&p)?).with_context(|| format!("parsing {}", p.display()))
    }

    /// Writes `bytes` under the stage directory and returns the path.
    pub fn write(&self, stage: &str, file: &str, bytes: &[u8]) -> Result<PathBuf> {
        let dir = self.stage_dir(stage)?;
        let p = dir.join(file);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Records a finished stage: seeds, config hash and output hashes. The
    /// stage's earlier outputs are replaced.
    pub fn record(&self, cfg: &Config, stage: &str, stage_config: &impl Serialize, files: &[PathBuf]) -> Result<Manifest> {
        let mut m = self.manifest()?;
        m.tool_version = env!("CARGO_PKG_VERSION").to_string();
        m.root_seed = cfg.seed;
        m.seeds = SEED_NAMES.iter().map(|n| (n.to_string(), stage_seed(cfg.seed, n))).collect();
        m.templates = cfg.dataset.templates.clone();
        let cfg_json = serde_json::to_vec(&(cfg.seed, stage_config))?;
        m.config_hashes.insert(stage.to_string(), sha256_hex(&cfg_json));
        let mut out = BTreeMap::new();
        for f in files {
            let rel = f.strip_prefix(&self.root).unwrap_or(f).to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_hex(&fs::read(f)?));
        }
        m.outputs.insert(stage.to_string(), out);
        fs::create_dir_all(&self.root)?;
        fs::write(self.root.join(MANIFEST), serde_json::to_string_pretty(&m)?)?;
        fs::write(self.root.join("config.toml"), cfg.to_toml()?)?;
        Ok(m)
    }

    pub fn set_splits(&self, splits: &Splits) -> Result<()> {
        let mut m = self.manifest()?;
        m.splits = splits.clone();
        fs::create_dir_all(&self.root)?;
        fs::write(self.root.join(MANIFEST), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }
}

/// Hashes of files on disk, for comparing against a manifest.
pub fn hash_files(root: &Path, rel: &[String]) -> Result<BTreeMap<String, String>> {
    rel.iter()
        .map(|r| Ok((r.clone(), sha256_hex(&fs::read(root.join(r))?))))
        .collect()
}
