//! Declarative run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qualsim::data2text::{D2tConfig, EncoderKind};
use qualsim::lm::{LmConfig, DEFAULT_MAX_LEN, DEFAULT_TEMPERATURE, DEFAULT_TOP_K};
use qualsim::saliency::{MlpConfig, TreeConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; every stage seed is derived from it by name.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub classifier: ClassifierConfig,
    pub nlg: NlgConfig,
    pub lm: LmSection,
    pub lexicon: LexiconFiles,
    pub render: RenderConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 2020,
            dataset: DatasetConfig::default(),
            classifier: ClassifierConfig::default(),
            nlg: NlgConfig::default(),
            lm: LmSection::default(),
            lexicon: LexiconFiles::default(),
            render: RenderConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub templates: Vec<usize>,
    pub tasks_per_template: usize,
    pub solver_budget: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            templates: (0..5).collect(),
            tasks_per_template: 50,
            solver_budget: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub tree: TreeConfig,
    pub mlp: MlpConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlgConfig {
    pub encoders: Vec<EncoderKind>,
    /// Shared settings; `encoder` is overridden per model.
    pub model: D2tConfig,
}

impl Default for NlgConfig {
    fn default() -> Self {
        NlgConfig {
            encoders: vec![EncoderKind::Avg, EncoderKind::BiLstm],
            model: D2tConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSection {
    pub model: LmConfig,
    pub top_k: usize,
    pub temperature: f64,
    pub max_len: usize,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            model: LmConfig::default(),
            top_k: DEFAULT_TOP_K,
            temperature: DEFAULT_TEMPERATURE,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

/// Optional word-list files replacing the built-in concept lexicon.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconFiles {
    pub gravity: Option<PathBuf>,
    pub friction: Option<PathBuf>,
    pub collision: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Frame stride in `frames` mode.
    pub every: usize,
    /// Output image side in pixels.
    pub size: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { every: 30, size: 256 }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
