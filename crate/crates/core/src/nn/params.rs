use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEIGHTS_FORMAT: &str = "qualsim-weights";
pub const WEIGHTS_VERSION: u32 = 1;

/// Named trainable matrices. Vectors are stored as 1×n rows.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct WeightsFile<C> {
    pub format: String,
    pub version: u32,
    pub config: C,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.names.push(name.to_string());
        self.values.push(value);
        self.index.insert(name.to_string(), self.values.len() - 1);
        self.values.len() - 1
    }

    /// Glorot-uniform matrix.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> usize {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let v = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a));
        self.add(name, v)
    }

    pub fn add_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, a: f64, rng: &mut R) -> usize {
        let v = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a));
        self.add(name, v)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.add(name, Array2::zeros((rows, cols)))
    }

    pub fn add_const(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> usize {
        self.add(name, Array2::from_elem((rows, cols), v))
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        &self.values[self.id(name).unwrap_or_else(|| panic!("no parameter {name}"))]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        let id = self.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
        &mut self.values[id]
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn to_file<C: Serialize>(&self, config: C) -> WeightsFile<C> {
        let tensors = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(name, v)| Tensor {
                name: name.clone(),
                rows: v.nrows(),
                cols: v.ncols(),
                data: v.iter().copied().collect(),
            })
            .collect();
        WeightsFile {
            format: WEIGHTS_FORMAT.to_string(),
            version: WEIGHTS_VERSION,
            config,
            tensors,
        }
    }

    pub fn from_file<C>(file: WeightsFile<C>) -> Result<(Self, C)> {
        if file.format != WEIGHTS_FORMAT {
            return Err(Error::Parse(format!("not a weights file: {}", file.format)));
        }
        if file.version != WEIGHTS_VERSION {
            return Err(Error::Version {
                found: file.version,
                expected: WEIGHTS_VERSION,
            });
        }
        let mut set = ParamSet::new();
        for t in file.tensors {
            let v = Array2::from_shape_vec((t.rows, t.cols), t.data)
                .map_err(|e| Error::Shape(format!("{}: {e}", t.name)))?;
            set.add(&t.name, v);
        }
        Ok((set, file.config))
    }

    pub fn save<C: Serialize>(&self, config: C, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_file(config))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Self, C)> {
        let text = std::fs::read_to_string(path)?;
        let file: WeightsFile<C> = serde_json::from_str(&text)?;
        Self::from_file(file)
    }
}
