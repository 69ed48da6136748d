//! Pipeline orchestration over the `qualsim` library: dataset building,
//! training, generation, evaluation, reporting and rendering.

pub mod config;
pub mod pipeline;
pub mod render;
pub mod run;

pub use config::Config;
pub use run::{Manifest, RunDir};
