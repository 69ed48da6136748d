pub mod data2text;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod events;
pub mod nn;
pub mod lm;
pub mod physics;
pub mod saliency;
pub mod tasks;
pub mod vocab;

pub use error::{Error, Result};
