//! Shared fixtures for the benchmarks.

use qualsim::dataset::{build_example, Seeds, TaskExample};
use qualsim::events::FEATURES;
use qualsim::tasks::builtin_templates;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: Seeds = Seeds {
    tasks: 1,
    solver: 2,
    text: 3,
    split: 4,
};

/// The first solved task of each template.
pub fn examples() -> Vec<TaskExample> {
    builtin_templates()
        .iter()
        .map(|t| build_example(t, 0, &SEEDS, 10_000).unwrap().expect("solved"))
        .collect()
}

/// Random feature rows labeled by a nonlinear rule.
pub fn rows(n: usize, seed: u64) -> (Vec<[f64; FEATURES]>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<[f64; FEATURES]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let y = x.iter().map(|r| r[0] * r[1] + r[2] > 0.1).collect();
    (x, y)
}
