use rand::Rng;

use super::body::{Color, Scene, ShapeSpec};
use super::math::Vec2;

/// Scatters non-overlapping balls, bars and jars into an empty scene.
/// Used for property testing and benchmarks.
pub fn random_scene<R: Rng>(rng: &mut R, objects: usize) -> Scene {
    let mut scene = Scene::empty();
    let mut placed: Vec<(Vec2, f64)> = Vec::new();
    let mut attempts = 0;
    while placed.len() < objects && attempts < 10_000 {
        attempts += 1;
        let kind = rng.random_range(0..6);
        let (shape, reach) = match kind {
            0..=2 => {
                let r: f64 = rng.random_range(4.0..14.0);
                (ShapeSpec::Circle { radius: r }, r)
            }
            3 | 4 => {
                let length: f64 = rng.random_range(20.0..70.0);
                let width: f64 = rng.random_range(4.0..8.0);
                let angle_rad = rng.random_range(0.0..std::f64::consts::TAU);
                let reach = 0.5 * (length * length + width * width).sqrt();
                (
                    ShapeSpec::Bar {
                        length,
                        width,
                        angle_rad,
                    },
                    reach,
                )
            }
            _ => {
                let base: f64 = rng.random_range(24.0..44.0);
                let side: f64 = rng.random_range(18.0..32.0);
                let shape = ShapeSpec::Jar {
                    base_length: base,
                    side_length: side,
                    width: 4.0,
                    angle_rad: 0.0,
                };
                (shape, 0.5 * (base * base + 4.0 * side * side).sqrt())
            }
        };
        let lo: f64 = reach + 1.0;
        let hi = super::body::WORLD_SIZE - reach - 1.0;
        if lo >= hi {
            continue;
        }
        let center = Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
        if placed
            .iter()
            .any(|&(c, r)| (c - center).length() < r + reach + 1.0)
        {
            continue;
        }
        let color = match rng.random_range(0..4) {
            0 => Color::Black,
            1 => Color::Green,
            2 => Color::Blue,
            _ => Color::Gray,
        };
        let anchor = match shape {
            ShapeSpec::Jar { side_length, .. } => center - Vec2::new(0.0, side_length / 2.0),
            _ => center,
        };
        scene.add(shape, color, anchor);
        placed.push((center, reach));
    }
    scene
}
