//! Structured views of a solved rollout: initial object records, denoised
//! collision events, feature vectors, counterfactual saliency labels and
//! template reference texts.

mod table;
mod text;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::physics::{simulate, Color, ContactKind, Rollout, Scene, ShapeClass, ShapeSpec, Vec2, WORLD_SIZE};
use crate::tasks::{Solution, Task};

pub use table::{parse_record_line, to_record_table, FeatureType, Record, RecordTable, Segment};
pub use text::{gold_text, location_words, tokenize};

/// Frames within which repeated events of one pair are merged.
pub const DENOISE_WINDOW: usize = 3;
/// Frame tolerance when matching events against the counterfactual.
pub const MATCH_TOLERANCE: usize = 5;
pub const FEATURES: usize = 13;
/// Column names of a feature vector, in order.
pub const FEATURE_NAMES: [&str; FEATURES] = [
    "timestep", "shape_a", "x_a", "y_a", "vx_a", "vy_a", "angle_a", "shape_b", "x_b", "y_b", "vx_b",
    "vy_b", "angle_b",
];
const VELOCITY_SCALE: f64 = 256.0;
const TIME_SCALE: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: usize,
    pub class: ShapeClass,
    pub color: Color,
    pub dynamic: bool,
    /// Entity token, e.g. `green_circle_0`.
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub shape: ShapeSpec,
}

/// One body's state at a collision frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: usize,
    pub class: ShapeClass,
    pub position: Vec2,
    pub velocity: Vec2,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub timestep: usize,
    /// Smaller id first.
    pub a: Participant,
    pub b: Participant,
    pub kind: ContactKind,
    /// Set when denoising folded later events into this one.
    pub merged: bool,
}

impl CollisionEvent {
    pub fn pair(&self) -> (usize, usize) {
        (self.a.id, self.b.id)
    }
}

/// Object records of `scene`, in id order. Entity names number bodies of the
/// same color and class from zero.
pub fn object_records(scene: &Scene) -> Vec<ObjectRecord> {
    let mut seen = std::collections::BTreeMap::new();
    scene
        .bodies
        .iter()
        .map(|b| {
            let class = b.shape.class();
            let k = seen.entry((b.color, class)).or_insert(0usize);
            let name = format!("{}_{}_{}", b.color.name(), class.name(), k);
            *k += 1;
            ObjectRecord {
                id: b.id,
                class,
                color: b.color,
                dynamic: b.dynamic,
                name,
                x: b.position.x,
                y: b.position.y,
                shape: b.shape,
            }
        })
        .collect()
}

/// One event per Begin and End contact of `rollout`, which must come from `scene`.
pub fn extract_events(rollout: &Rollout, scene: &Scene) -> Vec<CollisionEvent> {
    let class = |id: usize| scene.bodies[id].shape.class();
    rollout
        .contacts
        .iter()
        .filter(|c| scene.bodies[c.id_a].dynamic || scene.bodies[c.id_b].dynamic)
        .map(|c| {
            let part = |id, s: &crate::physics::Snapshot| Participant {
                id,
                class: class(id),
                position: s.position,
                velocity: s.velocity,
                angle: s.angle,
            };
            CollisionEvent {
                timestep: c.timestep,
                a: part(c.id_a, &c.a),
                b: part(c.id_b, &c.b),
                kind: c.kind,
                merged: false,
            }
        })
        .collect()
}

/// Merges events of one pair lying within [`DENOISE_WINDOW`] frames of the
/// previous event of that pair. Each cluster keeps its earliest event.
pub fn denoise_window3(events: &[CollisionEvent]) -> Vec<CollisionEvent> {
    let mut last_seen: std::collections::BTreeMap<(usize, usize), (usize, usize)> = Default::default();
    let mut out: Vec<CollisionEvent> = Vec::new();
    for ev in events {
        match last_seen.get_mut(&ev.pair()) {
            Some((last_t, idx)) if ev.timestep - *last_t <= DENOISE_WINDOW => {
                *last_t = ev.timestep;
                out[*idx].merged = true;
            }
            _ => {
                last_seen.insert(ev.pair(), (ev.timestep, out.len()));
                out.push(ev.clone());
            }
        }
    }
    out
}

pub fn featurize(ev: &CollisionEvent) -> [f64; FEATURES] {
    let p = |q: &Participant| {
        [
            q.class.code() as f64,
            q.position.x / WORLD_SIZE,
            q.position.y / WORLD_SIZE,
            q.velocity.x / VELOCITY_SCALE,
            q.velocity.y / VELOCITY_SCALE,
            q.angle,
        ]
    };
    let (a, b) = (p(&ev.a), p(&ev.b));
    let mut v = [0.0; FEATURES];
    v[0] = ev.timestep as f64 / TIME_SCALE;
    v[1..7].copy_from_slice(&a);
    v[7..13].copy_from_slice(&b);
    v
}

/// Labels each event as salient when the counterfactual has no event of
/// the same pair within [`MATCH_TOLERANCE`] frames and it happens no later
/// than `goal_frame + hold`.
pub fn label_against(
    events: &[CollisionEvent],
    counterfactual: &[CollisionEvent],
    last_frame: usize,
) -> Vec<bool> {
    events
        .iter()
        .map(|ev| {
            ev.timestep <= last_frame
                && !counterfactual
                    .iter()
                    .any(|c| c.pair() == ev.pair() && c.timestep.abs_diff(ev.timestep) <= MATCH_TOLERANCE)
        })
        .collect()
}

/// Denoised events of the solution rollout and their saliency labels.
pub fn oracle_label(task: &Task, solution: &Solution) -> Result<(Vec<CollisionEvent>, Vec<bool>)> {
    let events = denoise_window3(&extract_events(&solution.rollout, &solution.scene));
    let steps = solution.rollout.steps_run.max(1);
    let cf_rollout = simulate(&task.initial_scene, steps + MATCH_TOLERANCE);
    let cf = denoise_window3(&extract_events(&cf_rollout, &task.initial_scene));
    let last = solution.goal_frame + task.goal.hold_frames;
    let labels = label_against(&events, &cf, last);
    Ok((events, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ev(t: usize, a: usize, b: usize) -> CollisionEvent {
        let p = |id| Participant {
            id,
            class: ShapeClass::Circle,
            position: Vec2::new(t as f64, id as f64),
            velocity: Vec2::ZERO,
            angle: 0.0,
        };
        CollisionEvent {
            timestep: t,
            a: p(a),
            b: p(b),
            kind: ContactKind::Begin,
            merged: false,
        }
    }

    fn frames(evs: &[CollisionEvent]) -> Vec<usize> {
        evs.iter().map(|e| e.timestep).collect()
    }

    #[test]
    fn close_pair_events_merge() {
        let out = denoise_window3(&[ev(10, 0, 4), ev(12, 0, 4)]);
        assert_eq!(frames(&out), vec![10]);
        assert!(out[0].merged);
    }

    #[test]
    fn distant_events_stay() {
        assert_eq!(frames(&denoise_window3(&[ev(10, 0, 4), ev(14, 0, 4)])), vec![10, 14]);
    }

    #[test]
    fn chatter_merges_transitively() {
        let burst: Vec<_> = (50..54).map(|t| ev(t, 0, 4)).collect();
        let out = denoise_window3(&burst);
        assert_eq!(frames(&out), vec![50]);
        assert_eq!(out[0].a.position.x, 50.0);
    }

    #[test]
    fn other_pairs_do_not_merge() {
        let out = denoise_window3(&[ev(10, 0, 4), ev(11, 0, 5), ev(12, 0, 4)]);
        assert_eq!(frames(&out), vec![10, 11]);
    }

    #[test]
    fn feature_packing() {
        let e = CollisionEvent {
            timestep: 250,
            a: Participant {
                id: 0,
                class: ShapeClass::Boundary,
                position: Vec2::new(128.0, -10.0),
                velocity: Vec2::ZERO,
                angle: 0.0,
            },
            b: Participant {
                id: 5,
                class: ShapeClass::Circle,
                position: Vec2::new(64.0, 192.0),
                velocity: Vec2::new(-25.6, 51.2),
                angle: 1.5,
            },
            kind: ContactKind::Begin,
            merged: false,
        };
        let v = featurize(&e);
        let want = [0.25, 0.0, 0.5, -10.0 / 256.0, 0.0, 0.0, 0.0, 3.0, 0.25, 0.75, -0.1, 0.2, 1.5];
        for (got, want) in v.iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn labels_need_no_counterfactual_match() {
        let events = [ev(100, 0, 4), ev(200, 0, 5), ev(300, 4, 5)];
        let cf = [ev(104, 0, 4), ev(190, 0, 5)];
        assert_eq!(label_against(&events, &cf, 1000), vec![false, true, true]);
        assert_eq!(label_against(&events, &cf, 250), vec![false, true, false]);
        assert_eq!(label_against(&cf, &cf, 1000), vec![false, false]);
    }
}
