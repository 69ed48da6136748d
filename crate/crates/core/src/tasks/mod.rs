//! Puzzle tasks: templates, red-ball actions, goal checks and a random-search
//! solver.

mod goal;
mod templates;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{
    collide, simulate_until, Body, Color, Rollout, Scene, ShapeSpec, Vec2, MAX_STEPS, WORLD_SIZE,
};

pub use goal::{check_goal, first_hold, GoalSpec, Relation, Selector, HOLD_FRAMES};
pub use templates::{builtin_templates, Layout, TaskTemplate};

/// Legal red-ball radii.
pub const ACTION_RADIUS: (f64, f64) = (5.0, 15.0);
/// Tasks generated per template.
pub const TASKS_PER_TEMPLATE: usize = 100;
/// Consecutive overlapping parameter draws after which a template is broken.
pub const MAX_DRAWS: usize = 1000;

const OVERLAP_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub template_id: usize,
    pub task_index: usize,
    pub initial_scene: Scene,
    pub goal: GoalSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub center: Vec2,
    pub radius: f64,
}

/// Mixes several integers into one RNG seed (splitmix64 finalizer).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// True if the two bodies interpenetrate. Touching is not overlap.
pub fn bodies_overlap(a: &Body, b: &Body) -> bool {
    let mut pts = Vec::new();
    for fa in a.world_fixtures() {
        for fb in b.world_fixtures() {
            pts.clear();
            collide(&fa, &fb, 0.0, &mut pts);
            if pts.iter().any(|p| p.separation < -OVERLAP_TOL) {
                return true;
            }
        }
    }
    false
}

/// First non-boundary body that overlaps another body.
pub fn find_overlap(scene: &Scene) -> Option<(usize, usize)> {
    let bodies = &scene.bodies;
    for i in 0..bodies.len() {
        for j in (i + 1)..bodies.len() {
            if bodies[i].is_boundary() && bodies[j].is_boundary() {
                continue;
            }
            if bodies_overlap(&bodies[i], &bodies[j]) {
                return Some((bodies[i].id, bodies[j].id));
            }
        }
    }
    None
}

pub fn instantiate(template: &TaskTemplate, index: usize, seed: u64) -> Result<Task> {
    if index >= TASKS_PER_TEMPLATE {
        return Err(Error::InvalidScene(format!("task index {index} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, template.template_id as u64, index as u64]));
    for _ in 0..MAX_DRAWS {
        let params = template
            .parameter_ranges
            .iter()
            .map(|(k, &(lo, hi))| (k.clone(), rng.random_range(lo..hi)))
            .collect();
        let scene = template.build(&params);
        if scene.validate().is_err() || find_overlap(&scene).is_some() {
            continue;
        }
        // a layout that reaches its goal with no red ball is not a puzzle
        if run_trial(&scene, &template.goal)?.1.is_some() {
            continue;
        }
        return Ok(Task {
            template_id: template.template_id,
            task_index: index,
            initial_scene: scene,
            goal: template.goal,
        });
    }
    Err(Error::TemplateExhausted {
        template_id: template.template_id,
        index,
        draws: MAX_DRAWS,
    })
}

/// The initial scene with the red ball added as the last body.
pub fn apply_action(task: &Task, action: &Action) -> Result<Scene> {
    let (lo, hi) = ACTION_RADIUS;
    let r = action.radius;
    if !(r.is_finite() && (lo..=hi).contains(&r)) {
        return Err(Error::IllegalAction(format!("radius {r} outside [{lo}, {hi}]")));
    }
    let c = action.center;
    let inside = |v: f64| v.is_finite() && v - r >= -OVERLAP_TOL && v + r <= WORLD_SIZE + OVERLAP_TOL;
    if !(inside(c.x) && inside(c.y)) {
        return Err(Error::IllegalAction(format!("ball at ({}, {}) leaves the world", c.x, c.y)));
    }
    let mut scene = task.initial_scene.clone();
    scene.add(ShapeSpec::Circle { radius: r }, Color::Red, c);
    let red = scene.bodies.last().expect("just added");
    if let Some(other) = scene.bodies[..red.id].iter().find(|b| bodies_overlap(b, red)) {
        return Err(Error::Overlap { body_id: other.id });
    }
    Ok(scene)
}

/// Uniform draw over legal actions.
pub fn sample_action<R: Rng>(rng: &mut R) -> Action {
    let radius = rng.random_range(ACTION_RADIUS.0..=ACTION_RADIUS.1);
    let x = rng.random_range(radius..=WORLD_SIZE - radius);
    let y = rng.random_range(radius..=WORLD_SIZE - radius);
    Action {
        center: Vec2::new(x, y),
        radius,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub action: Action,
    pub scene: Scene,
    pub rollout: Rollout,
    /// First frame of the goal hold.
    pub goal_frame: usize,
    /// Trials consumed, including the successful one.
    pub trials: usize,
}

/// Frames every body must stay slow before a trial is abandoned.
const REST_FRAMES: usize = 20;
const REST_SPEED: f64 = 0.5;
/// Resampling cap for overlapping placements within one trial.
const MAX_RESAMPLES: usize = 10_000;

/// Simulates `scene` until the goal has held long enough, the world has
/// settled without the goal holding, or the hold can no longer complete.
/// The rollout of a success ends exactly `hold_frames` after the goal frame.
pub fn run_trial(scene: &Scene, goal: &GoalSpec) -> Result<(Rollout, Option<usize>)> {
    let (a, b) = goal.resolve(scene)?;
    let pair = (a.min(b), a.max(b));
    let hold = goal.hold_frames;
    let mut run = 0;
    let mut resting = 0;
    let rollout = simulate_until(scene, MAX_STEPS, |sim| {
        if sim.touching().contains(&pair) {
            run += 1;
            resting = 0;
            return run >= hold;
        }
        run = 0;
        resting = if sim.is_at_rest(REST_SPEED) { resting + 1 } else { 0 };
        resting >= REST_FRAMES || sim.frame() + hold > MAX_STEPS
    });
    let t = check_goal(&rollout, scene, goal)?;
    Ok((rollout, t))
}

/// Seeded random search over red-ball placements. Trial `k` draws from its
/// own RNG so results do not depend on evaluation order.
pub fn solve(task: &Task, budget: usize, seed: u64) -> Result<Option<Solution>> {
    if budget == 0 {
        return Err(Error::IllegalAction("budget must be at least 1".into()));
    }
    for trial in 0..budget {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
            seed,
            task.template_id as u64,
            task.task_index as u64,
            trial as u64,
        ]));
        let Some((action, scene)) = (0..MAX_RESAMPLES).find_map(|_| {
            let action = sample_action(&mut rng);
            apply_action(task, &action).ok().map(|s| (action, s))
        }) else {
            continue;
        };
        let (rollout, t) = run_trial(&scene, &task.goal)?;
        if let Some(goal_frame) = t {
            return Ok(Some(Solution {
                action,
                scene,
                rollout,
                goal_frame,
                trials: trial + 1,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_mix_distinctly() {
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
        assert_ne!(mix_seed(&[0]), mix_seed(&[0, 0]));
    }

    #[test]
    fn sampled_actions_are_legal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let a = sample_action(&mut rng);
            assert!((ACTION_RADIUS.0..=ACTION_RADIUS.1).contains(&a.radius));
            assert!(a.center.x >= a.radius && a.center.x <= WORLD_SIZE - a.radius);
            assert!(a.center.y >= a.radius && a.center.y <= WORLD_SIZE - a.radius);
        }
    }
}
