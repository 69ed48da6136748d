use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::body::{Fixture, Scene};
use super::collide::{collide, ContactPoint};
use super::math::{Transform, Vec2};

pub const FPS: usize = 60;
pub const DT: f64 = 1.0 / FPS as f64;
pub const MAX_STEPS: usize = 1000;

/// Engine constants. `Default` is the configuration every rollout uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    /// Downward acceleration in units/s².
    pub gravity: f64,
    pub restitution: f64,
    pub friction: f64,
    pub linear_damping: f64,
    pub angular_damping: f64,
    pub velocity_iterations: usize,
    /// Fraction of excess penetration removed per step.
    pub baumgarte: f64,
    /// Penetration tolerated without positional correction.
    pub slop: f64,
    /// Gap below which two fixtures count as touching.
    pub contact_margin: f64,
    /// Approach speed below which contacts do not bounce.
    pub restitution_threshold: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            gravity: 200.0,
            restitution: 0.2,
            friction: 0.5,
            linear_damping: 0.0,
            angular_damping: 0.0,
            velocity_iterations: 16,
            baumgarte: 0.2,
            slop: 0.1,
            contact_margin: 0.5,
            restitution_threshold: 120.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactKind {
    Begin,
    End,
}

/// Kinematic state of one body at one frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Accumulated rotation, not wrapped.
    pub angle: f64,
}

/// A change of touching state between two bodies, with `id_a < id_b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub timestep: usize,
    pub id_a: usize,
    pub id_b: usize,
    pub kind: ContactKind,
    pub a: Snapshot,
    pub b: Snapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub velocity: Vec2,
    pub angle: f64,
    pub angular_velocity: f64,
}

/// Frame-indexed trajectory. `frames[k]` holds the dynamic bodies (in
/// `dynamic_ids` order) at frame `k`, i.e. before step `k` runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub dynamic_ids: Vec<usize>,
    pub frames: Vec<Vec<Pose>>,
    pub contacts: Vec<ContactEvent>,
    pub steps_run: usize,
}

impl Rollout {
    /// Per-frame touching mask for a body pair, rebuilt from Begin/End events.
    pub fn touching_mask(&self, a: usize, b: usize) -> Vec<bool> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut mask = vec![false; self.steps_run];
        let mut since: Option<usize> = None;
        for ev in self.contacts.iter().filter(|e| e.id_a == lo && e.id_b == hi) {
            match ev.kind {
                ContactKind::Begin => since = Some(ev.timestep),
                ContactKind::End => {
                    if let Some(start) = since.take() {
                        mask[start..ev.timestep].iter_mut().for_each(|m| *m = true);
                    }
                }
            }
        }
        if let Some(start) = since {
            mask[start..].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn pose(&self, frame: usize, id: usize) -> Option<&Pose> {
        let slot = self.dynamic_ids.iter().position(|&d| d == id)?;
        self.frames.get(frame).map(|f| &f[slot])
    }
}

type ContactKey = (usize, usize, u32);

struct SolverPoint {
    key: ContactKey,
    normal: Vec2,
    tangent: Vec2,
    r_a: Vec2,
    r_b: Vec2,
    separation: f64,
    normal_mass: f64,
    tangent_mass: f64,
    velocity_target: f64,
    normal_impulse: f64,
    tangent_impulse: f64,
    push_impulse: f64,
}

struct PairContact {
    a: usize,
    b: usize,
    points: Vec<SolverPoint>,
}

/// Stateful stepper over a scene. Keeps the touching set between frames so
/// Begin/End transitions can be reported.
pub struct Simulator {
    scene: Scene,
    params: EngineParams,
    fixtures: Vec<Vec<Fixture>>,
    bounding: Vec<f64>,
    touching: BTreeSet<(usize, usize)>,
    frame: usize,
    scratch: Vec<ContactPoint>,
    /// Accumulated (normal, tangent) impulses from the previous step.
    warm: BTreeMap<(usize, usize, ContactKey), (f64, f64)>,
}

impl Simulator {
    pub fn new(scene: Scene) -> Simulator {
        Simulator::with_params(scene, EngineParams::default())
    }

    pub fn with_params(scene: Scene, params: EngineParams) -> Simulator {
        let props: Vec<_> = scene.bodies.iter().map(|b| b.mass_props()).collect();
        Simulator {
            fixtures: props.iter().map(|p| p.fixtures.clone()).collect(),
            bounding: props.iter().map(|p| p.bounding_radius).collect(),
            scene,
            params,
            touching: BTreeSet::new(),
            frame: 0,
            scratch: Vec::new(),
            warm: BTreeMap::new(),
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn into_scene(self) -> Scene {
        self.scene
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    /// Index of the frame the next call to `step` will process.
    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Pairs found touching during the last step (the state at frame `frame() - 1`).
    pub fn touching(&self) -> &BTreeSet<(usize, usize)> {
        &self.touching
    }

    pub fn snapshot(&self, id: usize) -> Snapshot {
        let b = &self.scene.bodies[id];
        Snapshot {
            position: b.position,
            velocity: b.velocity,
            angle: b.angle,
        }
    }

    /// True when every dynamic body moves slower than `speed` (units/s) and
    /// spins slower than `speed / 10` rad/s.
    pub fn is_at_rest(&self, speed: f64) -> bool {
        self.scene.bodies.iter().filter(|b| b.dynamic).all(|b| {
            b.velocity.length() < speed && b.angular_velocity.abs() < speed / 10.0
        })
    }

    /// Total kinetic plus gravitational potential energy (floor at y = 0).
    pub fn energy(&self) -> f64 {
        let g = self.params.gravity;
        self.scene
            .bodies
            .iter()
            .filter(|b| b.dynamic)
            .map(|b| {
                let m = b.mass();
                let inertia = 1.0 / b.inverse_inertia;
                0.5 * m * b.velocity.length_squared()
                    + 0.5 * inertia * b.angular_velocity * b.angular_velocity
                    + m * g * b.position.y
            })
            .sum()
    }

    fn detect(&mut self) -> Vec<PairContact> {
        let bodies = &self.scene.bodies;
        let margin = self.params.contact_margin;
        let world: Vec<Vec<_>> = bodies
            .iter()
            .zip(&self.fixtures)
            .map(|(b, fx)| {
                let xf = Transform::new(b.position, b.angle);
                fx.iter().map(|f| f.to_world(&xf)).collect()
            })
            .collect();
        let reach_speed: Vec<f64> = bodies
            .iter()
            .zip(&self.bounding)
            .map(|(b, r)| b.velocity.length() + b.angular_velocity.abs() * r)
            .collect();
        // impacts can hand one body's speed to another within a step
        let fastest = reach_speed.iter().copied().fold(0.0, f64::max);
        let mut pairs = Vec::new();
        for i in 0..bodies.len() {
            for j in (i + 1)..bodies.len() {
                let (bi, bj) = (&bodies[i], &bodies[j]);
                if !bi.dynamic && !bj.dynamic {
                    continue;
                }
                // speculative distance: anything closer could close the gap this step
                let speculative = margin + (reach_speed[i] + reach_speed[j] + fastest) * DT;
                let reach = self.bounding[i] + self.bounding[j] + speculative;
                if (bi.position - bj.position).length_squared() > reach * reach {
                    continue;
                }
                let mut found: Vec<(ContactKey, ContactPoint)> = Vec::new();
                for (fi, fa) in world[i].iter().enumerate() {
                    for (fj, fb) in world[j].iter().enumerate() {
                        self.scratch.clear();
                        collide(fa, fb, speculative, &mut self.scratch);
                        found.extend(self.scratch.iter().map(|cp| ((fi, fj, cp.feature), *cp)));
                    }
                }
                if found.is_empty() {
                    continue;
                }
                let points = found
                    .iter()
                    .map(|&(key, cp)| SolverPoint {
                        key,
                        normal: cp.normal,
                        tangent: Vec2::new(cp.normal.y, -cp.normal.x),
                        r_a: cp.point - bi.position,
                        r_b: cp.point - bj.position,
                        separation: cp.separation,
                        normal_mass: 0.0,
                        tangent_mass: 0.0,
                        velocity_target: 0.0,
                        normal_impulse: 0.0,
                        tangent_impulse: 0.0,
                        push_impulse: 0.0,
                    })
                    .collect();
                pairs.push(PairContact { a: i, b: j, points });
            }
        }
        pairs
    }

    /// Advances one fixed step of `DT` and returns the contact-state changes
    /// observed at the current frame. A pair touches when some point lies
    /// within the contact margin or the solver pushed the bodies apart.
    pub fn step(&mut self) -> Vec<ContactEvent> {
        let frame = self.frame;
        let before: Vec<Snapshot> = (0..self.scene.bodies.len()).map(|i| self.snapshot(i)).collect();
        let p = self.params.clone();

        for body in self.scene.bodies.iter_mut().filter(|b| b.dynamic) {
            body.velocity.y -= p.gravity * DT;
            if p.linear_damping > 0.0 {
                body.velocity = body.velocity * (1.0 / (1.0 + DT * p.linear_damping));
            }
            if p.angular_damping > 0.0 {
                body.angular_velocity /= 1.0 + DT * p.angular_damping;
            }
        }

        let mut contacts = self.detect();
        let n = self.scene.bodies.len();
        let mut push_v = vec![Vec2::ZERO; n];
        let mut push_w = vec![0.0; n];
        let bodies = &mut self.scene.bodies;

        for pair in &mut contacts {
            let (ba, bb) = (&bodies[pair.a], &bodies[pair.b]);
            let (ima, iia, imb, iib) =
                (ba.inverse_mass, ba.inverse_inertia, bb.inverse_mass, bb.inverse_inertia);
            for pt in &mut pair.points {
                let rn_a = pt.r_a.cross(pt.normal);
                let rn_b = pt.r_b.cross(pt.normal);
                let k_n = ima + imb + iia * rn_a * rn_a + iib * rn_b * rn_b;
                pt.normal_mass = if k_n > 0.0 { 1.0 / k_n } else { 0.0 };
                let rt_a = pt.r_a.cross(pt.tangent);
                let rt_b = pt.r_b.cross(pt.tangent);
                let k_t = ima + imb + iia * rt_a * rt_a + iib * rt_b * rt_b;
                pt.tangent_mass = if k_t > 0.0 { 1.0 / k_t } else { 0.0 };
                let dv = relative_velocity(
                    ba.velocity,
                    ba.angular_velocity,
                    pt.r_a,
                    bb.velocity,
                    bb.angular_velocity,
                    pt.r_b,
                );
                let vn = dv.dot(pt.normal);
                // bounce if the gap closes within this step at speed
                pt.velocity_target = if vn < -p.restitution_threshold && pt.separation + vn * DT < 0.0 {
                    -p.restitution * vn
                } else if pt.separation > 0.0 {
                    -pt.separation / DT
                } else {
                    0.0
                };
            }
        }

        for pair in &mut contacts {
            let (a, b) = (pair.a, pair.b);
            for pt in &mut pair.points {
                if let Some(&(jn, jt)) = self.warm.get(&(a, b, pt.key)) {
                    pt.normal_impulse = jn;
                    pt.tangent_impulse = jt;
                    apply_impulse(bodies, a, b, pt.r_a, pt.r_b, pt.normal * jn + pt.tangent * jt);
                }
            }
        }

        for _ in 0..p.velocity_iterations {
            for pair in &mut contacts {
                let (a, b) = (pair.a, pair.b);
                for pt in &mut pair.points {
                    // friction
                    let dv = relative_velocity(
                        bodies[a].velocity,
                        bodies[a].angular_velocity,
                        pt.r_a,
                        bodies[b].velocity,
                        bodies[b].angular_velocity,
                        pt.r_b,
                    );
                    let vt = dv.dot(pt.tangent);
                    let max_f = p.friction * pt.normal_impulse;
                    let new_t = (pt.tangent_impulse - vt * pt.tangent_mass).clamp(-max_f, max_f);
                    let d_t = new_t - pt.tangent_impulse;
                    pt.tangent_impulse = new_t;
                    apply_impulse(bodies, a, b, pt.r_a, pt.r_b, pt.tangent * d_t);

                    // non-penetration; a positive gap may close within this step
                    let dv = relative_velocity(
                        bodies[a].velocity,
                        bodies[a].angular_velocity,
                        pt.r_a,
                        bodies[b].velocity,
                        bodies[b].angular_velocity,
                        pt.r_b,
                    );
                    let vn = dv.dot(pt.normal);
                    let new_n = (pt.normal_impulse + (pt.velocity_target - vn) * pt.normal_mass).max(0.0);
                    let d_n = new_n - pt.normal_impulse;
                    pt.normal_impulse = new_n;
                    apply_impulse(bodies, a, b, pt.r_a, pt.r_b, pt.normal * d_n);

                    // split-impulse positional correction on pseudo velocities
                    let depth = -pt.separation - p.slop;
                    if depth > 0.0 {
                        let bias = p.baumgarte * depth / DT;
                        let pdv = relative_velocity(push_v[a], push_w[a], pt.r_a, push_v[b], push_w[b], pt.r_b);
                        let new_p = (pt.push_impulse + (bias - pdv.dot(pt.normal)) * pt.normal_mass).max(0.0);
                        let imp = pt.normal * (new_p - pt.push_impulse);
                        pt.push_impulse = new_p;
                        let (ima, iia) = (bodies[a].inverse_mass, bodies[a].inverse_inertia);
                        let (imb, iib) = (bodies[b].inverse_mass, bodies[b].inverse_inertia);
                        push_v[a] -= imp * ima;
                        push_w[a] -= iia * pt.r_a.cross(imp);
                        push_v[b] += imp * imb;
                        push_w[b] += iib * pt.r_b.cross(imp);
                    }
                }
            }
        }

        for (i, body) in bodies.iter_mut().enumerate().filter(|(_, b)| b.dynamic) {
            body.position += (body.velocity + push_v[i]) * DT;
            body.angle += (body.angular_velocity + push_w[i]) * DT;
        }

        self.warm = contacts
            .iter()
            .flat_map(|c| {
                c.points
                    .iter()
                    .map(move |pt| ((c.a, c.b, pt.key), (pt.normal_impulse, pt.tangent_impulse)))
            })
            .collect();

        let now: BTreeSet<(usize, usize)> = contacts
            .iter()
            .filter(|c| {
                c.points
                    .iter()
                    .any(|pt| pt.separation <= p.contact_margin || pt.normal_impulse > 0.0)
            })
            .map(|c| (c.a, c.b))
            .collect();
        let mut events = Vec::new();
        let mk = |a: usize, b: usize, kind| ContactEvent {
            timestep: frame,
            id_a: a,
            id_b: b,
            kind,
            a: before[a],
            b: before[b],
        };
        for &(a, b) in now.difference(&self.touching) {
            events.push(mk(a, b, ContactKind::Begin));
        }
        for &(a, b) in self.touching.difference(&now) {
            events.push(mk(a, b, ContactKind::End));
        }
        events.sort_by_key(|e| (e.id_a, e.id_b));
        self.touching = now;
        self.frame += 1;
        events
    }

    fn poses(&self, ids: &[usize]) -> Vec<Pose> {
        ids.iter()
            .map(|&id| {
                let b = &self.scene.bodies[id];
                Pose {
                    position: b.position,
                    velocity: b.velocity,
                    angle: b.angle,
                    angular_velocity: b.angular_velocity,
                }
            })
            .collect()
    }
}

fn relative_velocity(va: Vec2, wa: f64, ra: Vec2, vb: Vec2, wb: f64, rb: Vec2) -> Vec2 {
    (vb + Vec2::cross_scalar(wb, rb)) - (va + Vec2::cross_scalar(wa, ra))
}

fn apply_impulse(bodies: &mut [super::body::Body], a: usize, b: usize, ra: Vec2, rb: Vec2, imp: Vec2) {
    let ba = &mut bodies[a];
    ba.velocity -= imp * ba.inverse_mass;
    ba.angular_velocity -= ba.inverse_inertia * ra.cross(imp);
    let bb = &mut bodies[b];
    bb.velocity += imp * bb.inverse_mass;
    bb.angular_velocity += bb.inverse_inertia * rb.cross(imp);
}

/// Runs `max_steps` steps, recording every frame and contact event.
pub fn simulate(scene: &Scene, max_steps: usize) -> Rollout {
    simulate_until(scene, max_steps, |_| false)
}

/// Like [`simulate`] but stops early once `stop` returns true after a step.
pub fn simulate_until(
    scene: &Scene,
    max_steps: usize,
    mut stop: impl FnMut(&Simulator) -> bool,
) -> Rollout {
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let dynamic_ids: Vec<usize> = scene.bodies.iter().filter(|b| b.dynamic).map(|b| b.id).collect();
    let mut sim = Simulator::new(scene.clone());
    let mut frames = Vec::with_capacity(max_steps.min(MAX_STEPS));
    let mut contacts = Vec::new();
    while sim.frame() < max_steps {
        frames.push(sim.poses(&dynamic_ids));
        contacts.extend(sim.step());
        if stop(&sim) {
            break;
        }
    }
    Rollout {
        dynamic_ids,
        steps_run: frames.len(),
        frames,
        contacts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::body::{Color, ShapeSpec};

    fn ball_scene(x: f64, y: f64, r: f64) -> Scene {
        let mut scene = Scene::empty();
        scene.add(ShapeSpec::Circle { radius: r }, Color::Green, Vec2::new(x, y));
        scene
    }

    #[test]
    fn free_fall_first_step() {
        let mut sim = Simulator::new(ball_scene(128.0, 128.0, 5.0));
        let events = sim.step();
        assert!(events.is_empty());
        let b = &sim.scene().bodies[4];
        assert!((b.velocity.y + 200.0 * DT).abs() < 1e-12);
        assert_eq!(b.velocity.x, 0.0);
        assert!((b.position.y - 128.0).abs() < 200.0 * DT * DT + 1e-12);
    }

    #[test]
    fn static_bar_never_moves() {
        let mut scene = Scene::empty();
        scene.add(
            ShapeSpec::Bar {
                length: 60.0,
                width: 4.0,
                angle_rad: 0.3,
            },
            Color::Black,
            Vec2::new(100.0, 80.0),
        );
        let before = scene.bodies[4].clone();
        let mut sim = Simulator::new(scene);
        for _ in 0..300 {
            sim.step();
        }
        assert_eq!(sim.scene().bodies[4], before);
    }

    #[test]
    fn ball_comes_to_rest_on_floor() {
        let rollout = simulate(&ball_scene(128.0, 60.0, 6.0), 600);
        let last = rollout.frames.last().unwrap()[0];
        assert!((last.position.y - 6.0).abs() < 0.3, "{:?}", last.position);
        assert!(last.velocity.length() < 1.0);
        let mask = rollout.touching_mask(0, 4);
        assert!(mask[500..].iter().all(|&t| t));
    }

    #[test]
    fn touching_mask_from_events() {
        let rollout = simulate(&ball_scene(128.0, 60.0, 6.0), 400);
        let mask = rollout.touching_mask(4, 0);
        let begins = rollout
            .contacts
            .iter()
            .filter(|e| e.kind == ContactKind::Begin)
            .count();
        assert!(begins >= 1);
        let first = mask.iter().position(|&t| t).unwrap();
        assert_eq!(first, rollout.contacts[0].timestep);
    }
}
