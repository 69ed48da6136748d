//! Fixed-timestep 2D rigid-body engine: circles, bars, jars and the four
//! world boundaries, with gravity, Coulomb friction and impulse collisions.

mod body;
mod collide;
mod math;
mod random;
mod world;

pub use body::{
    Body, Color, Fixture, MassProps, Scene, ShapeClass, ShapeSpec, Side, WorldFixture,
    BOUNDARY_THICKNESS, WORLD_SIZE,
};
pub use collide::{collide, ContactPoint};
pub use math::{Rot, Transform, Vec2};
pub use world::{
    simulate, simulate_until, ContactEvent, ContactKind, EngineParams, Pose, Rollout, Simulator,
    Snapshot, DT, FPS, MAX_STEPS,
};
pub use random::random_scene;
