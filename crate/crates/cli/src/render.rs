//! Rasterized views of a solved task's rollout, written as binary PPM.

use anyhow::{anyhow, Result};
use qualsim::dataset::TaskExample;
use qualsim::physics::{Rollout, Scene, Vec2, WorldFixture, WORLD_SIZE};
use qualsim::tasks::{apply_action, run_trial};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const SEPARATOR: [u8; 3] = [200, 200, 200];
const GAP: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Image {
            width,
            height,
            rgb: fill.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }
}

fn contains(f: &WorldFixture, p: Vec2) -> bool {
    match f {
        WorldFixture::Circle { center, radius } => (p - *center).length_squared() <= radius * radius,
        WorldFixture::Polygon { vertices, normals } => {
            vertices.iter().zip(normals).all(|(v, n)| (p - *v).dot(*n) <= 0.0)
        }
    }
}

fn bounds(f: &WorldFixture) -> (Vec2, Vec2) {
    match f {
        WorldFixture::Circle { center, radius } => (
            Vec2::new(center.x - radius, center.y - radius),
            Vec2::new(center.x + radius, center.y + radius),
        ),
        WorldFixture::Polygon { vertices, .. } => {
            let xs = vertices.iter().map(|v| v.x);
            let ys = vertices.iter().map(|v| v.y);
            (
                Vec2::new(xs.clone().fold(f64::INFINITY, f64::min), ys.clone().fold(f64::INFINITY, f64::min)),
                Vec2::new(xs.fold(f64::NEG_INFINITY, f64::max), ys.fold(f64::NEG_INFINITY, f64::max)),
            )
        }
    }
}

/// Draws the scene in body-id order, y up, sampling each pixel center.
pub fn rasterize(scene: &Scene, size: usize) -> Image {
    let mut img = Image::new(size, size, BACKGROUND);
    let scale = WORLD_SIZE / size as f64;
    let to_px = |v: f64| (v / scale).floor().clamp(0.0, size as f64 - 1.0) as usize;
    for body in &scene.bodies {
        if body.is_boundary() {
            continue;
        }
        let color = body.color.rgb();
        for f in body.world_fixtures() {
            let (lo, hi) = bounds(&f);
            if hi.x < 0.0 || hi.y < 0.0 || lo.x > WORLD_SIZE || lo.y > WORLD_SIZE {
                continue;
            }
            for px in to_px(lo.x)..=to_px(hi.x) {
                for py in to_px(lo.y)..=to_px(hi.y) {
                    let p = Vec2::new((px as f64 + 0.5) * scale, (py as f64 + 0.5) * scale);
                    if contains(&f, p) {
                        img.set(px, size - 1 - py, color);
                    }
                }
            }
        }
    }
    img
}

/// The scene with dynamic bodies moved to their pose at `frame`.
pub fn scene_at(scene: &Scene, rollout: &Rollout, frame: usize) -> Scene {
    let mut s = scene.clone();
    let frame = frame.min(rollout.frames.len().saturating_sub(1));
    for b in &mut s.bodies {
        if let Some(p) = rollout.pose(frame, b.id) {
            b.position = p.position;
            b.angle = p.angle;
        }
    }
    s
}

/// Re-simulates the stored solution.
pub fn replay(ex: &TaskExample) -> Result<(Scene, Rollout)> {
    let scene = apply_action(&ex.task, &ex.action)?;
    let (rollout, goal) = run_trial(&scene, &ex.task.goal)?;
    if goal != Some(ex.goal_frame) {
        return Err(anyhow!("replay of {} reached the goal at {goal:?}, expected {}", ex.id, ex.goal_frame));
    }
    Ok((scene, rollout))
}

/// Key frames of a strip: the initial frame, each salient event, the goal frame.
pub fn strip_frames(ex: &TaskExample) -> Vec<usize> {
    let mut f = vec![0];
    f.extend(ex.salient_events().iter().map(|e| e.timestep));
    f.push(ex.goal_frame);
    f
}

/// Panels side by side with a thin separator.
pub fn hstack(panels: &[Image]) -> Image {
    let h = panels.iter().map(|p| p.height).max().unwrap_or(0);
    let w = panels.iter().map(|p| p.width).sum::<usize>() + GAP * panels.len().saturating_sub(1);
    let mut out = Image::new(w, h, SEPARATOR);
    let mut x0 = 0;
    for p in panels {
        for y in 0..p.height {
            for x in 0..p.width {
                out.set(x0 + x, y, p.pixel(x, y));
            }
        }
        x0 += p.width + GAP;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    Frames,
    Strip,
}

/// Named images for one task: every `every`-th frame, or one key-frame strip.
pub fn render_task(ex: &TaskExample, mode: RenderMode, every: usize, size: usize) -> Result<Vec<(String, Image)>> {
    let (scene, rollout) = replay(ex)?;
    Ok(match mode {
        RenderMode::Frames => (0..rollout.frames.len())
            .step_by(every.max(1))
            .map(|k| (format!("frame_{k:04}.ppm"), rasterize(&scene_at(&scene, &rollout, k), size)))
            .collect(),
        RenderMode::Strip => {
            let panels: Vec<Image> = strip_frames(ex)
                .into_iter()
                .map(|k| rasterize(&scene_at(&scene, &rollout, k), size))
                .collect();
            vec![("strip.ppm".to_string(), hstack(&panels))]
        }
    })
}
