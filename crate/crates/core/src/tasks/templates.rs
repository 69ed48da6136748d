//! Five parametric puzzle layouts. Every layout puts the green ball at rest
//! somewhere it cannot reach its goal without help from the red ball.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::goal::{GoalSpec, Selector};
use crate::physics::{Color, Scene, ShapeClass, ShapeSpec, Vec2, WORLD_SIZE};

/// Thickness of shelves and walls built by the templates.
const BAR: f64 = 6.0;
/// Clearance between bodies placed on top of one another.
const REST_GAP: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Knock the green ball off a shelf into a pit onto the blue ball.
    BallOntoBall,
    /// Knock the green ball off an elevated bar onto the purple floor.
    KnockOffBar,
    /// Drop the green ball into the purple jar.
    JarCatch,
    /// Send the green ball down a ramp into a purple-floored pit.
    RollDownIncline,
    /// Dislodge the gray block holding the green ball on a tilted shelf.
    DislodgeBlocker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub template_id: usize,
    pub name: String,
    pub goal: GoalSpec,
    /// Named uniform parameter intervals.
    pub parameter_ranges: BTreeMap<String, (f64, f64)>,
    pub layout: Layout,
}

fn ranges(items: &[(&str, f64, f64)]) -> BTreeMap<String, (f64, f64)> {
    items
        .iter()
        .map(|&(n, lo, hi)| (n.to_string(), (lo, hi)))
        .collect()
}

const GREEN_BALL: Selector = Selector::new(Color::Green, ShapeClass::Circle);

/// The shipped template set, ids 0..5.
pub fn builtin_templates() -> Vec<TaskTemplate> {
    vec![
        TaskTemplate {
            template_id: 0,
            name: "ball_onto_ball".into(),
            goal: GoalSpec::touching(GREEN_BALL, Selector::new(Color::Blue, ShapeClass::Circle)),
            parameter_ranges: ranges(&[
                ("shelf_y", 80.0, 120.0),
                ("shelf_len", 50.0, 80.0),
                ("pit_x", 150.0, 200.0),
                ("blue_r", 9.0, 12.0),
                ("green_r", 7.0, 10.0),
                ("gray_x", 0.0, 1.0),
                ("drop_h", 20.0, 70.0),
            ]),
            layout: Layout::BallOntoBall,
        },
        TaskTemplate {
            template_id: 1,
            name: "knock_off_bar".into(),
            goal: GoalSpec::touching(GREEN_BALL, Selector::new(Color::Purple, ShapeClass::Bar)),
            parameter_ranges: ranges(&[
                ("shelf_x", 90.0, 166.0),
                ("shelf_y", 45.0, 70.0),
                ("shelf_len", 40.0, 70.0),
                ("green_r", 7.0, 11.0),
                ("gray_r", 6.0, 10.0),
                ("drop_h", 20.0, 70.0),
            ]),
            layout: Layout::KnockOffBar,
        },
        TaskTemplate {
            template_id: 2,
            name: "jar_catch".into(),
            goal: GoalSpec::touching(GREEN_BALL, Selector::new(Color::Purple, ShapeClass::Jar)),
            parameter_ranges: ranges(&[
                ("shelf_y", 50.0, 75.0),
                ("shelf_len", 50.0, 80.0),
                ("jar_x", 130.0, 190.0),
                ("jar_base", 56.0, 72.0),
                ("jar_side", 26.0, 36.0),
                ("green_r", 7.0, 10.0),
                ("drop_h", 20.0, 70.0),
            ]),
            layout: Layout::JarCatch,
        },
        TaskTemplate {
            template_id: 3,
            name: "roll_down_incline".into(),
            goal: GoalSpec::touching(GREEN_BALL, Selector::new(Color::Purple, ShapeClass::Bar)),
            parameter_ranges: ranges(&[
                ("shelf_y", 150.0, 190.0),
                ("shelf_len", 40.0, 60.0),
                ("ramp_drop", 0.35, 0.55),
                ("pit_wall_x", 170.0, 200.0),
                ("green_r", 7.0, 10.0),
                ("gray_r", 6.0, 9.0),
                ("drop_h", 20.0, 70.0),
            ]),
            layout: Layout::RollDownIncline,
        },
        TaskTemplate {
            template_id: 4,
            name: "dislodge_blocker".into(),
            goal: GoalSpec::touching(GREEN_BALL, Selector::new(Color::Purple, ShapeClass::Bar)),
            parameter_ranges: ranges(&[
                ("shelf_x", 70.0, 130.0),
                ("shelf_y", 36.0, 56.0),
                ("shelf_len", 40.0, 60.0),
                ("tilt", 0.04, 0.07),
                ("block", 10.0, 16.0),
                ("green_r", 7.0, 10.0),
                ("drop_h", 20.0, 70.0),
            ]),
            layout: Layout::DislodgeBlocker,
        },
    ]
}

fn bar(length: f64, width: f64, angle: f64) -> ShapeSpec {
    ShapeSpec::Bar {
        length,
        width,
        angle_rad: angle.rem_euclid(TAU),
    }
}

// keeps a dropped ball of radius r under the ceiling
fn below_ceiling(y: f64, r: f64) -> f64 {
    y.min(WORLD_SIZE - r - 1.0)
}

fn circle(radius: f64) -> ShapeSpec {
    ShapeSpec::Circle { radius }
}

impl TaskTemplate {
    /// Builds the initial scene (without red ball) from drawn parameters.
    pub fn build(&self, p: &BTreeMap<String, f64>) -> Scene {
        let v = |name: &str| p[name];
        let mut s = Scene::empty();
        match self.layout {
            Layout::BallOntoBall => {
                let (shelf_y, len, pit_x) = (v("shelf_y"), v("shelf_len"), v("pit_x"));
                let (rb, rg) = (v("blue_r"), v("green_r"));
                let interior = 2.0 * rb + rg;
                let wall_h = 2.0 * rb + rg;
                let shelf_right = pit_x - 0.25 * interior;
                s.add(bar(len, BAR, 0.0), Color::Black, Vec2::new(shelf_right - len / 2.0, shelf_y));
                s.add(circle(rg), Color::Green, Vec2::new(shelf_right - rg - 4.0, shelf_y + BAR / 2.0 + rg + REST_GAP));
                // the right wall rises to the shelf and stops overshooting balls
                let left_x = pit_x - interior / 2.0 - BAR / 2.0;
                let right_x = pit_x + interior / 2.0 + BAR / 2.0;
                s.add(bar(wall_h, BAR, TAU / 4.0), Color::Black, Vec2::new(left_x, wall_h / 2.0 + REST_GAP));
                let back_h = shelf_y + 20.0;
                s.add(bar(back_h, BAR, TAU / 4.0), Color::Black, Vec2::new(right_x, back_h / 2.0 + REST_GAP));
                s.add(circle(rb), Color::Blue, Vec2::new(pit_x, rb + REST_GAP));
                // a gray ball dropped behind the back wall
                let gray_r = 5.0;
                let room = WORLD_SIZE - (right_x + BAR / 2.0);
                let gx = right_x + BAR / 2.0 + gray_r + 0.5 + v("gray_x") * (room - 2.0 * gray_r - 1.0);
                s.add(circle(gray_r), Color::Gray, Vec2::new(gx, gray_r + v("drop_h")));
            }
            Layout::KnockOffBar => {
                let (x, y, len, rg) = (v("shelf_x"), v("shelf_y"), v("shelf_len"), v("green_r"));
                s.add(bar(WORLD_SIZE - 8.0, 4.0, 0.0), Color::Purple, Vec2::new(WORLD_SIZE / 2.0, 2.0 + REST_GAP));
                s.add(bar(len, BAR, 0.0), Color::Black, Vec2::new(x, y));
                s.add(circle(rg), Color::Green, Vec2::new(x, y + BAR / 2.0 + rg + REST_GAP));
                let gr = v("gray_r");
                s.add(bar(36.0, BAR, 0.0), Color::Black, Vec2::new(228.0, 210.0));
                s.add(circle(gr), Color::Gray, Vec2::new(228.0, below_ceiling(210.0 + BAR / 2.0 + gr + v("drop_h"), gr)));
                s.add(bar(30.0, BAR, 0.0), Color::Black, Vec2::new(24.0, 180.0));
            }
            Layout::JarCatch => {
                let (y, len, jx) = (v("shelf_y"), v("shelf_len"), v("jar_x"));
                let (base, side, rg) = (v("jar_base"), v("jar_side"), v("green_r"));
                let shelf_right = jx - base / 2.0 + 6.0;
                s.add(bar(len, BAR, 0.0), Color::Black, Vec2::new(shelf_right - len / 2.0, y));
                s.add(circle(rg), Color::Green, Vec2::new(shelf_right - rg - 4.0, y + BAR / 2.0 + rg + REST_GAP));
                s.add(
                    ShapeSpec::Jar {
                        base_length: base,
                        side_length: side,
                        width: 4.0,
                        angle_rad: 0.0,
                    },
                    Color::Purple,
                    Vec2::new(jx, REST_GAP),
                );
                s.add(bar(28.0, BAR, 0.0), Color::Black, Vec2::new(230.0, 190.0));
                s.add(circle(7.0), Color::Gray, Vec2::new(230.0, below_ceiling(190.0 + BAR / 2.0 + 7.0 + v("drop_h"), 7.0)));
            }
            Layout::RollDownIncline => {
                let (y, len, rg) = (v("shelf_y"), v("shelf_len"), v("green_r"));
                let wall_x = v("pit_wall_x");
                let shelf_left = 8.0;
                let shelf_right = shelf_left + len;
                s.add(bar(len, BAR, 0.0), Color::Black, Vec2::new(shelf_left + len / 2.0, y));
                s.add(circle(rg), Color::Green, Vec2::new(shelf_right - rg - 4.0, y + BAR / 2.0 + rg + REST_GAP));
                // ramp from just below the shelf end down to the pit wall
                let top = Vec2::new(shelf_right + 8.0, y - 30.0);
                let bottom_y = (y - 30.0) * (1.0 - v("ramp_drop")).max(0.3);
                let bottom = Vec2::new(wall_x - 4.0, bottom_y.max(40.0));
                let d = bottom - top;
                let angle = d.y.atan2(d.x);
                let mid = (top + bottom) * 0.5;
                s.add(bar(d.length(), BAR, angle), Color::Black, mid);
                let wall_h = 24.0;
                s.add(bar(wall_h, BAR, TAU / 4.0), Color::Black, Vec2::new(wall_x, wall_h / 2.0 + 4.0 + REST_GAP));
                let pad_left = wall_x + BAR / 2.0;
                let pad_len = WORLD_SIZE - 2.0 - pad_left;
                s.add(bar(pad_len, 4.0, 0.0), Color::Purple, Vec2::new(pad_left + pad_len / 2.0, 2.0 + REST_GAP));
                let gr = v("gray_r");
                s.add(circle(gr), Color::Gray, Vec2::new(60.0, gr + v("drop_h")));
            }
            Layout::DislodgeBlocker => {
                let (x, y, len, tilt) = (v("shelf_x"), v("shelf_y"), v("shelf_len"), v("tilt"));
                let (block, rg) = (v("block"), v("green_r"));
                let pad_top = 4.0 + REST_GAP;
                s.add(bar(WORLD_SIZE - 8.0, 4.0, 0.0), Color::Purple, Vec2::new(WORLD_SIZE / 2.0, 2.0 + REST_GAP));
                // shelf sloping down to the right
                let angle = -tilt;
                let dir = Vec2::new(angle.cos(), angle.sin());
                let up = Vec2::new(-angle.sin(), angle.cos());
                let centre = Vec2::new(x, y);
                s.add(bar(len, BAR, angle), Color::Black, centre);
                let right_edge = [-1.0, 1.0]
                    .iter()
                    .map(|&k| (centre + dir * (len / 2.0) + up * (k * BAR / 2.0)).x)
                    .fold(f64::MIN, f64::max);
                // a post standing on the pad just past the low end of the shelf
                let post_w = 6.0;
                let post_left = right_edge + 0.1;
                let end_top = centre + dir * (len / 2.0) + up * (BAR / 2.0);
                let post_h = end_top.y + block - pad_top;
                s.add(
                    bar(post_h, post_w, TAU / 4.0),
                    Color::Gray,
                    Vec2::new(post_left + post_w / 2.0, pad_top + post_h / 2.0),
                );
                // green ball on the shelf, resting against the post
                let gx = post_left - rg - 0.05;
                let t = (gx - centre.x - up.x * (BAR / 2.0 + rg + REST_GAP)) / dir.x;
                let g = centre + dir * t + up * (BAR / 2.0 + rg + REST_GAP);
                s.add(circle(rg), Color::Green, g);
                s.add(bar(30.0, BAR, 0.0), Color::Black, Vec2::new(226.0, 200.0));
                s.add(circle(7.0), Color::Gray, Vec2::new(226.0, below_ceiling(200.0 + BAR / 2.0 + 7.0 + v("drop_h"), 7.0)));
            }
        }
        s
    }
}
