use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{Color, Rollout, Scene, ShapeClass};

/// Frames a goal relation must hold without interruption.
pub const HOLD_FRAMES: usize = 180;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Touching,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selector {
    pub color: Color,
    pub class: ShapeClass,
}

impl Selector {
    pub const fn new(color: Color, class: ShapeClass) -> Self {
        Selector { color, class }
    }

    pub fn resolve(&self, scene: &Scene) -> Result<usize> {
        let mut hits = scene
            .bodies
            .iter()
            .filter(|b| b.color == self.color && b.shape.class() == self.class);
        match (hits.next(), hits.next()) {
            (Some(b), None) => Ok(b.id),
            (None, _) => Err(Error::InvalidScene(format!("no body matches {self:?}"))),
            _ => Err(Error::InvalidScene(format!("several bodies match {self:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub relation: Relation,
    pub subject: Selector,
    pub object: Selector,
    pub hold_frames: usize,
}

impl GoalSpec {
    pub const fn touching(subject: Selector, object: Selector) -> Self {
        GoalSpec {
            relation: Relation::Touching,
            subject,
            object,
            hold_frames: HOLD_FRAMES,
        }
    }

    /// Body ids of (subject, object) in `scene`.
    pub fn resolve(&self, scene: &Scene) -> Result<(usize, usize)> {
        Ok((self.subject.resolve(scene)?, self.object.resolve(scene)?))
    }
}

/// First frame `t` such that `mask[t..t + hold]` is all true.
pub fn first_hold(mask: &[bool], hold: usize) -> Option<usize> {
    let mut run = 0;
    for (t, &on) in mask.iter().enumerate() {
        run = if on { run + 1 } else { 0 };
        if run >= hold {
            return Some(t + 1 - hold);
        }
    }
    None
}

/// First frame from which the goal relation holds for `hold_frames`
/// consecutive frames of `rollout`, which must come from `scene`.
pub fn check_goal(rollout: &Rollout, scene: &Scene, goal: &GoalSpec) -> Result<Option<usize>> {
    let (a, b) = goal.resolve(scene)?;
    let mask = match goal.relation {
        Relation::Touching => rollout.touching_mask(a, b),
    };
    Ok(first_hold(&mask, goal.hold_frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(ranges: &[(usize, usize)], len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for &(a, b) in ranges {
            m[a..=b].iter_mut().for_each(|x| *x = true);
        }
        m
    }

    #[test]
    fn long_contact_is_found() {
        assert_eq!(first_hold(&mask(&[(100, 400)], 1000), 180), Some(100));
    }

    #[test]
    fn short_contact_is_rejected() {
        assert_eq!(first_hold(&mask(&[(100, 250)], 1000), 180), None);
    }

    #[test]
    fn run_length_boundary() {
        assert_eq!(first_hold(&mask(&[(10, 50), (60, 238)], 400), 180), None);
        assert_eq!(first_hold(&mask(&[(10, 50), (60, 239)], 400), 180), Some(60));
    }
}
