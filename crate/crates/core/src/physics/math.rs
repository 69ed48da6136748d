use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A 2D vector in world units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// Scalar z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Cross product of a scalar angular term with a vector: `w × v`.
    pub fn cross_scalar(w: f64, v: Vec2) -> Vec2 {
        Vec2::new(-w * v.y, w * v.x)
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rotate(self, rot: Rot) -> Vec2 {
        Vec2::new(
            rot.cos * self.x - rot.sin * self.y,
            rot.sin * self.x + rot.cos * self.y,
        )
    }

    pub fn inv_rotate(self, rot: Rot) -> Vec2 {
        Vec2::new(
            rot.cos * self.x + rot.sin * self.y,
            -rot.sin * self.x + rot.cos * self.y,
        )
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Precomputed rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot {
    pub sin: f64,
    pub cos: f64,
}

impl Rot {
    pub fn new(angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        Rot { sin, cos }
    }
}

/// Rigid transform: rotate then translate.
#[derive(Clone, Copy, Debug)]
pub struct Transform {
    pub pos: Vec2,
    pub rot: Rot,
}

impl Transform {
    pub fn new(pos: Vec2, angle: f64) -> Self {
        Transform {
            pos,
            rot: Rot::new(angle),
        }
    }

    pub fn apply(&self, local: Vec2) -> Vec2 {
        local.rotate(self.rot) + self.pos
    }

    pub fn apply_inverse(&self, world: Vec2) -> Vec2 {
        (world - self.pos).inv_rotate(self.rot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_round_trip() {
        let t = Transform::new(Vec2::new(3.0, -2.0), 0.7);
        let p = Vec2::new(1.5, 4.0);
        let back = t.apply_inverse(t.apply(p));
        assert!((back - p).length() < 1e-12);
    }

    #[test]
    fn quarter_turn() {
        let v = Vec2::new(1.0, 0.0).rotate(Rot::new(std::f64::consts::FRAC_PI_2));
        assert!((v - Vec2::new(0.0, 1.0)).length() < 1e-12);
    }
}
