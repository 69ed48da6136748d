use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::math::{Transform, Vec2};
use crate::error::{Error, Result};

/// Side length of the square world.
pub const WORLD_SIZE: f64 = 256.0;

/// Thickness of the boundary slabs placed just outside the world.
pub const BOUNDARY_THICKNESS: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Purple,
    Gray,
    Black,
}

impl Color {
    /// Red, green, blue and gray objects move; purple and black ones are fixed.
    pub fn is_dynamic(self) -> bool {
        matches!(self, Color::Red | Color::Green | Color::Blue | Color::Gray)
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Gray => "gray",
            Color::Black => "black",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [242, 82, 82],
            Color::Green => [50, 190, 90],
            Color::Blue => [60, 120, 230],
            Color::Purple => [150, 80, 200],
            Color::Gray => [150, 150, 150],
            Color::Black => [20, 20, 20],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Floor,
    Ceiling,
    Left,
    Right,
}

/// Geometry of a body. Bar and jar angles are the initial orientation; the
/// live orientation is `Body::angle`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ShapeSpec {
    Circle {
        radius: f64,
    },
    Bar {
        length: f64,
        width: f64,
        angle_rad: f64,
    },
    Jar {
        base_length: f64,
        side_length: f64,
        width: f64,
        angle_rad: f64,
    },
    Boundary {
        side: Side,
    },
}

/// Shape class codes used in feature vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeClass {
    Boundary = 0,
    Bar = 1,
    Jar = 2,
    Circle = 3,
}

impl ShapeClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Boundary => "boundary",
            ShapeClass::Bar => "bar",
            ShapeClass::Jar => "jar",
            ShapeClass::Circle => "circle",
        }
    }
}

impl ShapeSpec {
    pub fn class(&self) -> ShapeClass {
        match self {
            ShapeSpec::Circle { .. } => ShapeClass::Circle,
            ShapeSpec::Bar { .. } => ShapeClass::Bar,
            ShapeSpec::Jar { .. } => ShapeClass::Jar,
            ShapeSpec::Boundary { .. } => ShapeClass::Boundary,
        }
    }

    pub fn initial_angle(&self) -> f64 {
        match *self {
            ShapeSpec::Bar { angle_rad, .. } | ShapeSpec::Jar { angle_rad, .. } => angle_rad,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: &[f64] = match self {
            ShapeSpec::Circle { radius } => &[*radius],
            ShapeSpec::Bar { length, width, .. } => &[*length, *width],
            ShapeSpec::Jar {
                base_length,
                side_length,
                width,
                ..
            } => &[*base_length, *side_length, *width],
            ShapeSpec::Boundary { .. } => &[],
        };
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidScene(format!("non-positive dimension in {self:?}")));
        }
        let angle = self.initial_angle();
        if !(0.0..TAU).contains(&angle) {
            return Err(Error::InvalidScene(format!("angle {angle} outside [0, 2π)")));
        }
        Ok(())
    }

    /// Fixtures in a frame whose origin is the geometric reference point of
    /// the shape (circle/bar center, jar base-bottom center, boundary edge).
    fn raw_fixtures(&self) -> Vec<Fixture> {
        match *self {
            ShapeSpec::Circle { radius } => vec![Fixture::Circle {
                center: Vec2::ZERO,
                radius,
            }],
            ShapeSpec::Bar { length, width, .. } => vec![Fixture::Box {
                center: Vec2::ZERO,
                half: Vec2::new(length / 2.0, width / 2.0),
            }],
            ShapeSpec::Jar {
                base_length,
                side_length,
                width,
                ..
            } => {
                let side_x = base_length / 2.0 - width / 2.0;
                vec![
                    Fixture::Box {
                        center: Vec2::new(0.0, width / 2.0),
                        half: Vec2::new(base_length / 2.0, width / 2.0),
                    },
                    Fixture::Box {
                        center: Vec2::new(-side_x, side_length / 2.0),
                        half: Vec2::new(width / 2.0, side_length / 2.0),
                    },
                    Fixture::Box {
                        center: Vec2::new(side_x, side_length / 2.0),
                        half: Vec2::new(width / 2.0, side_length / 2.0),
                    },
                ]
            }
            ShapeSpec::Boundary { side } => {
                let t = BOUNDARY_THICKNESS;
                let long = WORLD_SIZE / 2.0 + 2.0 * t;
                let (center, half) = match side {
                    Side::Floor => (Vec2::new(0.0, -t / 2.0), Vec2::new(long, t / 2.0)),
                    Side::Ceiling => (Vec2::new(0.0, t / 2.0), Vec2::new(long, t / 2.0)),
                    Side::Left => (Vec2::new(-t / 2.0, 0.0), Vec2::new(t / 2.0, long)),
                    Side::Right => (Vec2::new(t / 2.0, 0.0), Vec2::new(t / 2.0, long)),
                };
                vec![Fixture::Box { center, half }]
            }
        }
    }
}

/// A convex collision primitive in body-local coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fixture {
    Circle { center: Vec2, radius: f64 },
    Box { center: Vec2, half: Vec2 },
}

impl Fixture {
    fn area(&self) -> f64 {
        match *self {
            Fixture::Circle { radius, .. } => PI * radius * radius,
            Fixture::Box { half, .. } => 4.0 * half.x * half.y,
        }
    }

    fn center(&self) -> Vec2 {
        match *self {
            Fixture::Circle { center, .. } | Fixture::Box { center, .. } => center,
        }
    }

    /// Moment of inertia about the fixture's own center at unit density.
    fn central_inertia(&self) -> f64 {
        let m = self.area();
        match *self {
            Fixture::Circle { radius, .. } => 0.5 * m * radius * radius,
            Fixture::Box { half, .. } => m * (4.0 * half.x * half.x + 4.0 * half.y * half.y) / 12.0,
        }
    }

    fn shifted(&self, by: Vec2) -> Fixture {
        match *self {
            Fixture::Circle { center, radius } => Fixture::Circle {
                center: center - by,
                radius,
            },
            Fixture::Box { center, half } => Fixture::Box {
                center: center - by,
                half,
            },
        }
    }

    fn bounding_radius(&self) -> f64 {
        match *self {
            Fixture::Circle { center, radius } => center.length() + radius,
            Fixture::Box { center, half } => center.length() + half.length(),
        }
    }

    /// Fixture placed in the world by a body transform.
    pub fn to_world(&self, xf: &Transform) -> WorldFixture {
        match *self {
            Fixture::Circle { center, radius } => WorldFixture::Circle {
                center: xf.apply(center),
                radius,
            },
            Fixture::Box { center, half } => {
                let c = xf.apply(center);
                let ax = Vec2::new(1.0, 0.0).rotate(xf.rot);
                let ay = Vec2::new(0.0, 1.0).rotate(xf.rot);
                let hx = ax * half.x;
                let hy = ay * half.y;
                WorldFixture::Polygon {
                    vertices: [c - hx - hy, c + hx - hy, c + hx + hy, c - hx + hy],
                    normals: [-ay, ax, ay, -ax],
                }
            }
        }
    }
}

/// A fixture in world coordinates. Polygon vertices are counter-clockwise and
/// `normals[i]` is the outward normal of edge `vertices[i] → vertices[i+1]`.
#[derive(Clone, Copy, Debug)]
pub enum WorldFixture {
    Circle { center: Vec2, radius: f64 },
    Polygon { vertices: [Vec2; 4], normals: [Vec2; 4] },
}

/// Mass properties and center-of-mass-relative fixtures of a shape at unit density.
#[derive(Clone, Debug)]
pub struct MassProps {
    pub mass: f64,
    pub inertia: f64,
    /// Offset from the shape's reference point to its center of mass, in the
    /// shape's unrotated frame.
    pub com_offset: Vec2,
    pub fixtures: Vec<Fixture>,
    pub bounding_radius: f64,
}

impl MassProps {
    pub fn of(shape: &ShapeSpec) -> MassProps {
        let raw = shape.raw_fixtures();
        if let ShapeSpec::Boundary { .. } = shape {
            let bounding_radius = raw.iter().map(Fixture::bounding_radius).fold(0.0, f64::max);
            return MassProps {
                mass: 0.0,
                inertia: 0.0,
                com_offset: Vec2::ZERO,
                fixtures: raw,
                bounding_radius,
            };
        }
        let mass: f64 = raw.iter().map(Fixture::area).sum();
        let com = raw
            .iter()
            .fold(Vec2::ZERO, |acc, f| acc + f.center() * f.area())
            * (1.0 / mass);
        let inertia = raw
            .iter()
            .map(|f| f.central_inertia() + f.area() * (f.center() - com).length_squared())
            .sum();
        let fixtures: Vec<Fixture> = raw.iter().map(|f| f.shifted(com)).collect();
        let bounding_radius = fixtures.iter().map(Fixture::bounding_radius).fold(0.0, f64::max);
        MassProps {
            mass,
            inertia,
            com_offset: com,
            fixtures,
            bounding_radius,
        }
    }
}

/// A rigid body. `position` is the center of mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: usize,
    pub shape: ShapeSpec,
    pub color: Color,
    pub dynamic: bool,
    pub position: Vec2,
    pub velocity: Vec2,
    pub angle: f64,
    pub angular_velocity: f64,
    pub inverse_mass: f64,
    pub inverse_inertia: f64,
}

impl Body {
    /// Creates a body at rest whose shape reference point sits at `anchor`
    /// (circle and bar center, jar base-bottom center). Dynamics follow the
    /// color; boundaries are always static.
    pub fn new(id: usize, shape: ShapeSpec, color: Color, anchor: Vec2) -> Body {
        let props = MassProps::of(&shape);
        let dynamic = color.is_dynamic() && !matches!(shape, ShapeSpec::Boundary { .. });
        let angle = shape.initial_angle();
        let position = anchor + props.com_offset.rotate(super::math::Rot::new(angle));
        let (inverse_mass, inverse_inertia) = if dynamic {
            (1.0 / props.mass, 1.0 / props.inertia)
        } else {
            (0.0, 0.0)
        };
        Body {
            id,
            shape,
            color,
            dynamic,
            position,
            velocity: Vec2::ZERO,
            angle,
            angular_velocity: 0.0,
            inverse_mass,
            inverse_inertia,
        }
    }

    pub fn boundary(id: usize, side: Side) -> Body {
        let anchor = match side {
            Side::Floor => Vec2::new(WORLD_SIZE / 2.0, 0.0),
            Side::Ceiling => Vec2::new(WORLD_SIZE / 2.0, WORLD_SIZE),
            Side::Left => Vec2::new(0.0, WORLD_SIZE / 2.0),
            Side::Right => Vec2::new(WORLD_SIZE, WORLD_SIZE / 2.0),
        };
        Body::new(id, ShapeSpec::Boundary { side }, Color::Black, anchor)
    }

    pub fn mass_props(&self) -> MassProps {
        MassProps::of(&self.shape)
    }

    pub fn transform(&self) -> Transform {
        Transform::new(self.position, self.angle)
    }

    pub fn mass(&self) -> f64 {
        if self.inverse_mass > 0.0 {
            1.0 / self.inverse_mass
        } else {
            0.0
        }
    }

    pub fn world_fixtures(&self) -> Vec<WorldFixture> {
        let xf = self.transform();
        self.mass_props().fixtures.iter().map(|f| f.to_world(&xf)).collect()
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self.shape, ShapeSpec::Boundary { .. })
    }
}

/// The simulated world: bodies ordered by id inside `[0, 256]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bodies: Vec<Body>,
}

impl Scene {
    /// A scene holding only the four boundaries (ids 0..4).
    pub fn empty() -> Scene {
        Scene {
            bodies: vec![
                Body::boundary(0, Side::Floor),
                Body::boundary(1, Side::Ceiling),
                Body::boundary(2, Side::Left),
                Body::boundary(3, Side::Right),
            ],
        }
    }

    pub fn next_id(&self) -> usize {
        self.bodies.len()
    }

    /// Appends a body with the next free id and returns that id.
    pub fn add(&mut self, shape: ShapeSpec, color: Color, anchor: Vec2) -> usize {
        let id = self.next_id();
        self.bodies.push(Body::new(id, shape, color, anchor));
        id
    }

    pub fn body(&self, id: usize) -> Option<&Body> {
        self.bodies.get(id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut boundaries = 0;
        for (index, body) in self.bodies.iter().enumerate() {
            if body.id != index {
                return Err(Error::InvalidScene(format!(
                    "body at index {index} has id {}",
                    body.id
                )));
            }
            body.shape.validate()?;
            if !(body.position.is_finite()
                && body.velocity.is_finite()
                && body.angle.is_finite()
                && body.angular_velocity.is_finite())
            {
                return Err(Error::InvalidScene(format!("body {index} has non-finite state")));
            }
            if !body.dynamic && (body.inverse_mass != 0.0 || body.velocity != Vec2::ZERO) {
                return Err(Error::InvalidScene(format!("static body {index} can move")));
            }
            if body.is_boundary() {
                boundaries += 1;
            }
        }
        if boundaries != 4 {
            return Err(Error::InvalidScene(format!("{boundaries} boundaries, expected 4")));
        }
        Ok(())
    }
}
