//! Narrow-phase contact generation between world-space fixtures.

use super::body::WorldFixture;
use super::math::Vec2;

/// A single contact point. `normal` points from fixture A toward fixture B;
/// negative `separation` is penetration depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPoint {
    pub normal: Vec2,
    pub point: Vec2,
    pub separation: f64,
    /// Identifies the feature pair that produced the point, stable across
    /// frames while the contact configuration persists.
    pub feature: u32,
}

pub fn collide(a: &WorldFixture, b: &WorldFixture, margin: f64, out: &mut Vec<ContactPoint>) {
    match (a, b) {
        (
            WorldFixture::Circle { center: ca, radius: ra },
            WorldFixture::Circle { center: cb, radius: rb },
        ) => circle_circle(*ca, *ra, *cb, *rb, margin, out),
        (WorldFixture::Polygon { vertices, normals }, WorldFixture::Circle { center, radius }) => {
            if let Some(cp) = polygon_circle(vertices, normals, *center, *radius, margin) {
                out.push(cp);
            }
        }
        (WorldFixture::Circle { center, radius }, WorldFixture::Polygon { vertices, normals }) => {
            if let Some(cp) = polygon_circle(vertices, normals, *center, *radius, margin) {
                out.push(ContactPoint {
                    normal: -cp.normal,
                    ..cp
                });
            }
        }
        (
            WorldFixture::Polygon {
                vertices: va,
                normals: na,
            },
            WorldFixture::Polygon {
                vertices: vb,
                normals: nb,
            },
        ) => polygon_polygon(va, na, vb, nb, margin, out),
    }
}

fn circle_circle(ca: Vec2, ra: f64, cb: Vec2, rb: f64, margin: f64, out: &mut Vec<ContactPoint>) {
    let d = cb - ca;
    let dist = d.length();
    let separation = dist - ra - rb;
    if separation > margin {
        return;
    }
    let normal = if dist > 1e-12 {
        d * (1.0 / dist)
    } else {
        Vec2::new(0.0, 1.0)
    };
    out.push(ContactPoint {
        normal,
        point: ca + normal * (ra + 0.5 * separation),
        separation,
        feature: 0,
    });
}

/// Contact from a polygon (A) to a circle (B).
fn polygon_circle(
    vertices: &[Vec2; 4],
    normals: &[Vec2; 4],
    center: Vec2,
    radius: f64,
    margin: f64,
) -> Option<ContactPoint> {
    let mut best = 0;
    let mut max_sep = f64::NEG_INFINITY;
    for i in 0..4 {
        let s = normals[i].dot(center - vertices[i]);
        if s > radius + margin {
            return None;
        }
        if s > max_sep {
            max_sep = s;
            best = i;
        }
    }
    let v1 = vertices[best];
    let v2 = vertices[(best + 1) % 4];

    if max_sep < 1e-12 {
        // center inside the polygon
        let normal = normals[best];
        let separation = max_sep - radius;
        return Some(ContactPoint {
            normal,
            point: center - normal * (radius + 0.5 * separation),
            separation,
            feature: 0,
        });
    }

    let u1 = (center - v1).dot(v2 - v1);
    let u2 = (center - v2).dot(v1 - v2);
    let (normal, separation) = if u1 <= 0.0 || u2 <= 0.0 {
        let corner = if u1 <= 0.0 { v1 } else { v2 };
        let d = center - corner;
        let dist = d.length();
        if dist - radius > margin || dist < 1e-12 {
            return None;
        }
        (d * (1.0 / dist), dist - radius)
    } else {
        (normals[best], max_sep - radius)
    };
    Some(ContactPoint {
        normal,
        point: center - normal * (radius + 0.5 * separation),
        separation,
        feature: 0,
    })
}

fn max_separation(
    v1: &[Vec2; 4],
    n1: &[Vec2; 4],
    v2: &[Vec2; 4],
) -> (usize, f64) {
    let mut best_edge = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..4 {
        let n = n1[i];
        let v = v1[i];
        let si = v2
            .iter()
            .map(|&p| n.dot(p - v))
            .fold(f64::INFINITY, f64::min);
        if si > best {
            best = si;
            best_edge = i;
        }
    }
    (best_edge, best)
}

#[derive(Clone, Copy)]
struct ClipVertex {
    v: Vec2,
}

fn clip_segment(input: [ClipVertex; 2], normal: Vec2, offset: f64) -> Option<[ClipVertex; 2]> {
    let d0 = normal.dot(input[0].v) - offset;
    let d1 = normal.dot(input[1].v) - offset;
    let mut out = [input[0]; 2];
    let mut n = 0;
    if d0 <= 0.0 {
        out[n] = input[0];
        n += 1;
    }
    if d1 <= 0.0 {
        out[n] = input[1];
        n += 1;
    }
    if d0 * d1 < 0.0 && n < 2 {
        let t = d0 / (d0 - d1);
        out[n] = ClipVertex {
            v: input[0].v + (input[1].v - input[0].v) * t,
        };
        n += 1;
    }
    (n == 2).then_some(out)
}

fn polygon_polygon(
    va: &[Vec2; 4],
    na: &[Vec2; 4],
    vb: &[Vec2; 4],
    nb: &[Vec2; 4],
    margin: f64,
    out: &mut Vec<ContactPoint>,
) {
    let (edge_a, sep_a) = max_separation(va, na, vb);
    if sep_a > margin {
        return;
    }
    let (edge_b, sep_b) = max_separation(vb, nb, va);
    if sep_b > margin {
        return;
    }

    const TOL: f64 = 1e-3;
    let (v1, v2, n2, edge1, flip) = if sep_b > sep_a + TOL {
        (vb, va, na, edge_b, true)
    } else {
        (va, vb, nb, edge_a, false)
    };

    let ref_v1 = v1[edge1];
    let ref_v2 = v1[(edge1 + 1) % 4];
    let tangent = {
        let t = ref_v2 - ref_v1;
        t * (1.0 / t.length())
    };
    let normal = Vec2::new(tangent.y, -tangent.x);

    // incident edge: most anti-parallel to the reference normal
    let mut incident = 0;
    let mut min_dot = f64::INFINITY;
    for (i, n) in n2.iter().enumerate() {
        let d = normal.dot(*n);
        if d < min_dot {
            min_dot = d;
            incident = i;
        }
    }
    let inc = [
        ClipVertex { v: v2[incident] },
        ClipVertex {
            v: v2[(incident + 1) % 4],
        },
    ];

    let front = normal.dot(ref_v1);
    let side1 = -tangent.dot(ref_v1);
    let side2 = tangent.dot(ref_v2);
    let Some(clip1) = clip_segment(inc, -tangent, side1) else {
        return;
    };
    let Some(clip2) = clip_segment(clip1, tangent, side2) else {
        return;
    };

    let manifold_normal = if flip { -normal } else { normal };
    for (slot, cv) in clip2.iter().enumerate() {
        let separation = normal.dot(cv.v) - front;
        if separation <= margin {
            let feature = (u32::from(flip) << 8) | ((edge1 as u32) << 4) | ((incident as u32) << 2) | slot as u32;
            out.push(ContactPoint {
                normal: manifold_normal,
                point: cv.v - normal * (0.5 * separation),
                separation,
                feature,
            });
        }
    }
}
