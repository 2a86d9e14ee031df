//! Minimal 3-D geometry for the street scenario: points, boxes and walls.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Aabb { min, max }
    }

    /// Slab test against the closed segment `a -> b`. Touching counts.
    pub fn intersects_segment(&self, a: Point3, b: Point3) -> bool {
        let dir = b - a;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (origin, d, lo, hi) in [
            (a.x, dir.x, self.min.x, self.max.x),
            (a.y, dir.y, self.min.y, self.max.y),
            (a.z, dir.z, self.min.z, self.max.z),
        ] {
            if d == 0.0 {
                if origin < lo || origin > hi {
                    return false;
                }
                continue;
            }
            let (mut near, mut far) = ((lo - origin) / d, (hi - origin) / d);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// Infinite reflecting plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub point: Point3,
    pub normal: Point3,
}

impl Wall {
    fn unit_normal(&self) -> Point3 {
        self.normal * (1.0 / self.normal.norm())
    }

    pub fn signed_distance(&self, p: Point3) -> f64 {
        (p - self.point).dot(self.unit_normal())
    }

    pub fn mirror(&self, p: Point3) -> Point3 {
        p - self.unit_normal() * (2.0 * self.signed_distance(p))
    }

    /// Specular reflection point for a ray from `a` to `b`, if both lie
    /// strictly on the same side of the wall.
    pub fn reflection_point(&self, a: Point3, b: Point3) -> Option<Point3> {
        let da = self.signed_distance(a);
        let db = self.signed_distance(b);
        if da * db <= 0.0 {
            return None;
        }
        let image = self.mirror(a);
        // image and b straddle the plane
        let t = da.abs() / (da.abs() + db.abs());
        Some(image + (b - image) * t)
    }
}
