//! Small geometric helpers shared by data generation and evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::skeleton::Vec3;

pub type P3 = [f64; 3];

pub fn v3(p: &P3) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

pub fn p3(v: &Vec3) -> P3 {
    [v.x, v.y, v.z]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: P3,
    pub max: P3,
}

impl Aabb {
    pub fn new(min: P3, max: P3) -> Self {
        Aabb { min, max }
    }

    pub fn cube(half: f64) -> Self {
        Aabb::new([-half; 3], [half; 3])
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a P3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb::new(first, first);
        for p in it {
            b.include(p);
        }
        Some(b)
    }

    pub fn include(&mut self, p: &P3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        let mut b = *self;
        b.include(&o.min);
        b.include(&o.max);
        b
    }

    pub fn center(&self) -> P3 {
        [0, 1, 2].map(|a| 0.5 * (self.min[a] + self.max[a]))
    }

    pub fn extent(&self) -> P3 {
        [0, 1, 2].map(|a| self.max[a] - self.min[a])
    }

    pub fn max_edge(&self) -> f64 {
        let e = self.extent();
        e[0].max(e[1]).max(e[2])
    }

    /// Scales every edge by `factor` about the center, which stretches the
    /// diagonal by the same factor.
    pub fn scaled(&self, factor: f64) -> Aabb {
        let c = self.center();
        let e = self.extent();
        Aabb::new(
            [0, 1, 2].map(|a| c[a] - 0.5 * factor * e[a]),
            [0, 1, 2].map(|a| c[a] + 0.5 * factor * e[a]),
        )
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        Aabb::new(self.min.map(|v| v - pad), self.max.map(|v| v + pad))
    }

    pub fn contains(&self, p: &P3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn sample(&self, rng: &mut impl Rng) -> P3 {
        [0, 1, 2].map(|a| self.min[a] + (self.max[a] - self.min[a]) * rng.random::<f64>())
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn dist2(&self, p: &P3) -> f64 {
        (0..3)
            .map(|a| {
                let d = (self.min[a] - p[a]).max(p[a] - self.max[a]).max(0.0);
                d * d
            })
            .sum()
    }
}

/// Closest point to `p` on segment `ab`.
pub fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn sub(a: &P3, b: &P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: &P3, b: &P3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &P3, b: &P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &P3) -> f64 {
    dot(a, a).sqrt()
}

/// `a + t * (b - a)`.
pub fn lerp(a: &P3, b: &P3, t: f64) -> P3 {
    [0, 1, 2].map(|i| a[i] + t * (b[i] - a[i]))
}
