//! Oriented boxes and the separating-axis overlap test.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Pose6D};

/// Box with a rigid pose and strictly positive half-extents along its local axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Pose6D,
    pub half_extents: Vector3<f64>,
}

impl Obb {
    pub fn new(center: Pose6D, half_extents: Vector3<f64>) -> Result<Self, GeometryError> {
        if half_extents.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(GeometryError::NonPositiveExtent(half_extents.into()));
        }
        Ok(Obb {
            center,
            half_extents,
        })
    }

    /// Axis-aligned box spanning `[min, max]`; panics on a degenerate span.
    pub fn from_min_max(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        let c = (min + max) * 0.5;
        let h = (max - min) * 0.5;
        Obb::new(Pose6D::from_translation(c.x, c.y, c.z), h).expect("non-degenerate box span")
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.product()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_extents.norm()
    }

    /// Express this box (given in frame `pose`) in the parent frame.
    pub fn transformed(&self, pose: &Pose6D) -> Obb {
        Obb {
            center: pose.compose(&self.center),
            half_extents: self.half_extents,
        }
    }

    pub fn inflated(&self, delta: f64) -> Obb {
        Obb {
            center: self.center,
            half_extents: self.half_extents.add_scalar(delta),
        }
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vector3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            *c = self.center.transform_point(&self.half_extents.component_mul(&s));
        }
        out
    }

    /// World-axis extents of the box (half-size of its axis-aligned hull).
    pub fn aabb_half_extents(&self) -> Vector3<f64> {
        self.center.rotation_matrix().abs() * self.half_extents
    }

    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let h = self.aabb_half_extents();
        (self.center.position - h, self.center.position + h)
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.center.orientation.inverse() * (p - self.center.position)
    }

    pub fn contains_point(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half_extents[i] + tol)
    }

    /// Euclidean distance from `p` to the box surface (0 on the surface).
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        let l = self.to_local(p);
        let d = l.abs() - self.half_extents;
        let outside = d.map(|v| v.max(0.0)).norm();
        if outside > 0.0 {
            outside
        } else {
            -d.max()
        }
    }

    /// Entry parameter of the ray `origin + t·dir` (t ≥ 0) into the closed box.
    pub fn ray_entry(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let inv = self.center.orientation.inverse();
        let o = inv * (origin - self.center.position);
        let d = inv * dir;
        let mut t0 = 0.0f64;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let h = self.half_extents[i];
            if d[i].abs() < 1e-15 {
                if o[i].abs() > h {
                    return None;
                }
                continue;
            }
            let a = (-h - o[i]) / d[i];
            let b = (h - o[i]) / d[i];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    /// Closed-box overlap by the separating-axis theorem (15 candidate axes).
    pub fn intersects(&self, other: &Obb) -> bool {
        obb_intersects(self, other)
    }
}

/// True iff the two closed boxes share at least one point.
pub fn obb_intersects(a: &Obb, b: &Obb) -> bool {
    // Parallel edges make the cross-product axes degenerate; the epsilon
    // keeps those tests from reporting a spurious separation.
    const EPS: f64 = 1e-12;
    let ra_m = a.center.rotation_matrix();
    let rb_m = b.center.rotation_matrix();
    let r: Matrix3<f64> = ra_m.transpose() * rb_m;
    let abs_r = r.map(|v| v.abs() + EPS);
    let t = ra_m.transpose() * (b.center.position - a.center.position);
    let ea = &a.half_extents;
    let eb = &b.half_extents;

    for i in 0..3 {
        let ra = ea[i];
        let rb = eb[0] * abs_r[(i, 0)] + eb[1] * abs_r[(i, 1)] + eb[2] * abs_r[(i, 2)];
        if t[i].abs() > ra + rb {
            return false;
        }
    }
    for j in 0..3 {
        let ra = ea[0] * abs_r[(0, j)] + ea[1] * abs_r[(1, j)] + ea[2] * abs_r[(2, j)];
        let rb = eb[j];
        let tj = t[0] * r[(0, j)] + t[1] * r[(1, j)] + t[2] * r[(2, j)];
        if tj.abs() > ra + rb {
            return false;
        }
    }
    for i in 0..3 {
        let i1 = (i + 1) % 3;
        let i2 = (i + 2) % 3;
        for j in 0..3 {
            let j1 = (j + 1) % 3;
            let j2 = (j + 2) % 3;
            let ra = ea[i1] * abs_r[(i2, j)] + ea[i2] * abs_r[(i1, j)];
            let rb = eb[j1] * abs_r[(i, j2)] + eb[j2] * abs_r[(i, j1)];
            let tl = t[i2] * r[(i1, j)] - t[i1] * r[(i2, j)];
            if tl.abs() > ra + rb {
                return false;
            }
        }
    }
    true
}
