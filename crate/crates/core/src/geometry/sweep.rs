//! Swept-volume collision of an end-effector body along a waypoint path.
//!
//! Each segment is interpolated (lerp + slerp) at `2^k` evenly spaced
//! samples, with `k` the smallest value that keeps the displacement of every
//! body point between neighbouring samples at or below the pitch. Body boxes
//! are inflated by half the pitch at every sample, so any contact at an
//! intermediate pose is caught by the nearest sample.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{ContactSet, GeometryError, MemberId, Obb, Pose6D, ShelfModel};

pub const DEFAULT_PITCH: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Collision {
    pub segment: usize,
    pub member: MemberId,
}

/// Number of samples (a power of two) needed so that no body point moves more
/// than `pitch` between neighbouring samples on the segment `a → b`.
pub fn segment_subdivisions(body_radius: f64, a: &Pose6D, b: &Pose6D, pitch: f64) -> usize {
    let sweep = a.translation_distance(b) + a.rotation_distance(b) * body_radius;
    let mut n = 1usize;
    while sweep / n as f64 > pitch && n < (1 << 20) {
        n *= 2;
    }
    n
}

/// Radius of the sphere around the end-effector origin enclosing the body.
pub fn body_radius(body: &[Obb]) -> f64 {
    body.iter()
        .map(|o| o.center.position.norm() + o.bounding_radius())
        .fold(0.0, f64::max)
}

struct WorldMember {
    id: MemberId,
    obb: Obb,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

/// Shelf members in world frame with cached axis-aligned hulls.
pub struct MemberIndex {
    members: Vec<WorldMember>,
}

impl MemberIndex {
    pub fn new(shelf: &ShelfModel, exclude: &ContactSet) -> Self {
        let members = shelf
            .members_world()
            .into_iter()
            .filter(|(id, _)| !exclude.contains(id))
            .map(|(id, obb)| {
                let (lo, hi) = obb.aabb();
                WorldMember { id, obb, lo, hi }
            })
            .collect();
        MemberIndex { members }
    }

    /// First member (in model order) overlapping any of the boxes.
    pub fn first_hit(&self, boxes: &[Obb]) -> Option<MemberId> {
        for m in &self.members {
            for b in boxes {
                let (lo, hi) = b.aabb();
                if (0..3).any(|i| lo[i] > m.hi[i] || hi[i] < m.lo[i]) {
                    continue;
                }
                if b.intersects(&m.obb) {
                    return Some(m.id);
                }
            }
        }
        None
    }
}

/// Earliest segment along `path` at which the body touches a non-excluded
/// shelf member.
pub fn swept_collides(
    body: &[Obb],
    path: &[Pose6D],
    shelf: &ShelfModel,
    exclude: &ContactSet,
) -> Result<Option<Collision>, GeometryError> {
    swept_collides_with_pitch(body, path, shelf, exclude, DEFAULT_PITCH)
}

pub fn swept_collides_with_pitch(
    body: &[Obb],
    path: &[Pose6D],
    shelf: &ShelfModel,
    exclude: &ContactSet,
    pitch: f64,
) -> Result<Option<Collision>, GeometryError> {
    if path.len() < 2 {
        return Err(GeometryError::EmptyPath);
    }
    if body.is_empty() {
        return Err(GeometryError::EmptyBody);
    }
    let index = MemberIndex::new(shelf, exclude);
    let inflated: Vec<Obb> = body.iter().map(|o| o.inflated(pitch * 0.5)).collect();
    let radius = body_radius(&inflated);
    let mut scratch = Vec::with_capacity(body.len());
    for (seg, w) in path.windows(2).enumerate() {
        let n = segment_subdivisions(radius, &w[0], &w[1], pitch);
        for k in 0..=n {
            let pose = w[0].interpolate(&w[1], k as f64 / n as f64);
            scratch.clear();
            scratch.extend(inflated.iter().map(|o| o.transformed(&pose)));
            if let Some(member) = index.first_hit(&scratch) {
                return Ok(Some(Collision {
                    segment: seg,
                    member,
                }));
            }
        }
    }
    Ok(None)
}
