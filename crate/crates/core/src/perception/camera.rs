//! Pinhole depth cameras and ray-cast rendering of a bin.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geometry::{BinId, MemberKind, Obb, Pose6D};
use crate::rng::rng_from;
use crate::world::{InstanceId, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraKind {
    Kinect2,
    RealSense,
}

impl CameraKind {
    pub fn name(self) -> &'static str {
        match self {
            CameraKind::Kinect2 => "kinect2",
            CameraKind::RealSense => "realsense",
        }
    }
}

/// Depth camera. The optical frame has `z` along the view direction, `x` to
/// the right of the image and `y` down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub kind: CameraKind,
    pub pose: Pose6D,
    pub range: [f64; 2],
    pub resolution: (u32, u32),
    /// Horizontal and vertical field of view in degrees.
    pub fov_deg: (f64, f64),
    pub noise_sigma: f64,
    pub nan_rate_reflective: f64,
    /// Probability that any return is lost.
    #[serde(default)]
    pub nan_rate_global: f64,
}

impl CameraModel {
    pub fn kinect2(pose: Pose6D) -> CameraModel {
        CameraModel {
            kind: CameraKind::Kinect2,
            pose,
            range: [0.8, 4.0],
            resolution: (512, 424),
            fov_deg: (70.6, 60.0),
            noise_sigma: 0.002,
            nan_rate_reflective: 0.6,
            nan_rate_global: 0.0,
        }
    }

    pub fn realsense(pose: Pose6D) -> CameraModel {
        CameraModel {
            kind: CameraKind::RealSense,
            pose,
            range: [0.2, 1.2],
            resolution: (640, 480),
            fov_deg: (59.0, 46.0),
            noise_sigma: 0.001,
            nan_rate_reflective: 0.4,
            nan_rate_global: 0.0,
        }
    }

    pub fn noiseless(mut self) -> CameraModel {
        self.noise_sigma = 0.0;
        self.nan_rate_reflective = 0.0;
        self.nan_rate_global = 0.0;
        self
    }

    pub fn at(&self, pose: Pose6D) -> CameraModel {
        CameraModel { pose, ..self.clone() }
    }

    fn focal(&self) -> (f64, f64) {
        let (w, h) = (self.resolution.0 as f64, self.resolution.1 as f64);
        (
            w * 0.5 / (self.fov_deg.0.to_radians() * 0.5).tan(),
            h * 0.5 / (self.fov_deg.1.to_radians() * 0.5).tan(),
        )
    }

    /// Pixel coordinates of a point given in the camera frame.
    fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 1e-9 {
            return None;
        }
        let (fx, fy) = self.focal();
        Some((
            fx * p.x / p.z + self.resolution.0 as f64 * 0.5,
            fy * p.y / p.z + self.resolution.1 as f64 * 0.5,
        ))
    }

    fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        let (fx, fy) = self.focal();
        Vector3::new(
            (u as f64 + 0.5 - self.resolution.0 as f64 * 0.5) / fx,
            (v as f64 + 0.5 - self.resolution.1 as f64 * 0.5) / fy,
            1.0,
        )
        .normalize()
    }
}

/// Camera pose at `eye` looking at `target`, image `y` pointing down.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Pose6D {
    let f = (target - eye).normalize();
    let mut r = f.cross(&Vector3::z());
    if r.norm() < 1e-9 {
        r = Vector3::x();
    }
    let r = r.normalize();
    let d = f.cross(&r);
    let m = Matrix3::from_columns(&[r, d, f]);
    Pose6D::new(
        eye,
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)),
    )
}

/// What a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hit {
    Member(MemberKind),
    Object(InstanceId),
}

/// Depth returns in the shelf frame. Lost returns are stored as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<Hit>,
    pub source: CameraKind,
    /// Camera center in the shelf frame.
    pub origin: Vector3<f64>,
    pub range: [f64; 2],
    pub noise_sigma: f64,
    pub seed: u64,
    /// Returns per object before masking, and how many of them were lost.
    pub object_returns: BTreeMap<InstanceId, ReturnStats>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub total: usize,
    pub lost: usize,
}

impl ReturnStats {
    pub fn lost_fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.lost as f64 / self.total as f64
        }
    }
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn finite_count(&self) -> usize {
        self.points.iter().filter(|p| is_finite(p)).count()
    }

    pub fn nan_count(&self) -> usize {
        self.len() - self.finite_count()
    }

    /// Text dump: a header comment, then one `x y z` or `nan` per line.
    pub fn to_dump(&self) -> String {
        let mut s = format!("# camera {} seed {}\n", self.source.name(), self.seed);
        for p in &self.points {
            if is_finite(p) {
                let _ = writeln!(s, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
            } else {
                s.push_str("nan\n");
            }
        }
        s
    }
}

pub fn is_finite(p: &Vector3<f64>) -> bool {
    p.iter().all(|v| v.is_finite())
}

struct Target {
    hit: Hit,
    obb: Obb,
    reflective: bool,
}

/// Render the bin's interior as seen by `camera`.
///
/// Only pixels inside the image footprint of the bin are cast, and only
/// against that bin's own members and contents; rays that hit neither are
/// not part of the cloud.
pub fn render_depth(
    world: &WorldState,
    camera: &CameraModel,
    bin: BinId,
    seed: u64,
) -> Result<PointCloud, PerceptionError> {
    let shelf = &world.shelf;
    let cam = shelf.world_pose.inverse().compose(&camera.pose);
    let to_cam = cam.inverse();
    let (lo, hi) = shelf.bin_bounds(bin);
    let center = (lo + hi) * 0.5;
    let c_cam = to_cam.transform_point(&center);
    let visible = camera.project(&c_cam).is_some_and(|(u, v)| {
        u >= 0.0 && v >= 0.0 && u < camera.resolution.0 as f64 && v < camera.resolution.1 as f64
    });
    let dist = c_cam.norm();
    if !visible || dist < camera.range[0] * 0.5 || dist > camera.range[1] {
        return Err(PerceptionError::BinNotVisible {
            bin,
            camera: camera.kind,
        });
    }

    // Pixel window around the projected interior.
    let interior = Obb::from_min_max(lo, hi);
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut behind = false;
    for c in interior.corners() {
        match camera.project(&to_cam.transform_point(&c)) {
            Some((u, v)) => {
                u0 = u0.min(u);
                v0 = v0.min(v);
                u1 = u1.max(u);
                v1 = v1.max(v);
            }
            None => behind = true,
        }
    }
    let (w, h) = camera.resolution;
    let (u0, v0, u1, v1) = if behind {
        (0, 0, w, h)
    } else {
        (
            u0.floor().max(0.0) as u32,
            v0.floor().max(0.0) as u32,
            (u1.ceil().max(0.0) as u32).min(w),
            (v1.ceil().max(0.0) as u32).min(h),
        )
    };

    let mut targets: Vec<Target> = shelf
        .members
        .iter()
        .filter(|m| m.id.bin == bin)
        .map(|m| Target {
            hit: Hit::Member(m.id.kind),
            obb: m.local,
            reflective: false,
        })
        .collect();
    for o in world.objects_in(bin) {
        let item = world.item(o.id)?;
        targets.push(Target {
            hit: Hit::Object(o.id),
            obb: world.shelf_obb(o.id)?,
            reflective: item.reflective_packaging,
        });
    }
    let base_z = shelf.metallic_base_plane;
    let bottom_row = bin.row() == 3;

    let rot = cam.rotation_matrix();
    let origin = cam.position;
    let mut rng = rng_from(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut object_returns: BTreeMap<InstanceId, ReturnStats> = BTreeMap::new();
    for v in v0..v1 {
        for u in u0..u1 {
            let dir = rot * camera.pixel_ray(u, v);
            let mut best: Option<(f64, usize)> = None;
            for (i, t) in targets.iter().enumerate() {
                if let Some(d) = t.obb.ray_entry(&origin, &dir) {
                    if d > 0.0 && best.is_none_or(|(b, _)| d < b) {
                        best = Some((d, i));
                    }
                }
            }
            // Fixed draw count per pixel keeps streams aligned across configs.
            let z: f64 = rng.sample(StandardNormal);
            let drop_reflect: f64 = rng.random();
            let drop_any: f64 = rng.random();
            let Some((t, i)) = best else {
                continue;
            };
            let target = &targets[i];
            let depth = t + camera.noise_sigma * z;
            let p = origin + dir * depth;
            let metallic = bottom_row
                && matches!(target.hit, Hit::Member(MemberKind::Floor))
                && (origin + dir * t).z <= base_z + 1e-9;
            let lost = ((target.reflective || metallic) && drop_reflect < camera.nan_rate_reflective)
                || drop_any < camera.nan_rate_global
                || depth < camera.range[0]
                || depth > camera.range[1];
            if let Hit::Object(id) = target.hit {
                let r = object_returns.entry(id).or_default();
                r.total += 1;
                r.lost += usize::from(lost);
            }
            points.push(if lost { Vector3::repeat(f64::NAN) } else { p });
            labels.push(target.hit);
        }
    }
    Ok(PointCloud {
        points,
        labels,
        source: camera.kind,
        origin,
        range: camera.range,
        noise_sigma: camera.noise_sigma,
        seed,
        object_returns,
    })
}
