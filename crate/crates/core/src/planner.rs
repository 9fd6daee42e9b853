//! Trajectory validation: reachability with tolerance, swept-volume
//! collision against the shelf and TCP speed capping.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::GripperSpec;
use crate::geometry::{swept_collides, Collision, GeometryError, MemberId, Obb, Pose6D, ShelfModel};
use crate::primitives::{PrimitivePlan, Waypoint};

/// Tool speed limit of the arm.
pub const TCP_SPEED_LIMIT: f64 = 1.0;
/// Shortest time any segment is given.
pub const MIN_SEGMENT_TIME: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub position: f64,
    /// Radians.
    pub rotation: f64,
}

impl Tolerance {
    pub const ZERO: Tolerance = Tolerance {
        position: 0.0,
        rotation: 0.0,
    };

    pub fn validation() -> Tolerance {
        Tolerance {
            position: 0.01,
            rotation: 5f64.to_radians(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("path needs at least two waypoints")]
    EmptyPath,
    #[error("segment {segment} hits {member}")]
    CollisionDetected { segment: usize, member: MemberId },
    #[error("waypoint {waypoint} is outside the workspace")]
    Unreachable { waypoint: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Where the tool point can go: a union of boxes in the robot base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceEnvelope {
    pub regions: Vec<Obb>,
    pub base_pose: Pose6D,
}

impl WorkspaceEnvelope {
    /// Box over the 12-bin face plus the approach corridor in front of it,
    /// with the base 1.2 m in front of the shelf center.
    pub fn for_shelf(shelf: &ShelfModel) -> WorkspaceEnvelope {
        let base_shelf = Pose6D::from_translation(0.435, -1.2, 0.0);
        let region = Obb::from_min_max(Vector3::new(-0.2, -0.8, -0.2), Vector3::new(1.07, 0.5, 1.2));
        WorkspaceEnvelope {
            regions: vec![region.transformed(&base_shelf.inverse())],
            base_pose: shelf.world_pose.compose(&base_shelf),
        }
    }

    pub fn contains(&self, world_point: &Vector3<f64>) -> bool {
        let p = self.base_pose.inverse().transform_point(world_point);
        self.regions.iter().any(|r| r.contains_point(&p, 1e-12))
    }
}

/// Position samples around `center`: the point itself, then the 26 grid
/// directions at full and half radius.
fn tolerance_samples(center: Vector3<f64>, radius: f64) -> Vec<Vector3<f64>> {
    let mut out = vec![center];
    if radius <= 0.0 {
        return out;
    }
    for scale in [1.0, 0.5] {
        for i in -1i32..=1 {
            for j in -1i32..=1 {
                for k in -1i32..=1 {
                    if i == 0 && j == 0 && k == 0 {
                        continue;
                    }
                    let d = Vector3::new(i as f64, j as f64, k as f64).normalize();
                    out.push(center + d * radius * scale);
                }
            }
        }
    }
    out
}

/// Whether some pose within tolerance of `pose` lies in the envelope.
///
/// The envelope bounds position only, so the rotational tolerance never
/// changes the answer.
pub fn reachable(pose: &Pose6D, tolerance: Tolerance, envelope: &WorkspaceEnvelope) -> bool {
    tolerance_samples(pose.position, tolerance.position.max(0.0))
        .iter()
        .any(|p| envelope.contains(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub collision_checked: bool,
    pub reachability_checked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedTrajectory {
    pub plan: PrimitivePlan,
    /// Seconds since the first waypoint.
    pub timestamps: Vec<f64>,
    pub certificate: Certificate,
}

impl ValidatedTrajectory {
    pub fn is_validated(&self) -> bool {
        self.certificate.collision_checked && self.certificate.reachability_checked
    }

    pub fn duration(&self) -> f64 {
        self.timestamps.last().copied().unwrap_or(0.0)
    }

    pub fn tcp_positions(&self) -> Vec<[f64; 3]> {
        self.plan
            .waypoints
            .iter()
            .map(|w| [w.pose.position.x, w.pose.position.y, w.pose.position.z])
            .collect()
    }

    /// TCP speed of every segment.
    pub fn segment_speeds(&self) -> Vec<f64> {
        segment_speeds(&self.tcp_positions(), &self.timestamps)
    }
}

pub fn segment_speeds(positions: &[[f64; 3]], timestamps: &[f64]) -> Vec<f64> {
    positions
        .windows(2)
        .zip(timestamps.windows(2))
        .map(|(p, t)| {
            let d = Vector3::from(p[1]) - Vector3::from(p[0]);
            d.norm() / (t[1] - t[0])
        })
        .collect()
}

/// Timing only; the certificate is left unset.
pub fn time_parameterize(plan: &PrimitivePlan, v_max: f64) -> Result<ValidatedTrajectory, PlannerError> {
    if plan.waypoints.len() < 2 {
        return Err(PlannerError::EmptyPath);
    }
    let mut t = 0.0;
    let mut timestamps = vec![0.0];
    for w in plan.waypoints.windows(2) {
        let dist = w[0].pose.translation_distance(&w[1].pose);
        let speed = v_max.min(w[1].speed_cap);
        let dt = if speed > 0.0 { dist / speed } else { f64::INFINITY };
        t += dt.max(MIN_SEGMENT_TIME);
        timestamps.push(t);
    }
    Ok(ValidatedTrajectory {
        plan: plan.clone(),
        timestamps,
        certificate: Certificate {
            collision_checked: false,
            reachability_checked: false,
        },
    })
}

/// Earliest segment whose swept gripper body touches a shelf member not in
/// the plan's exclusions. The body on each segment covers every jaw opening
/// between the two waypoints.
pub fn first_collision(
    waypoints: &[Waypoint],
    plan_exclusions: &crate::geometry::ContactSet,
    shelf: &ShelfModel,
    gripper: &GripperSpec,
) -> Result<Option<Collision>, GeometryError> {
    if waypoints.len() < 2 {
        return Err(GeometryError::EmptyPath);
    }
    for (k, w) in waypoints.windows(2).enumerate() {
        let body = gripper.body_span(w[0].opening, w[1].opening);
        if let Some(c) = swept_collides(&body, &[w[0].pose, w[1].pose], shelf, plan_exclusions)? {
            return Ok(Some(Collision {
                segment: k,
                member: c.member,
            }));
        }
    }
    Ok(None)
}

/// Check reachability of every waypoint and shelf clearance of every
/// segment, then time the path at the arm's speed limit.
pub fn validate(
    plan: &PrimitivePlan,
    shelf: &ShelfModel,
    gripper: &GripperSpec,
    envelope: &WorkspaceEnvelope,
) -> Result<ValidatedTrajectory, PlannerError> {
    plan.check().map_err(|e| PlannerError::InvalidPlan(e.to_string()))?;
    let mut traj = time_parameterize(plan, TCP_SPEED_LIMIT)?;
    let tol = Tolerance::validation();
    if let Some(i) = plan.waypoints.iter().position(|w| !reachable(&w.pose, tol, envelope)) {
        return Err(PlannerError::Unreachable { waypoint: i });
    }
    if let Some(c) = first_collision(&plan.waypoints, &plan.contact_exclusions, shelf, gripper)? {
        return Err(PlannerError::CollisionDetected {
            segment: c.segment,
            member: c.member,
        });
    }
    traj.certificate = Certificate {
        collision_checked: true,
        reachability_checked: true,
    };
    Ok(traj)
}
