//! Playing a validated trajectory against the ground-truth world.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    PrimitiveError, PrimitivePlan, BLOCK_HEIGHT_TOLERANCE, FINGER_OPENING_TOLERANCE, SUCTION_ATTEMPTS,
};
use crate::catalog::{suction_candidate_faces, FaceTag, GripperSpec};
use crate::events::{Event, Feedback, PrimitiveKind};
use crate::geometry::Obb;
use crate::planner::ValidatedTrajectory;
use crate::rng::rng_from;
use crate::world::{apply_push_rotate, apply_topple, extents, local_axis_along, remove_object, InstanceId, WorldState};

/// Fixed time spent per primitive on top of arm travel, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overheads {
    /// One set of exposures from one camera.
    pub percept_shot_set: f64,
    /// Gripper and vacuum actuation of a picking primitive.
    pub mechanics: f64,
    pub helper: f64,
    /// Carrying a picked item to the order bin and releasing it.
    pub place: f64,
}

impl Default for Overheads {
    fn default() -> Self {
        Overheads {
            percept_shot_set: 8.0,
            mechanics: 5.0,
            helper: 3.0,
            place: 22.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub gripper: GripperSpec,
    pub seal_probability: f64,
    pub drop_probability: f64,
    /// Release height of a dropped item.
    pub drop_height: f64,
    pub finger_tolerance: f64,
    pub block_tolerance: f64,
    pub overheads: Overheads,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            gripper: GripperSpec::default(),
            seal_probability: 1.0,
            drop_probability: 0.0,
            drop_height: 0.35,
            finger_tolerance: FINGER_OPENING_TOLERANCE,
            block_tolerance: BLOCK_HEIGHT_TOLERANCE,
            overheads: Overheads::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub feedback: Feedback,
    /// Pick, drop and damage events caused by the primitive.
    pub events: Vec<Event>,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suction_attempts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picked: Option<InstanceId>,
}

impl Outcome {
    fn failed(feedback: Feedback) -> Outcome {
        Outcome {
            success: false,
            feedback,
            events: Vec::new(),
            duration: 0.0,
            suction_attempts: None,
            picked: None,
        }
    }

    fn ok() -> Outcome {
        Outcome {
            success: true,
            ..Outcome::failed(Feedback::Ok)
        }
    }
}

/// Object in the plan's bin nearest to where the plan expects the target.
fn touched_object(world: &WorldState, plan: &PrimitivePlan) -> Option<InstanceId> {
    let p = plan.target_pose.position;
    world
        .objects_in(plan.bin)
        .min_by(|a, b| {
            let da = (a.pose.position - p).norm();
            let db = (b.pose.position - p).norm();
            da.total_cmp(&db).then(a.id.cmp(&b.id))
        })
        .map(|o| o.id)
}

/// Simulate the trajectory against ground truth.
///
/// Only the object the plan touches can change; every other object and bin
/// is carried over unchanged.
pub fn execute(
    world: &WorldState,
    traj: &ValidatedTrajectory,
    config: &ExecConfig,
    seed: u64,
) -> Result<(WorldState, Outcome), PrimitiveError> {
    if !traj.is_validated() {
        return Err(PrimitiveError::UnvalidatedPlan);
    }
    let plan = &traj.plan;
    let oh = &config.overheads;
    let mut rng = rng_from(seed);
    let (next, mut outcome) = match plan.kind {
        PrimitiveKind::Percept => (world.clone(), Outcome::ok()),
        PrimitiveKind::Topple | PrimitiveKind::PushRotate => {
            let Some(id) = touched_object(world, plan) else {
                return Ok((world.clone(), finish(Outcome::failed(Feedback::NoEffect), traj, oh.helper)));
            };
            let (next, moved) = if plan.kind == PrimitiveKind::Topple {
                apply_topple(world, id)?
            } else {
                let (w, r) = apply_push_rotate(world, id, &config.gripper)?;
                (w, r.rotated && !r.no_op)
            };
            let o = if moved { Outcome::ok() } else { Outcome::failed(Feedback::NoEffect) };
            (next, o)
        }
        PrimitiveKind::Grasp | PrimitiveKind::Scoop | PrimitiveKind::Suction => {
            let Some(id) = touched_object(world, plan) else {
                let fb = if plan.kind == PrimitiveKind::Suction {
                    Feedback::NoVacuumSeal
                } else {
                    Feedback::FingerOpeningMismatch
                };
                let mut o = Outcome::failed(fb);
                if plan.kind == PrimitiveKind::Suction {
                    o.suction_attempts = Some(1);
                }
                return Ok((world.clone(), finish(o, traj, oh.mechanics)));
            };
            let mut outcome = match plan.kind {
                PrimitiveKind::Grasp => grasp_outcome(world, plan, id, config)?,
                PrimitiveKind::Scoop => scoop_outcome(world, plan, id, config)?,
                _ => suction_outcome(world, plan, config, &mut rng)?,
            };
            let picked = outcome.picked;
            let next = match picked {
                Some(pid) if outcome.success => {
                    let dropped = rng.random::<f64>() < config.drop_probability;
                    let item = world.item(pid)?;
                    let is_target = item.sku == plan.target;
                    let damage = item.damage_fragile && plan.kind != PrimitiveKind::Suction;
                    let (bin, sku) = (plan.bin, item.sku.clone());
                    let (w, events) = remove_object(world, pid, dropped.then_some(config.drop_height), is_target)?;
                    outcome.events.extend(events);
                    if damage {
                        outcome.events.push(Event::Damage { bin, sku });
                    }
                    w
                }
                _ => world.clone(),
            };
            (next, outcome)
        }
    };
    let overhead = match plan.kind {
        PrimitiveKind::Percept => 2.0 * oh.percept_shot_set,
        k if k.is_helper() => oh.helper,
        _ => oh.mechanics + if outcome.success { oh.place } else { 0.0 },
    };
    outcome = finish(outcome, traj, overhead);
    Ok((next, outcome))
}

fn finish(mut o: Outcome, traj: &ValidatedTrajectory, overhead: f64) -> Outcome {
    o.duration = traj.duration() + overhead;
    o
}

fn grasp_outcome(
    world: &WorldState,
    plan: &PrimitivePlan,
    id: InstanceId,
    config: &ExecConfig,
) -> Result<Outcome, PrimitiveError> {
    let g = &config.gripper;
    let k = plan.action_index.ok_or_else(|| PrimitiveError::InvalidPlan("grasp without close".into()))?;
    let close = plan.waypoints[k];
    let before = plan.waypoints[k.saturating_sub(1)].opening;
    let item = world.item(id)?;
    let local = world.obb(id)?.transformed(&close.pose.inverse());

    // Fingers landing on the object. The spatula finger is compliant when
    // loaded against a wall.
    let body = g.body(before);
    let fingers: Vec<&Obb> = if plan.pretension_wall.is_some() { vec![&body[1]] } else { vec![&body[0], &body[1]] };
    if fingers.iter().any(|f| f.intersects(&local)) {
        return Ok(Outcome::failed(Feedback::CollisionAbort));
    }

    let (lo, hi) = local.aabb();
    // A loaded spatula slides between the wall and the object.
    let spatula_slack = if plan.pretension_wall.is_some() { g.finger_thickness } else { 0.0 };
    let span = before * 0.5 + 1e-3;
    let in_span = lo.x >= -span - spatula_slack
        && hi.x <= span
        && overlap(lo.y, hi.y, -g.finger_length, 0.0) >= 0.01
        && overlap(lo.z, hi.z, -g.finger_height * 0.5, g.finger_height * 0.5) >= 0.005;
    if !in_span {
        return Ok(Outcome::failed(Feedback::FingerOpeningMismatch));
    }
    let squeeze = if item.deformable { 0.9 } else { 1.0 };
    let width = (hi.x - lo.x) * squeeze;
    let expected = plan.expected_finger_opening.unwrap_or(width);
    if (width - expected).abs() > config.finger_tolerance {
        return Ok(Outcome::failed(Feedback::FingerOpeningMismatch));
    }
    Ok(Outcome {
        picked: Some(id),
        ..Outcome::ok()
    })
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    a1.min(b1) - a0.max(b0)
}

fn scoop_outcome(
    world: &WorldState,
    plan: &PrimitivePlan,
    id: InstanceId,
    config: &ExecConfig,
) -> Result<Outcome, PrimitiveError> {
    let g = &config.gripper;
    let k = plan.action_index.ok_or_else(|| PrimitiveError::InvalidPlan("scoop without close".into()))?;
    let to_shelf = world.shelf.world_pose.inverse();
    let tcp = to_shelf.compose(&plan.waypoints[k].pose).position;
    let slide_opening = plan.waypoints[k.saturating_sub(1)].opening;
    let pose = world.shelf_pose(id)?;
    let item = world.item(id)?;
    let e = extents(&item.obb_at(pose));
    let height = item.grasp_dims()[local_axis_along(&pose, &Vector3::z())];
    let in_corridor = (pose.position.x - tcp.x).abs() <= g.spatula_width * 0.5 && e.z <= slide_opening - 0.002;
    if !in_corridor {
        return Ok(Outcome::failed(Feedback::FingerOpeningMismatch));
    }
    let expected = plan.expected_finger_opening.unwrap_or(height);
    if (height - expected).abs() > config.finger_tolerance {
        return Ok(Outcome::failed(Feedback::FingerOpeningMismatch));
    }
    Ok(Outcome {
        picked: Some(id),
        ..Outcome::ok()
    })
}

/// Highest true surface under a vertical probe at `(x, y)` in the bin,
/// with the object it belongs to.
fn surface_below(world: &WorldState, plan: &PrimitivePlan, x: f64, y: f64, from_z: f64) -> Result<(f64, Option<InstanceId>), PrimitiveError> {
    let (lo, _) = world.shelf.bin_bounds(plan.bin);
    let origin = Vector3::new(x, y, from_z);
    let down = -Vector3::z();
    let mut best = (lo.z, None);
    for o in world.objects_in(plan.bin) {
        let b = world.shelf_obb(o.id)?;
        if let Some(d) = b.ray_entry(&origin, &down) {
            let z = from_z - d;
            if d >= 0.0 && z > best.0 {
                best = (z, Some(o.id));
            }
        }
    }
    Ok(best)
}

fn suction_outcome(
    world: &WorldState,
    plan: &PrimitivePlan,
    config: &ExecConfig,
    rng: &mut crate::rng::SimRng,
) -> Result<Outcome, PrimitiveError> {
    let g = &config.gripper;
    let k = plan.action_index.ok_or_else(|| PrimitiveError::InvalidPlan("suction without block".into()))?;
    let to_shelf = world.shelf.world_pose.inverse();
    let block_pose = to_shelf.compose(&plan.waypoints[k].pose);
    let tip = block_pose.transform_point(&g.cup_tip(plan.waypoints[k].opening));
    let (lo, hi) = world.shelf.bin_bounds(plan.bin);
    let expected = plan.expected_block_height.unwrap_or(tip.z - lo.z);
    let offsets = if plan.retry_offsets.is_empty() { vec![[0.0, 0.0]] } else { plan.retry_offsets.clone() };

    let mut attempts = 0;
    for off in offsets.iter().take(SUCTION_ATTEMPTS) {
        attempts += 1;
        let (x, y) = (tip.x + off[0], tip.y + off[1]);
        let (surface, hit) = surface_below(world, plan, x, y, hi.z)?;
        if (surface - lo.z - expected).abs() > config.block_tolerance {
            return Ok(Outcome {
                suction_attempts: Some(attempts),
                ..Outcome::failed(Feedback::BlockHeightMismatch)
            });
        }
        // Seal draws happen on every attempt that reaches a surface.
        let draw: f64 = rng.random();
        let Some(id) = hit else { continue };
        let item = world.item(id)?;
        let pose = world.shelf_pose(id)?;
        let sealed = suction_candidate_faces(item, &pose)
            .iter()
            .filter(|f| f.tag == FaceTag::HorizontalUp)
            .any(|f| cup_on_face(item, &pose, f.axis, x, y, g.cup_radius))
            && draw < config.seal_probability;
        if sealed {
            return Ok(Outcome {
                suction_attempts: Some(attempts),
                picked: Some(id),
                ..Outcome::ok()
            });
        }
    }
    Ok(Outcome {
        suction_attempts: Some(attempts.max(1)),
        ..Outcome::failed(Feedback::NoVacuumSeal)
    })
}

/// Whole cup rim on the face whose normal is local `axis`.
fn cup_on_face(item: &crate::catalog::ItemSpec, pose: &crate::geometry::Pose6D, axis: usize, x: f64, y: f64, r: f64) -> bool {
    let local = pose.inverse().transform_point(&Vector3::new(x, y, pose.position.z));
    (0..3)
        .filter(|&i| i != axis)
        .all(|i| local[i].abs() + r <= item.dims[i] * 0.5 + 1e-9)
}
