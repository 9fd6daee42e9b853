//! The six motion primitives: planners that turn a scene estimate into
//! end-effector waypoints, and an executor that plays them against ground
//! truth.

mod execute;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use execute::{execute, ExecConfig, Outcome, Overheads};

use crate::catalog::{suction_candidate_faces, FaceTag, GripperSpec, ItemSpec, DEFAULT_GRASP_MARGIN};
use crate::events::PrimitiveKind;
use crate::geometry::{BinGeom, BinId, ContactSet, GeometryError, MemberId, MemberKind, Obb, Pose6D, ShelfModel};
use crate::perception::{percept_viewpoints, SceneEstimate};
use crate::planner::first_collision;
use crate::world::{classify_pose, extents, toppleable, PoseType, WorldError, WorldState};

/// Pitch scan order for the grasp search, degrees.
pub const GRASP_PITCH_SCAN: [f64; 5] = [0.0, -5.0, 5.0, -10.0, 10.0];
/// Yaw scan order for the grasp search, degrees.
pub const GRASP_YAW_SCAN: [f64; 7] = [0.0, -5.0, 5.0, -10.0, 10.0, -15.0, 15.0];
pub const FINGER_OPENING_TOLERANCE: f64 = 0.008;
pub const BLOCK_HEIGHT_TOLERANCE: f64 = 0.01;
pub const SUCTION_ATTEMPTS: usize = 5;
pub const SUCTION_PERTURBATION: f64 = 0.01;
/// Nominal spatula preload against the floor, newtons.
pub const SCOOP_PRELOAD: f64 = 40.0;

/// Tool points stay this far in front of the shelf before entering a bin.
const STANDOFF_Y: f64 = -0.10;
const FREE_SPEED: f64 = 1.0;
const BIN_SPEED: f64 = 0.3;
const CONTACT_SPEED: f64 = 0.05;
/// Clearance added around an object when opening for a grasp.
const GRASP_CLEARANCE: f64 = 0.03;
/// Vertical room kept between fingers and lips.
const LIP_CLEARANCE: f64 = 0.004;
const LIFT: f64 = 0.004;
const SUCTION_HOVER: f64 = 0.015;
const PUSH_DEPTH: f64 = 0.04;

#[derive(Debug, Error)]
pub enum PrimitiveError {
    #[error("no collision-free approach for {0}")]
    NoCollisionFreeApproach(String),
    #[error("{0} has no horizontal axis the jaws can span")]
    NotGraspable(String),
    #[error("not enough floor behind {0}")]
    NoRoomBehindTarget(String),
    #[error("{0} is taller than the jaw opening")]
    TooTallToScoop(String),
    #[error("no suctionable face on {0}")]
    NoSuctionFace(String),
    #[error("not enough room above {0} for the suction cup")]
    InsufficientClearance(String),
    #[error("{0} cannot be toppled")]
    NotToppleable(String),
    #[error("rotating {0} would not expose a graspable side")]
    NoBeneficialRotation(String),
    #[error("trajectory was not validated")]
    UnvalidatedPlan,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Tool point pose in the world frame. Fingertips are at the origin,
    /// `+y` is the approach direction and `x` the closing axis.
    pub pose: Pose6D,
    pub opening: f64,
    pub speed_cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspOrientation {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitivePlan {
    pub kind: PrimitiveKind,
    pub bin: BinId,
    pub target: String,
    /// Estimated world pose of the target.
    pub target_pose: Pose6D,
    pub waypoints: Vec<Waypoint>,
    pub contact_exclusions: ContactSet,
    pub expected_finger_opening: Option<f64>,
    /// Expected height of the suction block above the bin floor.
    pub expected_block_height: Option<f64>,
    /// Waypoint at which the jaws close, the cup blocks or a push lands.
    pub action_index: Option<usize>,
    pub grasp_orientation: Option<GraspOrientation>,
    /// Wall the spatula finger is loaded against.
    pub pretension_wall: Option<MemberKind>,
    pub preload_force: Option<f64>,
    /// Lateral and depth offsets tried on successive suction attempts.
    pub retry_offsets: Vec<[f64; 2]>,
    /// Fixed and hand cameras must not expose at the same time.
    pub sequential_exposure: bool,
    pub repercept_after: bool,
}

impl PrimitivePlan {
    pub fn empty(kind: PrimitiveKind, bin: BinId, target: &str) -> PrimitivePlan {
        PrimitivePlan {
            kind,
            bin,
            target: target.to_string(),
            target_pose: Pose6D::identity(),
            waypoints: Vec::new(),
            contact_exclusions: ContactSet::new(),
            expected_finger_opening: None,
            expected_block_height: None,
            action_index: None,
            grasp_orientation: None,
            pretension_wall: None,
            preload_force: None,
            retry_offsets: Vec::new(),
            sequential_exposure: false,
            repercept_after: false,
        }
    }

    /// Opening and speed limits of every waypoint.
    pub fn check(&self) -> Result<(), PrimitiveError> {
        let max = GripperSpec::default().max_opening;
        for (i, w) in self.waypoints.iter().enumerate() {
            if !(0.0..=max + 1e-12).contains(&w.opening) {
                return Err(PrimitiveError::InvalidPlan(format!("waypoint {i} opening {}", w.opening)));
            }
            if !(w.speed_cap > 0.0 && w.speed_cap <= crate::planner::TCP_SPEED_LIMIT) {
                return Err(PrimitiveError::InvalidPlan(format!("waypoint {i} speed cap {}", w.speed_cap)));
            }
        }
        if self.preload_force.is_some_and(|f| f > GripperSpec::default().max_force) {
            return Err(PrimitiveError::InvalidPlan("preload above gripper force".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

/// Estimated target in the shelf frame.
struct Target<'a> {
    sku: &'a str,
    bin: BinId,
    item: &'a ItemSpec,
    pose: Pose6D,
    world_pose: Pose6D,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    ext: Vector3<f64>,
    geom: &'a BinGeom,
}

impl Target<'_> {
    fn center(&self) -> Vector3<f64> {
        self.pose.position
    }

    fn obb(&self) -> Obb {
        self.item.obb_at(self.pose)
    }
}

fn target_of<'a>(estimate: &'a SceneEstimate, world: &'a WorldState) -> Result<Target<'a>, PrimitiveError> {
    let it = &estimate.best.items[estimate.target_choice];
    let item = world
        .catalog()
        .get(&it.sku)
        .map_err(WorldError::Catalog)?;
    let pose = world.shelf.world_pose.inverse().compose(&it.pose);
    let b = item.obb_at(pose);
    let (lo, hi) = b.aabb();
    Ok(Target {
        sku: &it.sku,
        bin: estimate.bin,
        item,
        pose,
        world_pose: it.pose,
        lo,
        hi,
        ext: extents(&b),
        geom: world.shelf.bin(estimate.bin),
    })
}

fn member(bin: BinId, kind: MemberKind) -> MemberId {
    MemberId { bin, kind }
}

fn waypoint(shelf: &ShelfModel, position: Vector3<f64>, orientation: UnitQuaternion<f64>, opening: f64, speed_cap: f64) -> Waypoint {
    Waypoint {
        pose: shelf.world_pose.compose(&Pose6D::new(position, orientation)),
        opening,
        speed_cap,
    }
}

fn base_plan(kind: PrimitiveKind, t: &Target) -> PrimitivePlan {
    PrimitivePlan {
        target_pose: t.world_pose,
        ..PrimitivePlan::empty(kind, t.bin, t.sku)
    }
}

/// Two pre-selected hand-camera viewpoints for the bin, with the camera at
/// the tool point looking along the approach axis.
pub fn plan_percept(shelf: &ShelfModel, bin: BinId, target: &str) -> PrimitivePlan {
    let to_tool = Pose6D::from_rotation(Pose6D::rot_axis(0, FRAC_PI_2));
    let mut plan = PrimitivePlan::empty(PrimitiveKind::Percept, bin, target);
    plan.waypoints = percept_viewpoints(shelf, bin)
        .iter()
        .map(|v| Waypoint {
            pose: v.compose(&to_tool),
            opening: 0.0,
            speed_cap: FREE_SPEED,
        })
        .collect();
    plan.sequential_exposure = true;
    plan
}

/// Rotation about the approach axis that puts the suction cup on the side
/// away from the nearer wall.
fn cup_away_roll(t: &Target) -> UnitQuaternion<f64> {
    let (blo, bhi) = (t.geom.origin, t.geom.bounds().1);
    if bhi.x - t.hi.x < t.lo.x - blo.x {
        Pose6D::rot_axis(1, PI)
    } else {
        UnitQuaternion::identity()
    }
}

#[allow(clippy::too_many_arguments)]
fn grasp_waypoints(
    shelf: &ShelfModel,
    t: &Target,
    x: f64,
    z: f64,
    open: f64,
    close: f64,
    roll: UnitQuaternion<f64>,
    o: GraspOrientation,
) -> Vec<Waypoint> {
    let q = Pose6D::rot_axis(2, o.yaw_deg.to_radians()) * Pose6D::rot_axis(0, o.pitch_deg.to_radians()) * roll;
    let depth = t.ext.y;
    let y = t.center().y + (depth * 0.5 - 0.005).min(0.05).max(0.0);
    vec![
        waypoint(shelf, Vector3::new(x, STANDOFF_Y, z), q, open, FREE_SPEED),
        waypoint(shelf, Vector3::new(x, y, z), q, open, BIN_SPEED),
        waypoint(shelf, Vector3::new(x, y, z), q, close, CONTACT_SPEED),
        waypoint(shelf, Vector3::new(x, y, z + LIFT), q, close, BIN_SPEED),
        waypoint(shelf, Vector3::new(x, STANDOFF_Y, z + LIFT), q, close, BIN_SPEED),
    ]
}

/// Front approach with a vertical parallel-jaw grasp across the target's
/// lateral dimension.
///
/// Orientations are tried pitch-major in scan order; the first whose swept
/// body clears the shelf is returned. A target flush to a wall is taken
/// with the spatula finger sliding along that wall.
pub fn plan_grasp(
    estimate: &SceneEstimate,
    world: &WorldState,
    gripper: &GripperSpec,
) -> Result<PrimitivePlan, PrimitiveError> {
    let t = target_of(estimate, world)?;
    let shelf = &world.shelf;
    let width = crate::world::front_width(t.item, &t.pose);
    if width > gripper.max_opening - DEFAULT_GRASP_MARGIN {
        return Err(PrimitiveError::NotGraspable(t.sku.to_string()));
    }
    let (blo, bhi) = t.geom.bounds();
    let lips = t.geom.lips;
    let mut plan = base_plan(PrimitiveKind::Grasp, &t);
    let ft = gripper.finger_thickness;

    let pose_type = classify_pose(shelf, t.bin, t.item, &t.pose, gripper);
    let (x, open, roll) = if pose_type == PoseType::FlushToWall {
        let left = t.lo.x - blo.x <= bhi.x - t.hi.x;
        let (wall, roll) = if left {
            (MemberKind::LeftWall, UnitQuaternion::identity())
        } else {
            (MemberKind::RightWall, Pose6D::rot_axis(1, PI))
        };
        plan.pretension_wall = Some(wall);
        plan.contact_exclusions.insert(member(t.bin, wall));
        let exterior_side = match t.bin.column() {
            0 => left,
            2 => !left,
            _ => false,
        };
        if exterior_side && t.geom.has_exterior_lip() {
            plan.contact_exclusions.insert(member(t.bin, MemberKind::ExteriorLip));
        }
        // Spatula outer face on the wall, far finger just past the object.
        let (near, far) = if left {
            (blo.x + ft, t.hi.x + GRASP_CLEARANCE * 0.5)
        } else {
            (bhi.x - ft, t.lo.x - GRASP_CLEARANCE * 0.5)
        };
        let open = (far - near).abs().min(gripper.max_opening);
        let x = if left { near + open * 0.5 } else { near - open * 0.5 };
        (x, open, roll)
    } else {
        // Narrow the jaws when a wall or exterior lip is close on either side.
        let ext_lip = t.geom.lips.exterior.unwrap_or(0.0);
        let left_obstacle = blo.x + if t.bin.column() == 0 { ext_lip } else { 0.0 };
        let right_obstacle = bhi.x - if t.bin.column() == 2 { ext_lip } else { 0.0 };
        let c = t.center().x;
        let room = (c - width * 0.5 - left_obstacle).min(right_obstacle - c - width * 0.5) - ft - 0.002;
        let side = (GRASP_CLEARANCE * 0.5).min(room).max(0.001);
        let open = (width + 2.0 * side).min(gripper.max_opening);
        (c, open, cup_away_roll(&t))
    };

    // Keep fingers (and the palm, when it enters the bin) between the lips.
    let half_h = gripper.finger_height.max(2.0 * gripper.palm_half[2]) * 0.5;
    let zmin = blo.z + lips.bottom + half_h + LIP_CLEARANCE;
    let zmax = bhi.z - lips.top - half_h - LIP_CLEARANCE - LIFT;
    let z = if zmin <= zmax {
        t.center().z.clamp(zmin, zmax)
    } else {
        (blo.z + bhi.z) * 0.5
    };

    plan.expected_finger_opening = Some(width);
    plan.action_index = Some(2);
    for pitch in GRASP_PITCH_SCAN {
        for yaw in GRASP_YAW_SCAN {
            let o = GraspOrientation {
                pitch_deg: pitch,
                yaw_deg: yaw,
            };
            let w = grasp_waypoints(shelf, &t, x, z, open, width, roll, o);
            if first_collision(&w, &plan.contact_exclusions, shelf, gripper)?.is_none() {
                plan.waypoints = w;
                plan.grasp_orientation = Some(o);
                return Ok(plan);
            }
        }
    }
    Err(PrimitiveError::NoCollisionFreeApproach(t.sku.to_string()))
}

/// Spatula finger flush on the floor, slide under the target toward the
/// back wall, close and retract.
pub fn plan_scoop(
    estimate: &SceneEstimate,
    world: &WorldState,
    gripper: &GripperSpec,
) -> Result<PrimitivePlan, PrimitiveError> {
    let t = target_of(estimate, world)?;
    let shelf = &world.shelf;
    let (blo, bhi) = t.geom.bounds();
    if t.ext.z > gripper.max_opening {
        return Err(PrimitiveError::TooTallToScoop(t.sku.to_string()));
    }
    if bhi.y - t.hi.y < gripper.finger_length {
        return Err(PrimitiveError::NoRoomBehindTarget(t.sku.to_string()));
    }
    // Jaw axis vertical with the spatula (-x) finger at the bottom.
    let q = Pose6D::rot_axis(1, -FRAC_PI_2);
    let open = gripper.max_opening;
    let z = blo.z + open * 0.5 + gripper.finger_thickness;
    let side = gripper.palm_half[2].max(gripper.finger_height * 0.5) + 0.003;
    let x = t.center().x.clamp(blo.x + side, bhi.x - side);
    let y_end = bhi.y - 0.005;
    let height = t.item.grasp_dims()[crate::world::local_axis_along(&t.pose, &Vector3::z())];

    let mut plan = base_plan(PrimitiveKind::Scoop, &t);
    plan.contact_exclusions = [MemberKind::Floor, MemberKind::BottomLip, MemberKind::BackWall]
        .into_iter()
        .map(|k| member(t.bin, k))
        .collect();
    plan.waypoints = vec![
        waypoint(shelf, Vector3::new(x, STANDOFF_Y - 0.1, z + 0.005), q, open, FREE_SPEED),
        waypoint(shelf, Vector3::new(x, -0.01, z), q, open, BIN_SPEED),
        waypoint(shelf, Vector3::new(x, y_end, z), q, open, 0.2),
        waypoint(shelf, Vector3::new(x, y_end, z), q, height, CONTACT_SPEED),
        waypoint(shelf, Vector3::new(x, y_end, z + 0.01), q, height, BIN_SPEED),
        waypoint(shelf, Vector3::new(x, STANDOFF_Y - 0.1, z + 0.01), q, height, BIN_SPEED),
    ];
    plan.expected_finger_opening = Some(height);
    plan.action_index = Some(3);
    plan.preload_force = Some(SCOOP_PRELOAD.min(gripper.max_force));
    if first_collision(&plan.waypoints, &plan.contact_exclusions, shelf, gripper)?.is_some() {
        return Err(PrimitiveError::NoCollisionFreeApproach(t.sku.to_string()));
    }
    Ok(plan)
}

/// Suction retry offsets: nominal, then a ±1 cm cross.
pub fn suction_offsets(step: f64) -> Vec<[f64; 2]> {
    vec![[0.0, 0.0], [step, 0.0], [-step, 0.0], [0.0, step], [0.0, -step]]
}

/// Tool pose that puts the cup tip at `tip` with the cup pointing down.
pub fn suction_tool_pose(gripper: &GripperSpec, tip: Vector3<f64>, opening: f64) -> Pose6D {
    let q = Pose6D::rot_axis(1, FRAC_PI_2);
    let offset = q * gripper.cup_tip(opening);
    Pose6D::new(tip - offset, q)
}

/// Cup above the centroid of the top face, descend until blocked, lift.
pub fn plan_suction(
    estimate: &SceneEstimate,
    world: &WorldState,
    gripper: &GripperSpec,
) -> Result<PrimitivePlan, PrimitiveError> {
    let t = target_of(estimate, world)?;
    let shelf = &world.shelf;
    let face = suction_candidate_faces(t.item, &t.pose)
        .into_iter()
        .find(|f| f.tag == FaceTag::HorizontalUp && f.size[0] >= 2.0 * gripper.cup_radius)
        .ok_or_else(|| PrimitiveError::NoSuctionFace(t.sku.to_string()))?;
    let (blo, bhi) = t.geom.bounds();
    let top = face.center.z;
    if bhi.z - top < gripper.cup_length {
        return Err(PrimitiveError::InsufficientClearance(t.sku.to_string()));
    }
    let (fx, fy) = (face.center.x, face.center.y);
    let hover = top + SUCTION_HOVER;
    let at = |x: f64, y: f64, z: f64, cap: f64| {
        let p = suction_tool_pose(gripper, Vector3::new(x, y, z), 0.0);
        Waypoint {
            pose: shelf.world_pose.compose(&p),
            opening: 0.0,
            speed_cap: cap,
        }
    };
    let mut plan = base_plan(PrimitiveKind::Suction, &t);
    plan.waypoints = vec![
        at(fx, STANDOFF_Y, hover, FREE_SPEED),
        at(fx, fy, hover, BIN_SPEED),
        at(fx, fy, top, CONTACT_SPEED),
        at(fx, fy, hover, 0.1),
        at(fx, STANDOFF_Y, hover, BIN_SPEED),
    ];
    plan.action_index = Some(2);
    plan.expected_block_height = Some(top - blo.z);
    plan.retry_offsets = suction_offsets(SUCTION_PERTURBATION);
    if first_collision(&plan.waypoints, &plan.contact_exclusions, shelf, gripper)?.is_some() {
        return Err(PrimitiveError::NoCollisionFreeApproach(t.sku.to_string()));
    }
    Ok(plan)
}

fn push_plan(
    kind: PrimitiveKind,
    t: &Target,
    shelf: &ShelfModel,
    x: f64,
    z: f64,
    depth: f64,
    push_speed: f64,
) -> PrimitivePlan {
    let q = UnitQuaternion::identity();
    let front = t.lo.y;
    let mut plan = base_plan(kind, t);
    plan.waypoints = vec![
        waypoint(shelf, Vector3::new(x, STANDOFF_Y, z), q, 0.0, FREE_SPEED),
        waypoint(shelf, Vector3::new(x, front - 0.005, z), q, 0.0, BIN_SPEED),
        waypoint(shelf, Vector3::new(x, front + depth, z), q, 0.0, push_speed),
        waypoint(shelf, Vector3::new(x, STANDOFF_Y, z), q, 0.0, FREE_SPEED),
    ];
    plan.action_index = Some(1);
    plan.repercept_after = true;
    plan
}

/// Height range in which closed fingers pass both lips.
fn push_z_range(t: &Target, gripper: &GripperSpec) -> (f64, f64) {
    let (blo, bhi) = t.geom.bounds();
    let half = gripper.finger_height * 0.5 + LIP_CLEARANCE;
    (blo.z + t.geom.lips.bottom + half, bhi.z - t.geom.lips.top - half)
}

/// Rapid push toward the back wall above the target's center of mass.
pub fn plan_topple(
    estimate: &SceneEstimate,
    world: &WorldState,
    gripper: &GripperSpec,
) -> Result<PrimitivePlan, PrimitiveError> {
    let t = target_of(estimate, world)?;
    let shelf = &world.shelf;
    let not = || PrimitiveError::NotToppleable(t.sku.to_string());
    if classify_pose(shelf, t.bin, t.item, &t.pose, gripper) != PoseType::TallWideFace || !toppleable(t.item, &t.obb()) {
        return Err(not());
    }
    let (zmin, zmax) = push_z_range(&t, gripper);
    let com = t.center().z;
    let z = (t.lo.z + 0.6 * t.ext.z).clamp(zmin, zmax);
    if z <= com {
        return Err(not());
    }
    let plan = push_plan(PrimitiveKind::Topple, &t, shelf, t.center().x, z, PUSH_DEPTH, FREE_SPEED);
    if first_collision(&plan.waypoints, &plan.contact_exclusions, shelf, gripper)?.is_some() {
        return Err(PrimitiveError::NoCollisionFreeApproach(t.sku.to_string()));
    }
    Ok(plan)
}

/// Push near a front corner so the target yaws its narrow side to the front.
pub fn plan_push_rotate(
    estimate: &SceneEstimate,
    world: &WorldState,
    gripper: &GripperSpec,
) -> Result<PrimitivePlan, PrimitiveError> {
    let t = target_of(estimate, world)?;
    let shelf = &world.shelf;
    let limit = gripper.max_opening - DEFAULT_GRASP_MARGIN;
    let g = t.item.grasp_dims();
    let across = g[crate::world::local_axis_along(&t.pose, &Vector3::x())];
    let along = g[crate::world::local_axis_along(&t.pose, &Vector3::y())];
    if across <= limit || along > limit {
        return Err(PrimitiveError::NoBeneficialRotation(t.sku.to_string()));
    }
    let (blo, bhi) = t.geom.bounds();
    let (zmin, zmax) = push_z_range(&t, gripper);
    let z = (t.lo.z + 0.5 * t.ext.z).clamp(zmin, zmax.max(zmin));
    // Push on the corner nearer the bin middle.
    let side = if t.center().x < t.geom.center_x() { 1.0 } else { -1.0 };
    let reach = gripper.finger_height * 0.5 + 0.005;
    let x = (t.center().x + side * 0.35 * t.ext.x).clamp(blo.x + reach, bhi.x - reach);
    let plan = push_plan(PrimitiveKind::PushRotate, &t, shelf, x, z, (t.ext.y * 0.5).min(0.05), 0.5);
    if first_collision(&plan.waypoints, &plan.contact_exclusions, shelf, gripper)?.is_some() {
        return Err(PrimitiveError::NoCollisionFreeApproach(t.sku.to_string()));
    }
    Ok(plan)
}

/// Dispatch to the planner for `kind`.
pub fn plan_primitive(
    kind: PrimitiveKind,
    estimate: &SceneEstimate,
    world: &WorldState,
    gripper: &GripperSpec,
) -> Result<PrimitivePlan, PrimitiveError> {
    match kind {
        PrimitiveKind::Percept => Ok(plan_percept(&world.shelf, estimate.bin, &estimate.target)),
        PrimitiveKind::Grasp => plan_grasp(estimate, world, gripper),
        PrimitiveKind::Scoop => plan_scoop(estimate, world, gripper),
        PrimitiveKind::Suction => plan_suction(estimate, world, gripper),
        PrimitiveKind::Topple => plan_topple(estimate, world, gripper),
        PrimitiveKind::PushRotate => plan_push_rotate(estimate, world, gripper),
    }
}

#[cfg(test)]
mod tests;
