use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{extents, local_axis_along, InstanceId, WorldError, WorldState};
use crate::catalog::{GripperSpec, ItemSpec, DEFAULT_GRASP_MARGIN};
use crate::geometry::{BinId, Pose6D, ShelfModel};

/// Lateral gap below which an object counts as flush against a wall.
pub const WALL_GAP: f64 = 0.015;
/// Objects lower than this are flat.
pub const FLAT_LOW_HEIGHT: f64 = 0.05;
/// Fraction of the bin height above which a front face is tall.
pub const TALL_FACE_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PoseType {
    FreeStanding,
    FlushToWall,
    FlatLow,
    TallWideFace,
    NoFrontGraspAxis,
}

impl PoseType {
    pub const ALL: [PoseType; 5] = [
        PoseType::FreeStanding,
        PoseType::FlushToWall,
        PoseType::FlatLow,
        PoseType::TallWideFace,
        PoseType::NoFrontGraspAxis,
    ];
}

/// Width the jaws must span for a straight front approach: the item
/// dimension along the shelf's lateral axis, squeezed for compliant items.
pub fn front_width(item: &ItemSpec, shelf_pose: &Pose6D) -> f64 {
    item.grasp_dims()[local_axis_along(shelf_pose, &Vector3::x())]
}

/// Classify a shelf-frame object pose inside `bin`.
pub fn classify_pose(
    shelf: &ShelfModel,
    bin: BinId,
    item: &ItemSpec,
    shelf_pose: &Pose6D,
    gripper: &GripperSpec,
) -> PoseType {
    let b = item.obb_at(*shelf_pose);
    let (lo, hi) = b.aabb();
    let (blo, bhi) = shelf.bin_bounds(bin);
    let ext = extents(&b);
    let bin_h = shelf.bin(bin).opening_height;
    let gap = (lo.x - blo.x).min(bhi.x - hi.x);
    if gap < WALL_GAP {
        PoseType::FlushToWall
    } else if ext.z > TALL_FACE_RATIO * bin_h && ext.x > gripper.max_opening {
        PoseType::TallWideFace
    } else if front_width(item, shelf_pose) > gripper.max_opening - DEFAULT_GRASP_MARGIN {
        PoseType::NoFrontGraspAxis
    } else if ext.z < FLAT_LOW_HEIGHT {
        PoseType::FlatLow
    } else {
        PoseType::FreeStanding
    }
}

pub fn classify_pose_type(
    world: &WorldState,
    id: InstanceId,
    gripper: &GripperSpec,
) -> Result<PoseType, WorldError> {
    let o = world.object(id)?;
    let item = world.item(id)?;
    Ok(classify_pose(&world.shelf, o.bin, item, &world.shelf_pose(id)?, gripper))
}
