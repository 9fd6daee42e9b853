use nalgebra::{UnitQuaternion, Vector3};

use super::{box_in_bin, extents, InstanceId, Removal, RemovalKind, WorldError, WorldState, PENETRATION_TOLERANCE};
use crate::catalog::{GripperSpec, ItemSpec, DEFAULT_GRASP_MARGIN};
use crate::events::Event;
use crate::geometry::{Obb, Pose6D};

/// Drops from strictly higher than this are penalized.
pub const DROP_PENALTY_HEIGHT: f64 = 0.30;

/// Quasi-static stand-in: a rigid box tips over its back edge when it is
/// taller than it is deep along the push.
pub fn toppleable(item: &ItemSpec, shelf_box: &Obb) -> bool {
    let e = extents(shelf_box);
    !item.deformable && e.z > e.y + 1e-9
}

/// Shelf-frame pose after rotating 90° about the back bottom edge of the box.
pub fn topple_pose(shelf_pose: &Pose6D, shelf_box: &Obb) -> Pose6D {
    let (lo, hi) = shelf_box.aabb();
    let pivot = Vector3::new(shelf_pose.position.x, hi.y, lo.z);
    let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -std::f64::consts::FRAC_PI_2);
    Pose6D::new(
        pivot + rot * (shelf_pose.position - pivot),
        rot * shelf_pose.orientation,
    )
}

fn clear_of_neighbours(world: &WorldState, id: InstanceId, shelf_box: &Obb) -> bool {
    let bin = world.objects[&id].bin;
    let mut mine = shelf_box.clone();
    mine.half_extents = mine.half_extents.map(|h| (h - PENETRATION_TOLERANCE * 0.5).max(1e-6));
    world
        .objects_in(bin)
        .filter(|o| o.id != id)
        .all(|o| match world.shelf_obb(o.id) {
            Ok(other) => !mine.intersects(&other),
            Err(_) => true,
        })
}

fn with_shelf_pose(world: &WorldState, id: InstanceId, shelf_pose: Pose6D) -> WorldState {
    let mut next = world.clone();
    let o = next.objects.get_mut(&id).expect("checked by caller");
    o.pose = world.shelf.world_pose.compose(&shelf_pose);
    o.resting_face = super::resting_face_of(&shelf_pose);
    next
}

/// Tip a rigid object over its back bottom edge.
///
/// Returns the unchanged world and `false` when the object is compliant, not
/// taller than deep, or would not fit behind itself.
pub fn apply_topple(world: &WorldState, id: InstanceId) -> Result<(WorldState, bool), WorldError> {
    let o = world.object(id)?;
    let item = world.item(id)?;
    let pose = world.shelf_pose(id)?;
    let b = item.obb_at(pose);
    if !toppleable(item, &b) {
        return Ok((world.clone(), false));
    }
    let next_pose = topple_pose(&pose, &b);
    let next_box = item.obb_at(next_pose);
    if !box_in_bin(&world.shelf, o.bin, &next_box, 1e-9) || !clear_of_neighbours(world, id, &next_box) {
        return Ok((world.clone(), false));
    }
    Ok((with_shelf_pose(world, id, next_pose), true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RotateResult {
    pub rotated: bool,
    /// The rotation cannot change what faces the front (square footprint).
    pub no_op: bool,
}

/// Yaw an object 90° about its center.
///
/// A push realigns the object against the bin front: if the rotated box
/// would stick out of the opening it is slid back just enough to clear it.
pub fn apply_push_rotate(
    world: &WorldState,
    id: InstanceId,
    gripper: &GripperSpec,
) -> Result<(WorldState, RotateResult), WorldError> {
    let o = world.object(id)?;
    let item = world.item(id)?;
    let pose = world.shelf_pose(id)?;
    let b = item.obb_at(pose);
    let e = extents(&b);
    let unchanged = RotateResult {
        rotated: false,
        no_op: false,
    };
    let limit = gripper.max_opening - DEFAULT_GRASP_MARGIN;
    let g = item.grasp_dims();
    let up = super::local_axis_along(&pose, &Vector3::z());
    let horizontal_ok = (0..3).filter(|&i| i != up).any(|i| g[i] <= limit + 1e-12);
    if !horizontal_ok || item.deformable {
        return Ok((world.clone(), unchanged));
    }
    let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
    let mut next_pose = Pose6D::new(pose.position, yaw * pose.orientation);
    let (lo, _) = world.shelf.bin_bounds(o.bin);
    let (nlo, _) = item.obb_at(next_pose).aabb();
    if nlo.y < lo.y {
        next_pose.position.y += lo.y - nlo.y;
    }
    let next_box = item.obb_at(next_pose);
    if !box_in_bin(&world.shelf, o.bin, &next_box, 1e-9) || !clear_of_neighbours(world, id, &next_box) {
        return Ok((world.clone(), unchanged));
    }
    let no_op = (e.x - e.y).abs() < 1e-9;
    Ok((
        with_shelf_pose(world, id, next_pose),
        RotateResult { rotated: true, no_op },
    ))
}

/// Take an object out of its bin.
///
/// Emits a pick event with the clutter count at pick time and, for releases
/// from above the penalty height, a drop event.
pub fn remove_object(
    world: &WorldState,
    id: InstanceId,
    drop_height: Option<f64>,
    is_target: bool,
) -> Result<(WorldState, Vec<Event>), WorldError> {
    let o = world.object(id)?.clone();
    let item = world.item(id)?;
    let clutter = world.clutter(o.bin);
    let mut events = vec![Event::Pick {
        bin: o.bin,
        sku: o.sku.clone(),
        instance: id.0,
        clutter,
        bonus: item.bonus_points,
        target: is_target,
    }];
    let dropped = drop_height.filter(|h| *h > DROP_PENALTY_HEIGHT);
    if let Some(height) = dropped {
        events.push(Event::Drop {
            bin: o.bin,
            sku: o.sku.clone(),
            height,
            target: is_target,
        });
    }
    let mut next = world.clone();
    next.objects.remove(&id);
    next.removed.push(Removal {
        id,
        sku: o.sku,
        bin: o.bin,
        outcome: if dropped.is_some() {
            RemovalKind::Dropped
        } else {
            RemovalKind::Picked
        },
        clock: world.clock,
    });
    Ok((next, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;
    use crate::geometry::{BinId, ShelfModel};
    use crate::world::{axis_aligned_rotation, resting_face_of};
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn spec(sku: &str, dims: [f64; 3], deformable: bool) -> ItemSpec {
        ItemSpec {
            sku: sku.into(),
            dims,
            mass: 0.2,
            deformable,
            reflective_packaging: false,
            suction_sealable: !deformable,
            bonus_points: 0,
            damage_fragile: false,
            furry: false,
            bagged: false,
        }
    }

    fn bin_e() -> BinId {
        BinId::new(4).unwrap()
    }

    /// Item in bin_E at lateral offset `x` from the left wall and `y` from the
    /// front, with local `lateral` along x and `up` along z.
    fn world_with(items: &[(ItemSpec, usize, usize, f64, f64)]) -> (WorldState, Vec<InstanceId>) {
        let shelf = ShelfModel::nominal();
        let cat = Arc::new(Catalog::new(items.iter().map(|i| i.0.clone()).collect()).unwrap());
        let mut w = WorldState::new(shelf.clone(), cat);
        let (lo, _) = shelf.bin_bounds(bin_e());
        let ids = items
            .iter()
            .map(|(it, lat, up, x, y)| {
                let d = it.dims_vec();
                let depth = 3 - lat - up;
                let c = Vector3::new(lo.x + x + d[*lat] / 2.0, lo.y + y + d[depth] / 2.0, lo.z + d[*up] / 2.0);
                w.insert(&it.sku, bin_e(), Pose6D::new(c, axis_aligned_rotation(*lat, *up))).unwrap()
            })
            .collect();
        (w, ids)
    }

    /// Rotation about the back bottom edge as a homogeneous transform.
    fn edge_oracle(pose: &Pose6D, half: Vector3<f64>) -> Matrix4<f64> {
        let r = pose.rotation_matrix().abs();
        let e = r * half;
        let p = Vector3::new(pose.position.x, pose.position.y + e.y, pose.position.z - e.z);
        let (c, s) = ((-std::f64::consts::FRAC_PI_2).cos(), (-std::f64::consts::FRAC_PI_2).sin());
        let rot = Matrix4::new(
            1.0, 0.0, 0.0, 0.0, //
            0.0, c, -s, 0.0, //
            0.0, s, c, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        Matrix4::new_translation(&p) * rot * Matrix4::new_translation(&-p) * pose.to_homogeneous()
    }

    #[test]
    fn tall_box_topples_to_its_depth() {
        // h = 0.15, d = 0.05, about 0.2 m of room behind it.
        let (w, ids) = world_with(&[(spec("box", [0.05, 0.08, 0.15], false), 1, 2, 0.05, 0.18)]);
        let before = w.shelf_pose(ids[0]).unwrap();
        let (next, toppled) = apply_topple(&w, ids[0]).unwrap();
        assert!(toppled);
        let e = extents(&next.shelf_obb(ids[0]).unwrap());
        assert!((e.z - 0.05).abs() < 1e-12);
        let got = next.shelf_pose(ids[0]).unwrap().to_homogeneous();
        let want = edge_oracle(&before, Vector3::new(0.025, 0.04, 0.075));
        assert!((got - want).abs().max() < 1e-9);
        // Resting on the former back face.
        assert_eq!(resting_face_of(&next.shelf_pose(ids[0]).unwrap()).axis, 0);
    }

    #[test]
    fn cube_and_compliant_items_do_not_topple() {
        let (w, ids) = world_with(&[(spec("cube", [0.08, 0.08, 0.08], false), 0, 2, 0.05, 0.0)]);
        let (next, t) = apply_topple(&w, ids[0]).unwrap();
        assert!(!t);
        assert_eq!(next.objects, w.objects);
        let (w, ids) = world_with(&[(spec("furry_frog", [0.07, 0.10, 0.13], true), 0, 2, 0.05, 0.0)]);
        let (next, t) = apply_topple(&w, ids[0]).unwrap();
        assert!(!t);
        assert_eq!(next.objects[&ids[0]].pose, w.objects[&ids[0]].pose);
    }

    #[test]
    fn topple_blocked_by_back_wall() {
        // 0.20 tall box 0.30 m from the front: would need 0.20 m behind.
        let (w, ids) = world_with(&[(spec("tall", [0.04, 0.08, 0.20], false), 1, 2, 0.05, 0.30)]);
        let (_, t) = apply_topple(&w, ids[0]).unwrap();
        assert!(!t);
    }

    #[test]
    fn second_topple_never_restores_height() {
        let (w, ids) = world_with(&[(spec("box", [0.05, 0.08, 0.15], false), 1, 2, 0.05, 0.0)]);
        let (w1, t1) = apply_topple(&w, ids[0]).unwrap();
        let (w2, t2) = apply_topple(&w1, ids[0]).unwrap();
        assert!(t1 && !t2);
        let up = crate::world::local_axis_along(&w2.shelf_pose(ids[0]).unwrap(), &Vector3::z());
        assert_ne!(up, 2);
    }

    #[test]
    fn push_rotate_turns_long_side_away_from_front() {
        let g = GripperSpec::default();
        // 0.09 × 0.20 footprint with the long side across the front.
        let (w, ids) = world_with(&[(spec("b", [0.05, 0.09, 0.20], false), 2, 0, 0.03, 0.0)]);
        let (next, r) = apply_push_rotate(&w, ids[0], &g).unwrap();
        assert!(r.rotated && !r.no_op);
        let e = extents(&next.shelf_obb(ids[0]).unwrap());
        assert!((e.x - 0.09).abs() < 1e-9 && (e.y - 0.20).abs() < 1e-9);
        assert!(next.is_contained(ids[0]).unwrap());
    }

    #[test]
    fn square_footprint_rotation_is_a_no_op() {
        let g = GripperSpec::default();
        let (w, ids) = world_with(&[(spec("cube", [0.08, 0.08, 0.08], false), 0, 2, 0.05, 0.0)]);
        let (_, r) = apply_push_rotate(&w, ids[0], &g).unwrap();
        assert!(r.rotated && r.no_op);
    }

    #[test]
    fn rotation_clipping_wall_is_refused() {
        let g = GripperSpec::default();
        // Deep narrow item: 0.30 along y would become 0.30 across a 0.27 bin.
        let (w, ids) = world_with(&[(spec("brush", [0.04, 0.07, 0.30], false), 1, 0, 0.1, 0.0)]);
        let (next, r) = apply_push_rotate(&w, ids[0], &g).unwrap();
        assert!(!r.rotated);
        assert_eq!(next.objects, w.objects);
    }

    #[test]
    fn removal_reports_clutter_and_drops() {
        let items = [
            (spec("a", [0.04, 0.05, 0.10], false), 0, 2, 0.01, 0.0),
            (spec("b", [0.04, 0.05, 0.10], false), 0, 2, 0.10, 0.0),
            (spec("c", [0.04, 0.05, 0.10], false), 0, 2, 0.20, 0.0),
        ];
        let (w, ids) = world_with(&items);
        let (w1, ev) = remove_object(&w, ids[1], None, true).unwrap();
        assert_eq!(ev.len(), 1);
        assert!(matches!(ev[0], Event::Pick { clutter: 3, target: true, .. }));
        let (w2, ev) = remove_object(&w1, ids[0], Some(0.35), true).unwrap();
        assert!(matches!(ev[0], Event::Pick { clutter: 2, .. }));
        assert!(matches!(ev[1], Event::Drop { target: true, .. }));
        let (_, ev) = remove_object(&w2, ids[2], Some(0.30), false).unwrap();
        assert_eq!(ev.len(), 1);
        assert!(matches!(ev[0], Event::Pick { clutter: 1, target: false, .. }));
        assert!(matches!(remove_object(&w2, ids[0], None, true), Err(WorldError::UnknownInstance(_))));
    }

    proptest! {
        #[test]
        fn topple_matches_edge_oracle(
            dx in 0.02f64..0.1, dy in 0.02f64..0.1, dz in 0.02f64..0.2,
            up in 0usize..3, lat_pick in 0usize..2, x in 0.0f64..0.1, y in 0.0f64..0.2,
        ) {
            let mut d = [dx, dy, dz];
            d.sort_by(f64::total_cmp);
            let lat = [0, 1, 2].into_iter().filter(|&a| a != up).nth(lat_pick).unwrap();
            let (w, ids) = world_with(&[(spec("box", d, false), lat, up, x, y)]);
            let before = w.shelf_pose(ids[0]).unwrap();
            let (next, toppled) = apply_topple(&w, ids[0]).unwrap();
            if toppled {
                let got = next.shelf_pose(ids[0]).unwrap().to_homogeneous();
                let want = edge_oracle(&before, Vector3::from(d) * 0.5);
                prop_assert!((got - want).abs().max() < 1e-9);
                prop_assert!(next.is_contained(ids[0]).unwrap());
            } else {
                prop_assert_eq!(&next.objects, &w.objects);
            }
        }
    }
}
