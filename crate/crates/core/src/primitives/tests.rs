use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};

use super::*;
use crate::catalog::{Catalog, ItemSpec};
use crate::events::{Event, Feedback};
use crate::geometry::swept_collides;
use crate::perception::{HypothesisItem, SceneHypothesis};
use crate::planner::{time_parameterize, validate, WorkspaceEnvelope};
use crate::world::{axis_aligned_rotation, InstanceId};

fn spec(sku: &str, dims: [f64; 3]) -> ItemSpec {
    ItemSpec {
        sku: sku.into(),
        dims,
        mass: 0.2,
        deformable: false,
        reflective_packaging: false,
        suction_sealable: true,
        bonus_points: 0,
        damage_fragile: false,
        furry: false,
        bagged: false,
    }
}

fn catalog() -> Arc<Catalog> {
    let mut items = vec![
        spec("box6", [0.06, 0.06, 0.10]),
        spec("flat", [0.03, 0.10, 0.12]),
        spec("wide_flat", [0.05, 0.10, 0.10]),
        spec("book", [0.03, 0.16, 0.19]),
        spec("cube", [0.16, 0.16, 0.16]),
        spec("slab", [0.06, 0.09, 0.20]),
        spec("big", [0.12, 0.13, 0.14]),
        spec("tall", [0.05, 0.06, 0.195]),
        spec("block8", [0.08, 0.10, 0.10]),
    ];
    let mut bag = spec("bag", [0.04, 0.09, 0.12]);
    bag.deformable = true;
    bag.suction_sealable = false;
    bag.bagged = true;
    items.push(bag);
    let mut duck = spec("duck", [0.07, 0.07, 0.09]);
    duck.deformable = true;
    duck.suction_sealable = false;
    duck.furry = true;
    items.push(duck);
    let mut soft_book = spec("soft_book", [0.03, 0.16, 0.19]);
    soft_book.deformable = true;
    items.push(soft_book);
    let mut cups = spec("cups", [0.06, 0.07, 0.10]);
    cups.damage_fragile = true;
    items.push(cups);
    Arc::new(Catalog::new(items).unwrap())
}

fn bin_e() -> BinId {
    BinId::new(4).unwrap()
}

fn empty_world() -> WorldState {
    WorldState::new(ShelfModel::nominal(), catalog())
}

/// Place `sku` on the floor with local `lateral` along shelf x and `up`
/// along z, its lower-left-front corner `gap_x` from the left wall and
/// `gap_y` from the opening.
fn place(w: &mut WorldState, bin: BinId, sku: &str, lateral: usize, up: usize, gap_x: f64, gap_y: f64) -> InstanceId {
    let q = axis_aligned_rotation(lateral, up);
    let dims = w.catalog().get(sku).unwrap().dims;
    let depth = 3 - lateral - up;
    let (lo, _) = w.shelf.bin_bounds(bin);
    let c = Vector3::new(
        lo.x + gap_x + dims[lateral] * 0.5,
        lo.y + gap_y + dims[depth] * 0.5,
        lo.z + dims[up] * 0.5,
    );
    w.insert(sku, bin, Pose6D::new(c, q)).unwrap()
}

fn estimate_of(w: &WorldState, id: InstanceId, error: Vector3<f64>) -> SceneEstimate {
    let o = w.object(id).unwrap();
    SceneEstimate {
        bin: o.bin,
        target: o.sku.clone(),
        best: SceneHypothesis {
            items: vec![HypothesisItem {
                sku: o.sku.clone(),
                pose: o.pose.translated(error),
            }],
            score: 0.0,
        },
        target_choice: 0,
        shots_used: 10,
        per_camera_counts: BTreeMap::new(),
        shots: Vec::new(),
    }
}

fn validated(w: &WorldState, plan: &PrimitivePlan) -> crate::planner::ValidatedTrajectory {
    validate(plan, &w.shelf, &GripperSpec::default(), &WorkspaceEnvelope::for_shelf(&w.shelf)).unwrap()
}

#[test]
fn percept_viewpoints_are_outside_the_shelf() {
    let shelf = ShelfModel::nominal();
    let p = plan_percept(&shelf, BinId::new(0).unwrap(), "x");
    assert_eq!(p.waypoints.len(), 2);
    assert!(p.sequential_exposure);
    for w in &p.waypoints {
        let local = shelf.to_shelf_frame(&w.pose.position);
        assert!(local.y < 0.0);
        assert!(!shelf.target_region.contains_point(&local, 0.0));
    }
    assert!("bin_M".parse::<BinId>().is_err());
    let env = WorkspaceEnvelope::for_shelf(&shelf);
    for b in BinId::all() {
        assert!(validate(&plan_percept(&shelf, b, "x"), &shelf, &GripperSpec::default(), &env).is_ok(), "{b}");
    }
}

#[test]
fn free_box_grasped_straight() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.10, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    assert_eq!(
        p.grasp_orientation,
        Some(GraspOrientation {
            pitch_deg: 0.0,
            yaw_deg: 0.0
        })
    );
    assert!((p.expected_finger_opening.unwrap() - 0.06).abs() < 1e-12);
    assert!(p.contact_exclusions.is_empty());
    assert!(p.pretension_wall.is_none());
    p.check().unwrap();
    validated(&w, &p);
}

/// Re-orient every waypoint of `p` to (pitch, yaw) keeping the roll.
fn reoriented(p: &PrimitivePlan, pitch: f64, yaw: f64) -> Vec<Pose6D> {
    let o = p.grasp_orientation.unwrap();
    let undo = (Pose6D::rot_axis(2, o.yaw_deg.to_radians()) * Pose6D::rot_axis(0, o.pitch_deg.to_radians())).inverse();
    p.waypoints
        .iter()
        .map(|w| {
            let roll = undo * w.pose.orientation;
            Pose6D::new(
                w.pose.position,
                Pose6D::rot_axis(2, yaw.to_radians()) * Pose6D::rot_axis(0, pitch.to_radians()) * roll,
            )
        })
        .collect()
}

fn path_collides(p: &PrimitivePlan, poses: &[Pose6D], shelf: &ShelfModel) -> bool {
    let g = GripperSpec::default();
    (0..poses.len() - 1).any(|k| {
        let body = g.body_span(p.waypoints[k].opening, p.waypoints[k + 1].opening);
        swept_collides(&body, &poses[k..k + 2], shelf, &p.contact_exclusions).unwrap().is_some()
    })
}

#[test]
fn deep_box_near_wall_takes_first_clearing_orientation() {
    let mut w = empty_world();
    // Deep enough that the palm enters the bin next to the left wall.
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.02, 0.15);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    let chosen = p.grasp_orientation.unwrap();
    assert_ne!((chosen.pitch_deg, chosen.yaw_deg), (0.0, 0.0));
    assert!(!path_collides(&p, &reoriented(&p, chosen.pitch_deg, chosen.yaw_deg), &w.shelf));
    'scan: for pitch in GRASP_PITCH_SCAN {
        for yaw in GRASP_YAW_SCAN {
            if (pitch, yaw) == (chosen.pitch_deg, chosen.yaw_deg) {
                break 'scan;
            }
            assert!(path_collides(&p, &reoriented(&p, pitch, yaw), &w.shelf), "{pitch} {yaw}");
        }
    }
    validated(&w, &p);
}

#[test]
fn box_flush_to_wall_uses_spatula_pretension() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.005, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    assert_eq!(p.pretension_wall, Some(MemberKind::LeftWall));
    assert!(p.contact_exclusions.contains(&MemberId {
        bin: bin_e(),
        kind: MemberKind::LeftWall
    }));
    let t = validated(&w, &p);
    let (w2, o) = execute(&w, &t, &ExecConfig::default(), 1).unwrap();
    assert!(o.success, "{o:?}");
    assert!(w2.object(id).is_err());

    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.27 - 0.06 - 0.004, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    assert_eq!(p.pretension_wall, Some(MemberKind::RightWall));
    let t = validated(&w, &p);
    assert!(execute(&w, &t, &ExecConfig::default(), 1).unwrap().1.success);
}

#[test]
fn flush_box_in_lateral_bin_excludes_exterior_lip() {
    let mut w = empty_world();
    let bin = BinId::new(3).unwrap();
    let id = place(&mut w, bin, "box6", 0, 2, 0.003, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    assert!(p.contact_exclusions.contains(&MemberId {
        bin,
        kind: MemberKind::ExteriorLip
    }));
    validated(&w, &p);
}

#[test]
fn wide_front_is_not_graspable() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "big", 1, 2, 0.05, 0.02);
    assert!(matches!(
        plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()),
        Err(PrimitiveError::NotGraspable(_))
    ));
}

#[test]
fn scoop_plans() {
    let g = GripperSpec::default();
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "flat", 1, 0, 0.08, 0.03);
    let p = plan_scoop(&estimate_of(&w, id, Vector3::zeros()), &w, &g).unwrap();
    assert!(p.waypoints.len() >= 4);
    for k in [MemberKind::Floor, MemberKind::BottomLip, MemberKind::BackWall] {
        assert!(p.contact_exclusions.contains(&MemberId { bin: bin_e(), kind: k }));
    }
    assert!(p.preload_force.unwrap() <= g.max_force);
    let t = validated(&w, &p);
    let (_, o) = execute(&w, &t, &ExecConfig::default(), 1).unwrap();
    assert!(o.success, "{o:?}");

    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "flat", 1, 0, 0.08, 0.43 - 0.12 - 0.005);
    assert!(matches!(
        plan_scoop(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::NoRoomBehindTarget(_))
    ));

    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "bag", 2, 0, 0.08, 0.02);
    let p = plan_scoop(&estimate_of(&w, id, Vector3::zeros()), &w, &g).unwrap();
    validated(&w, &p);
}

#[test]
fn suction_plans() {
    let g = GripperSpec::default();
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "wide_flat", 1, 0, 0.08, 0.03);
    let p = plan_suction(&estimate_of(&w, id, Vector3::zeros()), &w, &g).unwrap();
    assert!((p.expected_block_height.unwrap() - 0.05).abs() < 1e-9);
    assert_eq!(p.retry_offsets.len(), SUCTION_ATTEMPTS);
    let t = validated(&w, &p);
    let (w2, o) = execute(&w, &t, &ExecConfig::default(), 3).unwrap();
    assert!(o.success);
    assert_eq!(o.suction_attempts, Some(1));
    assert!(w2.object(id).is_err());

    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "duck", 0, 2, 0.08, 0.03);
    assert!(matches!(
        plan_suction(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::NoSuctionFace(_))
    ));

    // 21 cm bin, 19.5 cm item.
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "tall", 0, 2, 0.08, 0.03);
    assert!(matches!(
        plan_suction(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::InsufficientClearance(_))
    ));
}

#[test]
fn suction_with_wrong_height_reports_block_mismatch() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "block8", 1, 0, 0.08, 0.03);
    // True top 0.08; the estimate sits 3 cm too low.
    let est = estimate_of(&w, id, Vector3::new(0.0, 0.0, -0.03));
    let p = plan_suction(&est, &w, &GripperSpec::default()).unwrap();
    let t = validated(&w, &p);
    let (w2, o) = execute(&w, &t, &ExecConfig::default(), 3).unwrap();
    assert!(!o.success);
    assert_eq!(o.feedback, Feedback::BlockHeightMismatch);
    assert!(w2.object(id).is_ok());
}

#[test]
fn unsealed_suction_uses_the_retry_budget() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "wide_flat", 1, 0, 0.08, 0.03);
    let p = plan_suction(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    let t = validated(&w, &p);
    let cfg = ExecConfig {
        seal_probability: 0.0,
        ..ExecConfig::default()
    };
    let (_, o) = execute(&w, &t, &cfg, 3).unwrap();
    assert_eq!(o.feedback, Feedback::NoVacuumSeal);
    assert_eq!(o.suction_attempts, Some(SUCTION_ATTEMPTS));
}

#[test]
fn topple_plans() {
    let g = GripperSpec::default();
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "book", 1, 2, 0.05, 0.02);
    let p = plan_topple(&estimate_of(&w, id, Vector3::zeros()), &w, &g).unwrap();
    let k = p.action_index.unwrap();
    let (lo, _) = w.shelf.bin_bounds(bin_e());
    let push = w.shelf.to_shelf_frame(&p.waypoints[k].pose.position);
    assert!((push.z - lo.z - 0.6 * 0.19).abs() < 1e-9);
    assert!(p.repercept_after);
    let t = validated(&w, &p);
    let (w2, o) = execute(&w, &t, &ExecConfig::default(), 1).unwrap();
    assert!(o.success);
    assert!(o.events.is_empty());
    assert!(w2.object(id).is_ok());
    assert_ne!(w2.object(id).unwrap().resting_face, w.object(id).unwrap().resting_face);

    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "soft_book", 1, 2, 0.05, 0.02);
    assert!(matches!(
        plan_topple(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::NotToppleable(_))
    ));
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "cube", 0, 2, 0.05, 0.02);
    assert!(matches!(
        plan_topple(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::NotToppleable(_))
    ));
}

#[test]
fn push_rotate_plans() {
    let g = GripperSpec::default();
    let mut w = empty_world();
    // 0.09 x 0.20 footprint, long side to the front.
    let id = place(&mut w, bin_e(), "slab", 2, 0, 0.03, 0.02);
    let p = plan_push_rotate(&estimate_of(&w, id, Vector3::zeros()), &w, &g).unwrap();
    assert!(p.repercept_after);
    let t = validated(&w, &p);
    let (w2, o) = execute(&w, &t, &ExecConfig::default(), 1).unwrap();
    assert!(o.success, "{o:?}");
    assert!(o.events.is_empty());
    let after = crate::world::classify_pose_type(&w2, id, &g).unwrap();
    assert_ne!(after, PoseType::NoFrontGraspAxis);

    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "slab", 1, 0, 0.05, 0.02);
    assert!(matches!(
        plan_push_rotate(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::NoBeneficialRotation(_))
    ));
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "big", 1, 0, 0.05, 0.02);
    assert!(matches!(
        plan_push_rotate(&estimate_of(&w, id, Vector3::zeros()), &w, &g),
        Err(PrimitiveError::NoBeneficialRotation(_))
    ));
}

#[test]
fn grasp_tolerates_small_perception_error() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.10, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::new(0.002, 0.0, 0.0)), &w, &GripperSpec::default()).unwrap();
    let (w2, o) = execute(&w, &validated(&w, &p), &ExecConfig::default(), 1).unwrap();
    assert!(o.success);
    assert_eq!(o.feedback, Feedback::Ok);
    assert!(matches!(o.events[0], Event::Pick { clutter: 1, target: true, .. }));
    assert_eq!(w2.clutter(bin_e()), 0);
}

#[test]
fn grasp_far_off_fails_with_feedback() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.10, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::new(0.05, 0.0, 0.0)), &w, &GripperSpec::default()).unwrap();
    let (w2, o) = execute(&w, &validated(&w, &p), &ExecConfig::default(), 1).unwrap();
    assert!(!o.success);
    assert_ne!(o.feedback, Feedback::Ok);
    assert!(o.events.is_empty());
    assert_eq!(w2.objects, w.objects);
}

#[test]
fn fragile_grasp_damages() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "cups", 0, 2, 0.10, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    let (_, o) = execute(&w, &validated(&w, &p), &ExecConfig::default(), 1).unwrap();
    assert!(o.success);
    assert!(o.events.iter().any(|e| matches!(e, Event::Damage { .. })));
}

#[test]
fn timing_only_trajectories_are_refused() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.10, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    let t = time_parameterize(&p, 1.0).unwrap();
    assert!(matches!(
        execute(&w, &t, &ExecConfig::default(), 1),
        Err(PrimitiveError::UnvalidatedPlan)
    ));
}

#[test]
fn execution_leaves_other_bins_alone() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.10, 0.02);
    let other = BinId::new(7).unwrap();
    place(&mut w, other, "box6", 0, 2, 0.10, 0.02);
    place(&mut w, other, "flat", 1, 0, 0.10, 0.12);
    let before: Vec<_> = w.objects_in(other).cloned().collect();
    let est = estimate_of(&w, id, Vector3::zeros());
    for kind in [PrimitiveKind::Grasp, PrimitiveKind::Suction, PrimitiveKind::Topple, PrimitiveKind::PushRotate] {
        let Ok(p) = plan_primitive(kind, &est, &w, &GripperSpec::default()) else { continue };
        let (w2, _) = execute(&w, &validated(&w, &p), &ExecConfig::default(), 2).unwrap();
        let after: Vec<_> = w2.objects_in(other).cloned().collect();
        assert_eq!(before, after, "{kind:?}");
    }
}

#[test]
fn plan_json_roundtrips() {
    let mut w = empty_world();
    let id = place(&mut w, bin_e(), "box6", 0, 2, 0.10, 0.02);
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    let back: PrimitivePlan = serde_json::from_str(&p.to_json()).unwrap();
    assert_eq!(back.kind, p.kind);
    assert_eq!(back.waypoints.len(), p.waypoints.len());
    assert_eq!(back.contact_exclusions, p.contact_exclusions);
    assert_eq!(back.expected_finger_opening, p.expected_finger_opening);
    let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
    assert_eq!(v["kind"], "grasp");
}

#[test]
fn yawed_estimate_still_plans() {
    let mut w = empty_world();
    let (lo, _) = w.shelf.bin_bounds(bin_e());
    let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.1) * axis_aligned_rotation(0, 2);
    let id = w
        .insert("box6", bin_e(), Pose6D::new(lo + Vector3::new(0.13, 0.06, 0.05), q))
        .unwrap();
    let p = plan_grasp(&estimate_of(&w, id, Vector3::zeros()), &w, &GripperSpec::default()).unwrap();
    validated(&w, &p);
}
