#![allow(dead_code)]

use std::collections::BTreeMap;

use apcsim::catalog::{Catalog, GripperSpec};
use apcsim::geometry::{BinId, ContactSet, Obb, Pose6D, ShelfModel};
use apcsim::perception::{HypothesisItem, SceneEstimate, SceneHypothesis};
use apcsim::primitives::Waypoint;
use apcsim::world::{spawn, PlacementHint, ScenarioSpec, WorldState};
use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random bin holding one to three catalog items, or `None` when the
/// sampled contents do not fit.
pub fn random_world(rng: &mut ChaCha8Rng, catalog: &Catalog) -> Option<(WorldState, BinId, String)> {
    let bin = BinId::new(rng.random_range(0..12)).unwrap();
    let n = rng.random_range(1..=3);
    let skus: Vec<String> = catalog.items().choose_multiple(rng, n).map(|i| i.sku.clone()).collect();
    let target = skus.choose(rng).unwrap().clone();
    let mut placements = Vec::new();
    if n == 1 && rng.random_bool(0.5) {
        // Push some lone items against a wall or to the back.
        placements.push(PlacementHint {
            bin,
            item: target.clone(),
            up_axis: None,
            lateral_axis: None,
            x: Some(rng.random_range(0.0..0.04)),
            y: Some(rng.random_range(0.0..0.2)),
        });
    }
    // A neighbour bin that must never change.
    let other = BinId::new((bin.index() + 1 + rng.random_range(0..11)) % 12).unwrap();
    let neighbour = catalog.items().choose(rng).unwrap().sku.clone();
    let spec = ScenarioSpec {
        bin_contents: BTreeMap::from([(bin, skus), (other, vec![neighbour])]),
        work_order: vec![apcsim::world::WorkOrderEntry {
            bin,
            item: target.clone(),
        }],
        bonus: BTreeMap::new(),
        shelf: None,
        placements,
    };
    let world = spawn(&spec, catalog, rng.random()).ok()?;
    Some((world, bin, target))
}

/// Estimate built straight from ground truth, optionally shifted.
pub fn estimate_from_truth(world: &WorldState, bin: BinId, target: &str, error: Pose6D) -> SceneEstimate {
    let items: Vec<HypothesisItem> = world
        .objects_in(bin)
        .map(|o| {
            let pose = if o.sku == target { o.pose.compose(&error) } else { o.pose };
            HypothesisItem {
                sku: o.sku.clone(),
                pose,
            }
        })
        .collect();
    let target_choice = items.iter().position(|i| i.sku == target).unwrap();
    SceneEstimate {
        bin,
        target: target.to_string(),
        best: SceneHypothesis { items, score: 0.0 },
        target_choice,
        shots_used: 10,
        per_camera_counts: BTreeMap::new(),
        shots: Vec::new(),
    }
}

pub fn small_error(rng: &mut ChaCha8Rng, t: f64, r_deg: f64) -> Pose6D {
    let d = Vector3::new(rng.random_range(-t..=t), rng.random_range(-t..=t), rng.random_range(-t..=t));
    let a = Vector3::new(
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
        rng.random_range(-1.0..=1.0),
    );
    let rot = UnitQuaternion::from_scaled_axis(a.normalize() * rng.random_range(0.0..=r_deg).to_radians());
    Pose6D::new(d, rot)
}

/// Separating-axis test written out independently of the library.
pub fn boxes_overlap(a: &Obb, b: &Obb) -> bool {
    let ra = a.center.rotation_matrix();
    let rb = b.center.rotation_matrix();
    let d = b.center.position - a.center.position;
    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
    for i in 0..3 {
        axes.push(ra.column(i).into());
        axes.push(rb.column(i).into());
    }
    for i in 0..3 {
        for j in 0..3 {
            let c: Vector3<f64> = ra.column(i).cross(&rb.column(j));
            if c.norm() > 1e-9 {
                axes.push(c.normalize());
            }
        }
    }
    let radius = |r: &nalgebra::Matrix3<f64>, h: &Vector3<f64>, axis: &Vector3<f64>| -> f64 {
        (0..3).map(|i| h[i] * r.column(i).dot(axis).abs()).sum()
    };
    axes.iter().all(|ax| {
        d.dot(ax).abs() <= radius(&ra, &a.half_extents, ax) + radius(&rb, &b.half_extents, ax) + 1e-12
    })
}

/// First segment whose end-effector body, sampled every millimetre (and
/// every few milliradians of rotation), touches a non-excluded shelf member.
pub fn dense_first_hit(
    waypoints: &[Waypoint],
    exclusions: &ContactSet,
    shelf: &ShelfModel,
    gripper: &GripperSpec,
) -> Option<usize> {
    let members: Vec<(apcsim::geometry::MemberId, Obb)> = shelf
        .members_world()
        .into_iter()
        .filter(|(id, _)| !exclusions.contains(id))
        .collect();
    for (s, w) in waypoints.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let dist = a.pose.translation_distance(&b.pose);
        let ang = a.pose.rotation_distance(&b.pose);
        let travel = dist + ang * 0.3 + (a.opening - b.opening).abs();
        let n = ((travel / 0.001).ceil() as usize).max(1);
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let pose = a.pose.interpolate(&b.pose, t);
            let opening = a.opening + (b.opening - a.opening) * t;
            for part in gripper.body(opening) {
                let world = part.transformed(&pose);
                let r = world.half_extents.norm();
                let near = |m: &Obb| (m.center.position - world.center.position).norm() <= r + m.half_extents.norm();
                if members.iter().any(|(_, m)| near(m) && boxes_overlap(&world, m)) {
                    return Some(s);
                }
            }
        }
    }
    None
}
