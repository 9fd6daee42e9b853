//! Ground-truth simulation state and the discrete transitions primitives
//! induce on it.

mod pose_type;
mod scenario;
mod transitions;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, ItemSpec};
use crate::geometry::{BinId, GeometryError, Obb, Pose6D, ShelfModel};

pub use pose_type::{
    classify_pose, classify_pose_type, front_width, PoseType, FLAT_LOW_HEIGHT, TALL_FACE_RATIO,
    WALL_GAP,
};
pub use scenario::{
    generate_scenario, spawn, GenConstraints, PlacementHint, ScenarioSpec, SizeClass,
    WorkOrderEntry, MAX_PLACEMENT_ATTEMPTS,
};
pub use transitions::{
    apply_push_rotate, apply_topple, remove_object, topple_pose, toppleable, RotateResult,
    DROP_PENALTY_HEIGHT,
};

/// Slack allowed between an object and its bin interior.
pub const CONTAINMENT_TOLERANCE: f64 = 0.005;
/// Largest interpenetration tolerated between two objects.
pub const PENETRATION_TOLERANCE: f64 = 0.001;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("unknown instance {0}")]
    UnknownInstance(InstanceId),
    #[error("could not place the contents of {bin} after {attempts} attempts")]
    PlacementInfeasible { bin: BinId, attempts: usize },
    #[error("sku {sku:?} appears more than once in {bin}")]
    RepeatedSku { bin: BinId, sku: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj_{}", self.0)
    }
}

/// Local box face identified by axis and outward sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub sign: i8,
}

impl Face {
    pub fn local_normal(self) -> Vector3<f64> {
        let mut n = Vector3::zeros();
        n[self.axis] = f64::from(self.sign);
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: InstanceId,
    pub sku: String,
    /// Box center in the world frame.
    pub pose: Pose6D,
    pub resting_face: Face,
    pub bin: BinId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalKind {
    Picked,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub id: InstanceId,
    pub sku: String,
    pub bin: BinId,
    pub outcome: RemovalKind,
    pub clock: f64,
}

/// Immutable world value; transitions return new states.
#[derive(Debug, Clone, Serialize)]
pub struct WorldState {
    pub shelf: ShelfModel,
    pub objects: BTreeMap<InstanceId, ObjectInstance>,
    pub removed: Vec<Removal>,
    pub clock: f64,
    #[serde(skip)]
    catalog: Arc<Catalog>,
}

impl WorldState {
    pub fn new(shelf: ShelfModel, catalog: Arc<Catalog>) -> WorldState {
        WorldState {
            shelf,
            objects: BTreeMap::new(),
            removed: Vec::new(),
            clock: 0.0,
            catalog,
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> Arc<Catalog> {
        self.catalog.clone()
    }

    pub fn object(&self, id: InstanceId) -> Result<&ObjectInstance, WorldError> {
        self.objects.get(&id).ok_or(WorldError::UnknownInstance(id))
    }

    pub fn item(&self, id: InstanceId) -> Result<&ItemSpec, WorldError> {
        let o = self.object(id)?;
        Ok(self.catalog.get(&o.sku)?)
    }

    /// Insert an object, allocating the next free instance id.
    pub fn insert(&mut self, sku: &str, bin: BinId, pose: Pose6D) -> Result<InstanceId, WorldError> {
        self.catalog.get(sku)?;
        let id = InstanceId(
            self.objects
                .keys()
                .chain(self.removed.iter().map(|r| &r.id))
                .map(|i| i.0 + 1)
                .max()
                .unwrap_or(0),
        );
        let resting_face = resting_face_of(&self.shelf.world_pose.inverse().compose(&pose));
        self.objects.insert(
            id,
            ObjectInstance {
                id,
                sku: sku.to_string(),
                pose,
                resting_face,
                bin,
            },
        );
        Ok(id)
    }

    pub fn objects_in(&self, bin: BinId) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values().filter(move |o| o.bin == bin)
    }

    pub fn clutter(&self, bin: BinId) -> usize {
        self.objects_in(bin).count()
    }

    pub fn find(&self, bin: BinId, sku: &str) -> Vec<InstanceId> {
        self.objects_in(bin).filter(|o| o.sku == sku).map(|o| o.id).collect()
    }

    pub fn skus_in(&self, bin: BinId) -> Vec<String> {
        self.objects_in(bin).map(|o| o.sku.clone()).collect()
    }

    /// Object box in the world frame.
    pub fn obb(&self, id: InstanceId) -> Result<Obb, WorldError> {
        let o = self.object(id)?;
        Ok(self.catalog.get(&o.sku)?.obb_at(o.pose))
    }

    /// Object pose expressed in the shelf frame.
    pub fn shelf_pose(&self, id: InstanceId) -> Result<Pose6D, WorldError> {
        Ok(self.shelf.world_pose.inverse().compose(&self.object(id)?.pose))
    }

    pub fn shelf_obb(&self, id: InstanceId) -> Result<Obb, WorldError> {
        let item = self.item(id)?;
        Ok(item.obb_at(self.shelf_pose(id)?))
    }

    pub fn advance_clock(&mut self, dt: f64) {
        self.clock += dt.max(0.0);
    }

    /// Objects whose boxes interpenetrate by more than the tolerance.
    pub fn interpenetrating_pairs(&self) -> Vec<(InstanceId, InstanceId)> {
        let boxes: Vec<(InstanceId, BinId, Obb)> = self
            .objects
            .values()
            .filter_map(|o| {
                let b = self.catalog.get(&o.sku).ok()?.obb_at(o.pose);
                Some((o.id, o.bin, shrink(&b, PENETRATION_TOLERANCE * 0.5)))
            })
            .collect();
        let mut out = Vec::new();
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                if a.1 == b.1 && a.2.intersects(&b.2) {
                    out.push((a.0, b.0));
                }
            }
        }
        out
    }

    /// Whether the object lies inside its bin interior (with tolerance).
    pub fn is_contained(&self, id: InstanceId) -> Result<bool, WorldError> {
        let o = self.object(id)?;
        let b = self.shelf_obb(id)?;
        Ok(box_in_bin(&self.shelf, o.bin, &b, CONTAINMENT_TOLERANCE))
    }
}

fn shrink(b: &Obb, d: f64) -> Obb {
    let mut s = b.clone();
    s.half_extents = s.half_extents.map(|h| (h - d).max(1e-6));
    s
}

/// Whether a shelf-frame box fits inside the bin interior grown by `tol`.
pub fn box_in_bin(shelf: &ShelfModel, bin: BinId, shelf_box: &Obb, tol: f64) -> bool {
    let (lo, hi) = shelf.bin_bounds(bin);
    let (blo, bhi) = shelf_box.aabb();
    (0..3).all(|i| blo[i] >= lo[i] - tol - 1e-12 && bhi[i] <= hi[i] + tol + 1e-12)
}

/// Which local face points down for a shelf-frame pose.
pub fn resting_face_of(shelf_pose: &Pose6D) -> Face {
    let r = shelf_pose.rotation_matrix();
    let (mut best, mut best_dot) = (Face { axis: 0, sign: 1 }, f64::NEG_INFINITY);
    for axis in 0..3 {
        for sign in [-1i8, 1] {
            let d = -(r.column(axis) * f64::from(sign)).z;
            if d > best_dot + 1e-12 {
                best_dot = d;
                best = Face { axis, sign };
            }
        }
    }
    best
}

/// Rotation mapping local `lateral` to shelf `+x`, local `up` to `+z` and the
/// remaining local axis to `±y`.
pub fn axis_aligned_rotation(lateral: usize, up: usize) -> UnitQuaternion<f64> {
    assert!(lateral < 3 && up < 3 && lateral != up);
    let depth = 3 - lateral - up;
    let mut m = Matrix3::zeros();
    m.set_column(lateral, &Vector3::x());
    m.set_column(up, &Vector3::z());
    m.set_column(depth, &Vector3::y());
    if m.determinant() < 0.0 {
        m.set_column(depth, &-Vector3::y());
    }
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Extent of a shelf-frame box along each shelf axis.
pub fn extents(b: &Obb) -> Vector3<f64> {
    b.aabb_half_extents() * 2.0
}

/// Local axis of the box most aligned with a shelf direction.
pub fn local_axis_along(pose: &Pose6D, dir: &Vector3<f64>) -> usize {
    let r = pose.rotation_matrix();
    (0..3)
        .max_by(|&a, &b| r.column(a).dot(dir).abs().total_cmp(&r.column(b).dot(dir).abs()))
        .expect("three axes")
}
