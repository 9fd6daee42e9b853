//! Item catalog, gripper profile and the applicability predicates that
//! follow from gripper limits.
//!
//! Items are cuboids. Catalog dimensions are estimates shipped as data; the
//! simulator only relies on how they compare with bin and gripper sizes.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Obb, Pose6D};

pub const DEFAULT_GRASP_MARGIN: f64 = 0.005;
/// Angular tolerance for calling a face horizontal or vertical.
pub const SUCTION_FACE_TOLERANCE_DEG: f64 = 10.0;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    ParseError(String),
    #[error("duplicate sku {0:?}")]
    DuplicateSku(String),
    #[error("invalid item {sku:?}: {reason}")]
    InvalidItem { sku: String, reason: &'static str },
    #[error("unknown sku {0:?}")]
    UnknownSku(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub sku: String,
    /// Box dimensions in meters, ascending; dims[i] is the extent along the
    /// item's local axis i.
    pub dims: [f64; 3],
    pub mass: f64,
    #[serde(default)]
    pub deformable: bool,
    #[serde(default)]
    pub reflective_packaging: bool,
    #[serde(default)]
    pub suction_sealable: bool,
    #[serde(default)]
    pub bonus_points: u32,
    #[serde(default)]
    pub damage_fragile: bool,
    #[serde(default)]
    pub furry: bool,
    #[serde(default)]
    pub bagged: bool,
}

impl ItemSpec {
    pub fn validate(&self) -> Result<(), CatalogError> {
        let bad = |reason| CatalogError::InvalidItem {
            sku: self.sku.clone(),
            reason,
        };
        if self.sku.is_empty() {
            return Err(bad("empty sku"));
        }
        if !self.dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(bad("dims must be positive"));
        }
        if !(self.dims[0] <= self.dims[1] && self.dims[1] <= self.dims[2]) {
            return Err(bad("dims must be ascending"));
        }
        if self.suction_sealable && (self.furry || self.bagged) {
            return Err(bad("furry or bagged items cannot be suction sealable"));
        }
        Ok(())
    }

    pub fn dims_vec(&self) -> Vector3<f64> {
        Vector3::from(self.dims)
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        self.dims_vec() * 0.5
    }

    /// Dimensions the fingers see; compliant items squeeze by 10 %.
    pub fn grasp_dims(&self) -> Vector3<f64> {
        if self.deformable {
            self.dims_vec() * 0.9
        } else {
            self.dims_vec()
        }
    }

    pub fn obb_at(&self, pose: Pose6D) -> Obb {
        Obb::new(pose, self.half_extents()).expect("validated dims")
    }
}

/// Immutable, SKU-indexed item table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    items: Vec<ItemSpec>,
    index: BTreeMap<String, usize>,
}

impl Catalog {
    pub fn new(items: Vec<ItemSpec>) -> Result<Catalog, CatalogError> {
        let mut index = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            it.validate()?;
            if index.insert(it.sku.clone(), i).is_some() {
                return Err(CatalogError::DuplicateSku(it.sku.clone()));
            }
        }
        Ok(Catalog { items, index })
    }

    pub fn from_json(text: &str) -> Result<Catalog, CatalogError> {
        if text.trim().is_empty() {
            return Ok(Catalog::default());
        }
        let items: Vec<ItemSpec> =
            serde_json::from_str(text).map_err(|e| CatalogError::ParseError(e.to_string()))?;
        Catalog::new(items)
    }

    /// The 25-item catalog bundled with the crate.
    pub fn bundled() -> Catalog {
        Catalog::from_json(crate::data::CATALOG_JSON).expect("bundled catalog is valid")
    }

    pub fn get(&self, sku: &str) -> Result<&ItemSpec, CatalogError> {
        self.index
            .get(sku)
            .map(|&i| &self.items[i])
            .ok_or_else(|| CatalogError::UnknownSku(sku.to_string()))
    }

    pub fn contains(&self, sku: &str) -> bool {
        self.index.contains_key(sku)
    }

    pub fn items(&self) -> &[ItemSpec] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn with_bonus(&self, bonus: &BTreeMap<String, u32>) -> Result<Catalog, CatalogError> {
        let mut items = self.items.clone();
        for (sku, pts) in bonus {
            let i = *self
                .index
                .get(sku)
                .ok_or_else(|| CatalogError::UnknownSku(sku.clone()))?;
            items[i].bonus_points = *pts;
        }
        Catalog::new(items)
    }
}

/// Load a catalog file; an empty file is an empty catalog.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<ItemSpec>, CatalogError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| CatalogError::ParseError(format!("{}: {e}", path.as_ref().display())))?;
    Ok(Catalog::from_json(&text)?.items)
}

/// Parallel-jaw gripper with flat fingers, spatula and suction cup.
///
/// End-effector frame: origin at the midpoint between the fingertips, `+y`
/// along the approach direction, `x` along the jaw closing axis, `z` up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperSpec {
    pub max_opening: f64,
    pub max_force: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub finger_height: f64,
    /// Palm half-extents in the end-effector frame.
    pub palm_half: [f64; 3],
    pub cup_length: f64,
    pub cup_radius: f64,
    /// Width of the spatula blade on the left (`-x`) finger.
    pub spatula_width: f64,
    pub spatula_finger: bool,
    pub suction_finger: bool,
}

impl Default for GripperSpec {
    fn default() -> Self {
        GripperSpec {
            max_opening: 0.110,
            max_force: 70.0,
            finger_length: 0.12,
            finger_thickness: 0.005,
            finger_height: 0.04,
            palm_half: [0.06, 0.03, 0.03],
            cup_length: 0.02,
            cup_radius: 0.01,
            spatula_width: 0.06,
            spatula_finger: true,
            suction_finger: true,
        }
    }
}

impl GripperSpec {
    pub fn finger_x(&self, opening: f64) -> f64 {
        opening * 0.5 + self.finger_thickness * 0.5
    }

    /// Suction cup tip in the end-effector frame. The cup sits on the outer
    /// face of the right (`+x`) finger and points along `+x`.
    pub fn cup_tip(&self, opening: f64) -> Vector3<f64> {
        Vector3::new(
            opening * 0.5 + self.finger_thickness + self.cup_length,
            -(self.cup_radius + 0.005),
            0.0,
        )
    }

    /// Collision body in the end-effector frame at the given jaw opening.
    pub fn body(&self, opening: f64) -> Vec<Obb> {
        self.body_span(opening, opening)
    }

    /// Body covering every opening between `a` and `b`, for segments during
    /// which the jaws move.
    pub fn body_span(&self, a: f64, b: f64) -> Vec<Obb> {
        let lo = a.min(b).clamp(0.0, self.max_opening);
        let o = a.max(b).clamp(0.0, self.max_opening);
        let fl = self.finger_length;
        // Each finger spans from its innermost to its outermost position.
        let inner = lo * 0.5;
        let outer = o * 0.5 + self.finger_thickness;
        let finger_half = Vector3::new((outer - inner) * 0.5, fl * 0.5, self.finger_height * 0.5);
        let fx = (inner + outer) * 0.5;
        let mut body = vec![
            Obb::new(Pose6D::from_translation(-fx, -fl * 0.5, 0.0), finger_half).expect("finger"),
            Obb::new(Pose6D::from_translation(fx, -fl * 0.5, 0.0), finger_half).expect("finger"),
            Obb::new(
                Pose6D::from_translation(0.0, -fl - self.palm_half[1], 0.0),
                Vector3::from(self.palm_half),
            )
            .expect("palm"),
        ];
        if self.suction_finger {
            let tip = self.cup_tip(o);
            body.push(
                Obb::new(
                    Pose6D::from_translation(tip.x - self.cup_length * 0.5, tip.y, 0.0),
                    Vector3::new(self.cup_length * 0.5, self.cup_radius, self.cup_radius),
                )
                .expect("cup"),
            );
        }
        body
    }

    /// Cross-section of the body perpendicular to the approach axis.
    pub fn cross_section(&self, opening: f64) -> (f64, f64) {
        let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
        for b in self.body(opening) {
            let (a, c) = b.aabb();
            lo = lo.inf(&a);
            hi = hi.sup(&c);
        }
        (hi.x - lo.x, hi.z - lo.z)
    }

    /// Whether the body passes an opening of `width × height` with either
    /// the jaws horizontal or rolled 90°.
    pub fn fits_opening(&self, width: f64, height: f64) -> bool {
        let (w, h) = self.cross_section(self.max_opening);
        (w <= width && h <= height) || (h <= width && w <= height)
    }
}

/// Item axes that fit between the jaws with `margin` to spare.
pub fn graspable_axes(item: &ItemSpec, gripper: &GripperSpec, margin: f64) -> Vec<usize> {
    (0..3)
        .filter(|&i| item.dims[i] + margin <= gripper.max_opening + 1e-12)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceTag {
    HorizontalUp,
    VerticalFront,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuctionFace {
    /// Local axis of the face normal and its sign.
    pub axis: usize,
    pub sign: i8,
    pub tag: FaceTag,
    pub normal: Vector3<f64>,
    pub center: Vector3<f64>,
    /// Face side lengths (the two remaining dims, ascending).
    pub size: [f64; 2],
}

/// Candidate suction faces with the shelf front facing `-y`.
pub fn suction_candidate_faces(item: &ItemSpec, pose: &Pose6D) -> Vec<SuctionFace> {
    suction_candidate_faces_facing(item, pose, &-Vector3::y())
}

pub fn suction_candidate_faces_facing(
    item: &ItemSpec,
    pose: &Pose6D,
    front_normal: &Vector3<f64>,
) -> Vec<SuctionFace> {
    if !item.suction_sealable {
        return Vec::new();
    }
    let cos_tol = SUCTION_FACE_TOLERANCE_DEG.to_radians().cos();
    let r = pose.rotation_matrix();
    let mut out = Vec::new();
    for axis in 0..3 {
        for sign in [1i8, -1] {
            let normal = r.column(axis) * f64::from(sign);
            let tag = if normal.dot(&Vector3::z()) >= cos_tol {
                FaceTag::HorizontalUp
            } else if normal.dot(front_normal) >= cos_tol {
                FaceTag::VerticalFront
            } else {
                continue;
            };
            let center = pose.position + normal * (item.dims[axis] * 0.5);
            let mut size = [item.dims[(axis + 1) % 3], item.dims[(axis + 2) % 3]];
            size.sort_by(f64::total_cmp);
            out.push(SuctionFace {
                axis,
                sign,
                tag,
                normal: normal.into_owned(),
                center,
                size,
            });
        }
    }
    out
}
