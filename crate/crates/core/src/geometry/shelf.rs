//! The 12-bin pod: per-bin openings, construction members and lips.
//!
//! Shelf frame: `x` runs left to right across the face, `y` runs from the
//! open front (`y = 0`) toward the back, `z` is up with `z = 0` at the bottom
//! of the 1.0 × 0.87 × 0.43 m target region.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GeometryError, Obb, Pose6D};

pub const REGION_WIDTH: f64 = 0.87;
pub const REGION_DEPTH: f64 = 0.43;
pub const REGION_HEIGHT: f64 = 1.0;

pub const MIN_OPENING_HEIGHT: f64 = 0.19;
pub const MAX_OPENING_HEIGHT: f64 = 0.22;
pub const MIN_OPENING_WIDTH: f64 = 0.25;
pub const MAX_OPENING_WIDTH: f64 = 0.30;

pub const DEFAULT_LIP_PROTRUSION: f64 = 0.01;
pub const DEFAULT_LIP_THICKNESS: f64 = 0.005;
pub const BACK_PANEL_THICKNESS: f64 = 0.01;

/// One of the twelve bins, `bin_A` … `bin_L`, row-major from the top left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinId(u8);

impl BinId {
    pub const COUNT: usize = 12;

    pub fn new(index: usize) -> Option<BinId> {
        (index < Self::COUNT).then_some(BinId(index as u8))
    }

    pub fn all() -> impl Iterator<Item = BinId> {
        (0..Self::COUNT as u8).map(BinId)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Row 0 is the top row.
    pub fn row(self) -> usize {
        self.index() / 3
    }

    /// Column 0 is the left column.
    pub fn column(self) -> usize {
        self.index() % 3
    }

    pub fn is_lateral(self) -> bool {
        self.column() != 1
    }

    pub fn letter(self) -> char {
        (b'A' + self.0) as char
    }
}

impl fmt::Display for BinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bin_{}", self.letter())
    }
}

impl FromStr for BinId {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::UnknownBin(s.to_string());
        let rest = s.strip_prefix("bin_").ok_or_else(bad)?;
        let mut chars = rest.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(bad());
        };
        if !c.is_ascii_uppercase() {
            return Err(bad());
        }
        BinId::new((c as u8 - b'A') as usize).ok_or_else(bad)
    }
}

impl Serialize for BinId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BinId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipSpec {
    /// How far the bottom lip rises above the bin floor.
    #[serde(default = "default_protrusion")]
    pub bottom: f64,
    /// How far the top lip hangs below the bin ceiling.
    #[serde(default = "default_protrusion")]
    pub top: f64,
    /// Width of the exterior lateral lip; only lateral bins may have one.
    #[serde(default)]
    pub exterior: Option<f64>,
    /// Lip material thickness along the approach direction.
    #[serde(default = "default_thickness")]
    pub thickness: f64,
}

fn default_protrusion() -> f64 {
    DEFAULT_LIP_PROTRUSION
}

fn default_thickness() -> f64 {
    DEFAULT_LIP_THICKNESS
}

impl LipSpec {
    pub fn default_for(bin: BinId) -> LipSpec {
        LipSpec {
            bottom: DEFAULT_LIP_PROTRUSION,
            top: DEFAULT_LIP_PROTRUSION,
            exterior: bin.is_lateral().then_some(DEFAULT_LIP_PROTRUSION),
            thickness: DEFAULT_LIP_THICKNESS,
        }
    }
}

/// One row of the shelf spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub id: BinId,
    pub w: f64,
    pub h: f64,
    pub d: f64,
    #[serde(default)]
    pub lips: Option<LipSpec>,
}

/// Shelf spec file: per-bin dimension table plus the shelf's world pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfSpec {
    pub bins: Vec<BinSpec>,
    #[serde(default)]
    pub world_pose: Pose6D,
}

impl ShelfSpec {
    /// Every bin 0.27 m wide, 0.21 m tall, 0.43 m deep, default lips.
    pub fn nominal() -> ShelfSpec {
        Self::uniform(0.27, 0.21)
    }

    pub fn uniform(w: f64, h: f64) -> ShelfSpec {
        ShelfSpec {
            bins: BinId::all()
                .map(|id| BinSpec {
                    id,
                    w,
                    h,
                    d: REGION_DEPTH,
                    lips: None,
                })
                .collect(),
            world_pose: Pose6D::identity(),
        }
    }

    pub fn from_json(s: &str) -> Result<ShelfSpec, GeometryError> {
        serde_json::from_str(s).map_err(|e| GeometryError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGeom {
    pub bin_id: BinId,
    pub opening_width: f64,
    pub opening_height: f64,
    pub depth: f64,
    pub lips: LipSpec,
    /// Interior lower corner in shelf frame (left, front, floor).
    pub origin: Vector3<f64>,
    /// Thickness of the side walls of this bin's row.
    pub wall_thickness: f64,
    /// Vertical distance from this bin's ceiling to the floor of the bin above.
    pub ceiling_thickness: f64,
    /// Thickness of the board below this bin.
    pub floor_thickness: f64,
}

impl BinGeom {
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let max = self.origin + Vector3::new(self.opening_width, self.depth, self.opening_height);
        (self.origin, max)
    }

    pub fn floor_z(&self) -> f64 {
        self.origin.z
    }

    pub fn ceiling_z(&self) -> f64 {
        self.origin.z + self.opening_height
    }

    pub fn center_x(&self) -> f64 {
        self.origin.x + self.opening_width * 0.5
    }

    pub fn has_exterior_lip(&self) -> bool {
        self.lips.exterior.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberKind {
    Floor,
    Ceiling,
    LeftWall,
    RightWall,
    BackWall,
    BottomLip,
    TopLip,
    ExteriorLip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemberId {
    pub bin: BinId,
    pub kind: MemberKind,
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:?}", self.bin, self.kind)
    }
}

/// Shelf members deliberately allowed to touch the end effector.
pub type ContactSet = BTreeSet<MemberId>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfMember {
    pub id: MemberId,
    /// Box in shelf frame.
    pub local: Obb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShelfModel {
    pub bins: Vec<BinGeom>,
    pub members: Vec<ShelfMember>,
    pub target_region: Obb,
    pub world_pose: Pose6D,
    pub metallic_base_plane: f64,
}

fn check_range(bin: BinId, what: &'static str, v: f64, lo: f64, hi: f64) -> Result<(), GeometryError> {
    // Inclusive bounds with a hair of slack for decimal literals.
    if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
        return Err(GeometryError::DimensionOutOfRange {
            bin,
            what,
            value: v,
            min: lo,
            max: hi,
        });
    }
    Ok(())
}

/// Build the shelf model from a per-bin dimension table.
pub fn build_shelf(spec: &ShelfSpec, world_pose: Pose6D) -> Result<ShelfModel, GeometryError> {
    let mut rows: [[Option<&BinSpec>; 3]; 4] = Default::default();
    for b in &spec.bins {
        let slot = &mut rows[b.id.row()][b.id.column()];
        if slot.is_some() {
            return Err(GeometryError::DuplicateBin(b.id));
        }
        check_range(b.id, "height", b.h, MIN_OPENING_HEIGHT, MAX_OPENING_HEIGHT)?;
        check_range(b.id, "width", b.w, MIN_OPENING_WIDTH, MAX_OPENING_WIDTH)?;
        if !(b.d > 0.0 && b.d <= REGION_DEPTH + 1e-12) {
            return Err(GeometryError::DimensionOutOfRange {
                bin: b.id,
                what: "depth",
                value: b.d,
                min: 0.0,
                max: REGION_DEPTH,
            });
        }
        if let Some(l) = &b.lips {
            if l.exterior.is_some() && !b.id.is_lateral() {
                return Err(GeometryError::InvalidLip(b.id));
            }
            if l.bottom < 0.0 || l.top < 0.0 || l.thickness <= 0.0 || l.bottom + l.top >= b.h {
                return Err(GeometryError::InvalidLip(b.id));
            }
        }
        *slot = Some(b);
    }
    let mut grid = [[None::<&BinSpec>; 3]; 4];
    for (r, row) in rows.iter().enumerate() {
        for (c, slot) in row.iter().enumerate() {
            grid[r][c] = Some(slot.ok_or(GeometryError::MissingBin(
                BinId::new(r * 3 + c).expect("grid index"),
            ))?);
        }
    }

    let row_heights: Vec<f64> = grid
        .iter()
        .map(|row| row.iter().map(|b| b.unwrap().h).fold(0.0, f64::max))
        .collect();
    let board = (REGION_HEIGHT - row_heights.iter().sum::<f64>()) / 5.0;
    if board <= 0.0 {
        return Err(GeometryError::LayoutOverflow { row: None });
    }
    // Floors, bottom row first.
    let mut floors = [0.0; 4];
    let mut z = board;
    for r in (0..4).rev() {
        floors[r] = z;
        z += row_heights[r] + board;
    }

    let mut bins = Vec::with_capacity(12);
    let mut members = Vec::new();
    for (r, row) in grid.iter().enumerate() {
        let widths: f64 = row.iter().map(|b| b.unwrap().w).sum();
        let wall = (REGION_WIDTH - widths) / 4.0;
        if wall <= 0.0 {
            return Err(GeometryError::LayoutOverflow { row: Some(r) });
        }
        let mut x = wall;
        for b in row.iter().map(|b| b.unwrap()) {
            let lips = b.lips.unwrap_or_else(|| LipSpec::default_for(b.id));
            let geom = BinGeom {
                bin_id: b.id,
                opening_width: b.w,
                opening_height: b.h,
                depth: b.d,
                lips,
                origin: Vector3::new(x, 0.0, floors[r]),
                wall_thickness: wall,
                // Boards and interior walls are split between the two bins
                // they separate so that no two members overlap.
                ceiling_thickness: row_heights[r] - b.h + if r == 0 { board } else { board / 2.0 },
                floor_thickness: if r == 3 { board } else { board / 2.0 },
            };
            members.extend(bin_members(&geom));
            bins.push(geom);
            x += b.w + wall;
        }
    }
    bins.sort_by_key(|b| b.bin_id);

    let target_region = Obb::new(
        Pose6D::from_translation(REGION_WIDTH / 2.0, REGION_DEPTH / 2.0, REGION_HEIGHT / 2.0),
        Vector3::new(REGION_WIDTH / 2.0, REGION_DEPTH / 2.0, REGION_HEIGHT / 2.0),
    )?;
    Ok(ShelfModel {
        bins,
        members,
        target_region,
        world_pose,
        metallic_base_plane: floors[3],
    })
}

fn bin_members(g: &BinGeom) -> Vec<ShelfMember> {
    let (lo, hi) = g.bounds();
    let t = g.lips.thickness;
    let (wl, wr) = match g.bin_id.column() {
        0 => (g.wall_thickness, g.wall_thickness / 2.0),
        2 => (g.wall_thickness / 2.0, g.wall_thickness),
        _ => (g.wall_thickness / 2.0, g.wall_thickness / 2.0),
    };
    let id = |kind| MemberId {
        bin: g.bin_id,
        kind,
    };
    let mk = |kind, min: Vector3<f64>, max: Vector3<f64>| ShelfMember {
        id: id(kind),
        local: Obb::from_min_max(min, max),
    };
    let mut out = vec![
        mk(
            MemberKind::Floor,
            Vector3::new(lo.x - wl, 0.0, lo.z - g.floor_thickness),
            Vector3::new(hi.x + wr, hi.y + BACK_PANEL_THICKNESS, lo.z),
        ),
        mk(
            MemberKind::Ceiling,
            Vector3::new(lo.x - wl, 0.0, hi.z),
            Vector3::new(hi.x + wr, hi.y + BACK_PANEL_THICKNESS, hi.z + g.ceiling_thickness),
        ),
        mk(
            MemberKind::LeftWall,
            Vector3::new(lo.x - wl, 0.0, lo.z),
            Vector3::new(lo.x, hi.y, hi.z),
        ),
        mk(
            MemberKind::RightWall,
            Vector3::new(hi.x, 0.0, lo.z),
            Vector3::new(hi.x + wr, hi.y, hi.z),
        ),
        mk(
            MemberKind::BackWall,
            Vector3::new(lo.x, hi.y, lo.z),
            Vector3::new(hi.x, hi.y + BACK_PANEL_THICKNESS, hi.z),
        ),
    ];
    if g.lips.bottom > 0.0 {
        out.push(mk(
            MemberKind::BottomLip,
            Vector3::new(lo.x, -t, lo.z),
            Vector3::new(hi.x, 0.0, lo.z + g.lips.bottom),
        ));
    }
    if g.lips.top > 0.0 {
        out.push(mk(
            MemberKind::TopLip,
            Vector3::new(lo.x, -t, hi.z - g.lips.top),
            Vector3::new(hi.x, 0.0, hi.z),
        ));
    }
    if let Some(ext) = g.lips.exterior.filter(|e| *e > 0.0) {
        let (x0, x1) = if g.bin_id.column() == 0 {
            (lo.x, lo.x + ext)
        } else {
            (hi.x - ext, hi.x)
        };
        out.push(mk(
            MemberKind::ExteriorLip,
            Vector3::new(x0, -t, lo.z),
            Vector3::new(x1, 0.0, hi.z),
        ));
    }
    out
}

impl ShelfModel {
    pub fn nominal() -> ShelfModel {
        build_shelf(&ShelfSpec::nominal(), Pose6D::identity()).expect("nominal shelf is valid")
    }

    pub fn from_spec(spec: &ShelfSpec) -> Result<ShelfModel, GeometryError> {
        build_shelf(spec, spec.world_pose)
    }

    pub fn bin(&self, bin: BinId) -> &BinGeom {
        &self.bins[bin.index()]
    }

    pub fn with_world_pose(&self, world_pose: Pose6D) -> ShelfModel {
        ShelfModel {
            world_pose,
            ..self.clone()
        }
    }

    /// Interior of a bin in the world frame.
    pub fn bin_interior(&self, bin: BinId) -> Obb {
        let (lo, hi) = self.bin(bin).bounds();
        Obb::from_min_max(lo, hi).transformed(&self.world_pose)
    }

    /// Interior bounds in shelf frame.
    pub fn bin_bounds(&self, bin: BinId) -> (Vector3<f64>, Vector3<f64>) {
        self.bin(bin).bounds()
    }

    pub fn bin_center_world(&self, bin: BinId) -> Vector3<f64> {
        self.bin_interior(bin).center.position
    }

    pub fn member(&self, id: MemberId) -> Option<&ShelfMember> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn member_world(&self, m: &ShelfMember) -> Obb {
        m.local.transformed(&self.world_pose)
    }

    pub fn members_world(&self) -> Vec<(MemberId, Obb)> {
        self.members
            .iter()
            .map(|m| (m.id, self.member_world(m)))
            .collect()
    }

    pub fn to_shelf_frame(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_pose.inverse().transform_point(p)
    }

    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.world_pose.transform_point(p)
    }

    pub fn target_region_world(&self) -> Obb {
        self.target_region.transformed(&self.world_pose)
    }

    /// Which bin's interior contains the shelf-frame point, if any.
    pub fn bin_containing(&self, p_shelf: &Vector3<f64>) -> Option<BinId> {
        self.bins.iter().map(|b| b.bin_id).find(|&id| {
            let (lo, hi) = self.bin_bounds(id);
            (0..3).all(|i| p_shelf[i] >= lo[i] && p_shelf[i] <= hi[i])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_names_round_trip() {
        for b in BinId::all() {
            assert_eq!(b.to_string().parse::<BinId>().unwrap(), b);
        }
        assert_eq!(BinId::new(0).unwrap().to_string(), "bin_A");
        assert_eq!(BinId::new(11).unwrap().to_string(), "bin_L");
        assert!("bin_M".parse::<BinId>().is_err());
        assert!("bin_a".parse::<BinId>().is_err());
    }

    #[test]
    fn nominal_shelf_has_twelve_unique_bins() {
        let s = ShelfModel::nominal();
        assert_eq!(s.bins.len(), 12);
        let ids: BTreeSet<_> = s.bins.iter().map(|b| b.bin_id).collect();
        assert_eq!(ids.len(), 12);
        let h = s.target_region.half_extents * 2.0;
        assert!((h - Vector3::new(0.87, 0.43, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn interiors_fit_target_region() {
        let s = ShelfModel::nominal();
        let region = s.target_region.inflated(0.01);
        for b in BinId::all() {
            for c in s.bin_interior(b).corners() {
                assert!(region.contains_point(&c, 1e-12), "{b} corner {c:?}");
            }
        }
    }

    #[test]
    fn opening_bounds_are_inclusive() {
        assert!(build_shelf(&ShelfSpec::uniform(0.25, 0.19), Pose6D::identity()).is_ok());
        assert!(build_shelf(&ShelfSpec::uniform(0.28, 0.22), Pose6D::identity()).is_ok());
        let mut spec = ShelfSpec::nominal();
        spec.bins[4].h = 0.25;
        assert!(matches!(
            build_shelf(&spec, Pose6D::identity()),
            Err(GeometryError::DimensionOutOfRange { what: "height", .. })
        ));
        let mut spec = ShelfSpec::nominal();
        spec.bins[4].w = 0.24;
        assert!(matches!(
            build_shelf(&spec, Pose6D::identity()),
            Err(GeometryError::DimensionOutOfRange { what: "width", .. })
        ));
    }

    #[test]
    fn three_widest_bins_overflow_region() {
        let mut spec = ShelfSpec::nominal();
        for b in spec.bins.iter_mut().take(3) {
            b.w = 0.30;
        }
        assert!(matches!(
            build_shelf(&spec, Pose6D::identity()),
            Err(GeometryError::LayoutOverflow { row: Some(0) })
        ));
    }

    #[test]
    fn interior_half_extents_match_bin_dims() {
        let s = ShelfModel::nominal();
        for b in BinId::all() {
            let i = s.bin_interior(b);
            assert!((i.half_extents - Vector3::new(0.135, 0.215, 0.105)).norm() < 1e-12);
        }
    }

    #[test]
    fn world_translation_shifts_interiors() {
        let s = ShelfModel::nominal();
        let moved = s.with_world_pose(Pose6D::from_translation(0.05, 0.0, 0.0));
        for b in BinId::all() {
            let d = moved.bin_interior(b).center.position - s.bin_interior(b).center.position;
            assert!((d - Vector3::new(0.05, 0.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn bottom_row_floor_sits_on_first_board() {
        // Rows of 0.21 m leave 1.0 - 4 * 0.21 = 0.16 m for five boards.
        let s = ShelfModel::nominal();
        let board = (1.0 - 4.0 * 0.21) / 5.0;
        for id in ["bin_J", "bin_K", "bin_L"] {
            let b: BinId = id.parse().unwrap();
            let i = s.bin_interior(b);
            let floor = i.center.position.z - i.half_extents.z;
            assert!((floor - board).abs() < 1e-12);
        }
        let top: BinId = "bin_A".parse().unwrap();
        let expected = board + 3.0 * (0.21 + board);
        assert!((s.bin(top).floor_z() - expected).abs() < 1e-12);
    }

    #[test]
    fn exterior_lips_only_on_lateral_bins() {
        let s = ShelfModel::nominal();
        for b in &s.bins {
            assert_eq!(b.has_exterior_lip(), b.bin_id.is_lateral());
        }
        let mut spec = ShelfSpec::nominal();
        spec.bins[1].lips = Some(LipSpec {
            exterior: Some(0.01),
            ..LipSpec::default_for(BinId::new(0).unwrap())
        });
        assert!(matches!(
            build_shelf(&spec, Pose6D::identity()),
            Err(GeometryError::InvalidLip(_))
        ));
    }

    #[test]
    fn spec_file_parses() {
        let text = r#"{ "bins": [
            {"id": "bin_A", "w": 0.27, "h": 0.21, "d": 0.43,
             "lips": {"bottom": 0.012, "top": 0.01, "exterior": 0.01, "thickness": 0.005}}
        ], "world_pose": {"position": [0.0, 0.0, 0.0], "orientation": [1.0, 0.0, 0.0, 0.0]} }"#;
        let spec = ShelfSpec::from_json(text).unwrap();
        assert_eq!(spec.bins.len(), 1);
        assert!(matches!(
            ShelfModel::from_spec(&spec),
            Err(GeometryError::MissingBin(_))
        ));
    }
}
