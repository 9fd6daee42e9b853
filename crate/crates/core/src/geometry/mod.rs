//! Rigid poses, oriented boxes, the shelf model, collision queries and
//! shelf calibration.

mod calibration;
mod obb;
mod pose;
mod shelf;
mod sweep;

pub use calibration::{
    calibrate_shelf, default_probes, CalibrationResult, GuardedProbe, ProbeSurface,
    PLACEMENT_TOLERANCE,
};
pub use obb::{obb_intersects, Obb};
pub use pose::Pose6D;
pub use shelf::{
    build_shelf, BinGeom, BinId, BinSpec, ContactSet, LipSpec, MemberId, MemberKind, ShelfMember,
    ShelfModel, ShelfSpec, MAX_OPENING_HEIGHT, MAX_OPENING_WIDTH, MIN_OPENING_HEIGHT,
    MIN_OPENING_WIDTH, REGION_DEPTH, REGION_HEIGHT, REGION_WIDTH,
};
pub use sweep::{
    body_radius, segment_subdivisions, swept_collides, swept_collides_with_pitch, Collision,
    MemberIndex, DEFAULT_PITCH,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{bin} {what} {value} outside [{min}, {max}]")]
    DimensionOutOfRange {
        bin: BinId,
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("bins do not fit the target region (row {row:?})")]
    LayoutOverflow { row: Option<usize> },
    #[error("duplicate bin {0}")]
    DuplicateBin(BinId),
    #[error("missing bin {0}")]
    MissingBin(BinId),
    #[error("invalid lip geometry for {0}")]
    InvalidLip(BinId),
    #[error("unknown bin id {0:?}")]
    UnknownBin(String),
    #[error("box half-extents must be positive: {0:?}")]
    NonPositiveExtent([f64; 3]),
    #[error("path needs at least two waypoints")]
    EmptyPath,
    #[error("collision body is empty")]
    EmptyBody,
    #[error("probes do not constrain all offset axes")]
    InsufficientProbes,
    #[error("guarded move in {0} never made contact")]
    ProbeMissed(BinId),
    #[error("shelf spec: {0}")]
    Parse(String),
}
