//! Shelf localization from guarded probing moves.
//!
//! Each probe starts at the expected center of a bin and moves along a
//! principal axis until it touches the real shelf. The displacement of the
//! contact along the probe direction, relative to where the expected model
//! says contact should happen, equals the projection of the shelf's
//! translation offset onto that direction. Stacking probes gives a linear
//! least-squares problem for the offset.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{BinId, GeometryError, MemberKind, Pose6D, ShelfModel};
use crate::rng::rng_from;

/// Offsets larger than this exceed the placement tolerance of the robot base.
pub const PLACEMENT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSurface {
    Floor,
    Ceiling,
    LeftWall,
    RightWall,
    BackWall,
}

impl ProbeSurface {
    /// Probe travel direction in shelf frame.
    pub fn direction(self) -> Vector3<f64> {
        match self {
            ProbeSurface::Floor => -Vector3::z(),
            ProbeSurface::Ceiling => Vector3::z(),
            ProbeSurface::LeftWall => -Vector3::x(),
            ProbeSurface::RightWall => Vector3::x(),
            ProbeSurface::BackWall => Vector3::y(),
        }
    }

    pub fn member_kind(self) -> MemberKind {
        match self {
            ProbeSurface::Floor => MemberKind::Floor,
            ProbeSurface::Ceiling => MemberKind::Ceiling,
            ProbeSurface::LeftWall => MemberKind::LeftWall,
            ProbeSurface::RightWall => MemberKind::RightWall,
            ProbeSurface::BackWall => MemberKind::BackWall,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardedProbe {
    pub bin: BinId,
    pub surface: ProbeSurface,
}

/// Floor, ceiling, both walls and the back of every bin.
pub fn default_probes() -> Vec<GuardedProbe> {
    use ProbeSurface::*;
    BinId::all()
        .flat_map(|bin| {
            [Floor, Ceiling, LeftWall, RightWall, BackWall]
                .into_iter()
                .map(move |surface| GuardedProbe { bin, surface })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Estimated translation of the shelf relative to the expected pose.
    pub offset: Vector3<f64>,
    pub rms_residual: f64,
    pub out_of_tolerance: bool,
}

impl CalibrationResult {
    pub fn corrected_pose(&self, expected_pose: &Pose6D) -> Pose6D {
        expected_pose.translated(self.offset)
    }
}

/// Distance along the ray to the first member of `shelf` it enters.
fn first_contact(shelf: &ShelfModel, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    shelf
        .members_world()
        .iter()
        .filter_map(|(_, m)| m.ray_entry(origin, dir))
        .filter(|t| *t > 0.0)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
}

/// Estimate the translation offset of `true_shelf` from `expected_pose`.
///
/// Probes are issued from the expected geometry; `noise_sigma` perturbs each
/// measured contact along its travel direction.
pub fn calibrate_shelf(
    true_shelf: &ShelfModel,
    expected_pose: &Pose6D,
    probes: &[GuardedProbe],
    noise_sigma: f64,
    seed: u64,
) -> Result<CalibrationResult, GeometryError> {
    if probes.len() < 6 {
        return Err(GeometryError::InsufficientProbes);
    }
    let expected = true_shelf.with_world_pose(*expected_pose);
    let mut info = Matrix3::zeros();
    for p in probes {
        let d = expected.world_pose.transform_vector(&p.surface.direction());
        info += d * d.transpose();
    }
    let eig = SymmetricEigen::new(info);
    if eig.eigenvalues.min() < 1e-9 {
        return Err(GeometryError::InsufficientProbes);
    }

    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
    let mut rhs = Vector3::zeros();
    let mut observations = Vec::with_capacity(probes.len());
    for p in probes {
        let start = expected.bin_center_world(p.bin);
        let d = expected.world_pose.transform_vector(&p.surface.direction());
        let nominal = first_contact(&expected, &start, &d).ok_or(GeometryError::ProbeMissed(p.bin))?;
        let measured = first_contact(true_shelf, &start, &d).ok_or(GeometryError::ProbeMissed(p.bin))?;
        let jitter = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        let r = measured + jitter - nominal;
        rhs += d * r;
        observations.push((d, r));
    }
    let offset = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose()
        * rhs;
    let ss: f64 = observations
        .iter()
        .map(|(d, r)| (d.dot(&offset) - r).powi(2))
        .sum();
    let rms_residual = (ss / observations.len() as f64).sqrt();
    let out_of_tolerance = offset.norm() > PLACEMENT_TOLERANCE;
    if out_of_tolerance {
        log::warn!(
            "shelf offset {:.3} m exceeds the {:.2} m placement tolerance",
            offset.norm(),
            PLACEMENT_TOLERANCE
        );
    }
    Ok(CalibrationResult {
        offset,
        rms_residual,
        out_of_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted(offset: Vector3<f64>) -> ShelfModel {
        ShelfModel::nominal().with_world_pose(Pose6D::from_translation(offset.x, offset.y, offset.z))
    }

    #[test]
    fn zero_offset_is_recovered_exactly() {
        let r = calibrate_shelf(&shifted(Vector3::zeros()), &Pose6D::identity(), &default_probes(), 0.0, 1)
            .unwrap();
        assert!(r.offset.norm() < 1e-12);
        assert!(!r.out_of_tolerance);
    }

    #[test]
    fn planar_offset_is_recovered() {
        let truth = Vector3::new(0.03, 0.01, 0.0);
        let r = calibrate_shelf(&shifted(truth), &Pose6D::identity(), &default_probes(), 0.0, 1).unwrap();
        assert!((r.offset - truth).norm() < 1e-6, "{:?}", r.offset);
        assert!(r.rms_residual < 1e-9);
    }

    #[test]
    fn large_offset_is_flagged() {
        let truth = Vector3::new(0.06, 0.0, 0.0);
        let r = calibrate_shelf(&shifted(truth), &Pose6D::identity(), &default_probes(), 0.0, 1).unwrap();
        assert!((r.offset - truth).norm() < 1e-6);
        assert!(r.out_of_tolerance);
    }

    #[test]
    fn probes_on_two_axes_are_insufficient() {
        let probes: Vec<_> = default_probes()
            .into_iter()
            .filter(|p| !matches!(p.surface, ProbeSurface::BackWall))
            .collect();
        assert!(matches!(
            calibrate_shelf(&shifted(Vector3::zeros()), &Pose6D::identity(), &probes, 0.0, 1),
            Err(GeometryError::InsufficientProbes)
        ));
        let few = &default_probes()[..5];
        assert!(matches!(
            calibrate_shelf(&shifted(Vector3::zeros()), &Pose6D::identity(), few, 0.0, 1),
            Err(GeometryError::InsufficientProbes)
        ));
    }

    #[test]
    fn error_shrinks_with_noise() {
        let truth = Vector3::new(-0.02, 0.015, 0.01);
        let err = |sigma: f64| {
            let r = calibrate_shelf(&shifted(truth), &Pose6D::identity(), &default_probes(), sigma, 9).unwrap();
            (r.offset - truth).norm()
        };
        let (e3, e4, e0) = (err(1e-3), err(1e-4), err(0.0));
        assert!(e3 > e4 && e4 > e0, "{e3} {e4} {e0}");
        assert!(e0 < 1e-9);
    }
}
