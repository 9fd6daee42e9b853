//! Simulated depth sensing and scene estimation: mask the bin, fit scene
//! hypotheses, reject implausible ones and keep the best over ten shots.

mod camera;
mod fit;

use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{look_at, render_depth, CameraKind, CameraModel, Hit, PointCloud, ReturnStats};
pub use fit::{
    fit_scene, reject_invalid, shelf_mask, FitterConfig, HypothesisItem, SceneHypothesis,
    TruthObject, FLOOR_SLAB_THICKNESS, MASK_MARGIN, MIN_FINITE_POINTS,
};

use crate::geometry::{BinId, Pose6D, ShelfModel};
use crate::rng::{derive_indexed, derive_seed, rng_from};
use crate::world::{WorldError, WorldState};

pub const SHOTS_PER_CAMERA: usize = 5;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("{bin} is not visible from the {camera:?} camera")]
    BinNotVisible { bin: BinId, camera: CameraKind },
    #[error("too few valid points in {0} to fit a scene")]
    NoHypothesis(BinId),
    #[error("no declared items for {0}")]
    NoDeclaredItems(BinId),
    #[error("{target} is not declared in {bin}")]
    TargetNotDeclared { bin: BinId, target: String },
    #[error("no hypothesis for {target} in {bin} survived")]
    PerceptionFailed { bin: BinId, target: String },
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Two fixed Kinects and the arm-mounted RealSense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub kinects: [CameraModel; 2],
    /// Template for the hand camera; its pose is set per viewpoint.
    pub realsense: CameraModel,
}

impl CameraRig {
    /// Kinects high in front of the shelf, one to each side, both aimed at
    /// the middle of the shelf face (shelf frame).
    pub fn standard(shelf: &ShelfModel) -> CameraRig {
        let aim = Vector3::new(0.435, 0.2, 0.5);
        let kinect = |x: f64| {
            let eye = Vector3::new(x, -1.3, 1.1);
            CameraModel::kinect2(shelf.world_pose.compose(&look_at(eye, aim)))
        };
        CameraRig {
            kinects: [kinect(0.1), kinect(0.77)],
            realsense: CameraModel::realsense(Pose6D::identity()),
        }
    }

    pub fn noiseless(mut self) -> CameraRig {
        self.kinects = self.kinects.map(CameraModel::noiseless);
        self.realsense = self.realsense.noiseless();
        self
    }

    /// The fixed camera closest to the bin center.
    pub fn closest_kinect(&self, shelf: &ShelfModel, bin: BinId) -> &CameraModel {
        let c = shelf.bin_center_world(bin);
        let d = |k: &CameraModel| (k.pose.position - c).norm();
        if d(&self.kinects[1]) < d(&self.kinects[0]) {
            &self.kinects[1]
        } else {
            &self.kinects[0]
        }
    }
}

/// Two pre-selected hand-camera viewpoints for a bin, in the world frame.
pub fn percept_viewpoints(shelf: &ShelfModel, bin: BinId) -> [Pose6D; 2] {
    let g = shelf.bin(bin);
    let (lo, hi) = g.bounds();
    let cx = g.center_x();
    let aim = Vector3::new(cx, 0.12, lo.z + 0.05);
    let mid_z = (lo.z + hi.z) * 0.5;
    // Lean the second view toward the shelf's middle column.
    let side = if bin.column() == 2 { -1.0 } else { 1.0 };
    let eyes = [
        Vector3::new(cx, -0.42, mid_z + 0.06),
        Vector3::new(cx + 0.06 * side, -0.38, mid_z + 0.10),
    ];
    eyes.map(|e| shelf.world_pose.compose(&look_at(e, aim)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub rig: CameraRig,
    pub fitter: FitterConfig,
    pub floor_slab_thickness: f64,
}

impl PerceptionConfig {
    pub fn standard(shelf: &ShelfModel) -> PerceptionConfig {
        PerceptionConfig {
            rig: CameraRig::standard(shelf),
            fitter: FitterConfig::default(),
            floor_slab_thickness: FLOOR_SLAB_THICKNESS,
        }
    }

    pub fn noiseless(shelf: &ShelfModel) -> PerceptionConfig {
        PerceptionConfig {
            rig: CameraRig::standard(shelf).noiseless(),
            ..PerceptionConfig::standard(shelf)
        }
    }
}

/// Hypotheses one shot kept after rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot: usize,
    pub camera: CameraKind,
    pub finite_points: usize,
    pub retained: Vec<SceneHypothesis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEstimate {
    pub bin: BinId,
    pub target: String,
    pub best: SceneHypothesis,
    /// Index into `best.items` of the chosen target instance.
    pub target_choice: usize,
    pub shots_used: usize,
    pub per_camera_counts: BTreeMap<String, usize>,
    pub shots: Vec<ShotRecord>,
}

impl SceneEstimate {
    /// World-frame pose of the chosen target.
    pub fn target_pose(&self) -> Pose6D {
        self.best.items[self.target_choice].pose
    }
}

/// One render → mask → fit → reject pass.
pub fn run_shot(
    world: &WorldState,
    camera: &CameraModel,
    bin: BinId,
    config: &PerceptionConfig,
    seed: u64,
) -> Result<(usize, Vec<SceneHypothesis>), PerceptionError> {
    let cloud = render_depth(world, camera, bin, derive_seed(seed, "render"))?;
    let masked = shelf_mask(&cloud, &world.shelf, bin);
    let declared = world.skus_in(bin);
    let truth: Vec<TruthObject> = world
        .objects_in(bin)
        .map(|o| {
            Ok(TruthObject {
                id: o.id,
                sku: o.sku.clone(),
                shelf_pose: world.shelf_pose(o.id)?,
            })
        })
        .collect::<Result<_, WorldError>>()?;
    let finite = masked.finite_count();
    let hyps = match fit_scene(
        &masked,
        &world.shelf,
        bin,
        &declared,
        &truth,
        world.catalog(),
        &config.fitter,
        derive_seed(seed, "fit"),
    ) {
        Ok(h) => h,
        Err(PerceptionError::NoHypothesis(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok((
        finite,
        reject_invalid(hyps, &world.shelf, bin, world.catalog(), config.floor_slab_thickness),
    ))
}

/// Five shots from the closest Kinect and five from the hand camera at
/// `viewpoint`, pooled; the best-scoring hypothesis containing the target
/// wins.
pub fn estimate_scene(
    world: &WorldState,
    bin: BinId,
    target_sku: &str,
    config: &PerceptionConfig,
    viewpoint: usize,
    seed: u64,
) -> Result<SceneEstimate, PerceptionError> {
    if !world.skus_in(bin).iter().any(|s| s == target_sku) {
        return Err(PerceptionError::TargetNotDeclared {
            bin,
            target: target_sku.to_string(),
        });
    }
    let kinect = config.rig.closest_kinect(&world.shelf, bin).clone();
    let view = percept_viewpoints(&world.shelf, bin)[viewpoint.min(1)];
    let hand = config.rig.realsense.at(view);
    let mut shots = Vec::with_capacity(2 * SHOTS_PER_CAMERA);
    for i in 0..2 * SHOTS_PER_CAMERA {
        let camera = if i < SHOTS_PER_CAMERA { &kinect } else { &hand };
        let (finite_points, hyps) = run_shot(world, camera, bin, config, derive_indexed(seed, "shot", i as u64))?;
        shots.push(ShotRecord {
            shot: i,
            camera: camera.kind,
            finite_points,
            retained: hyps.into_iter().filter(|h| h.contains(target_sku)).collect(),
        });
    }

    let mut best: Option<(usize, &SceneHypothesis)> = None;
    for s in &shots {
        for h in &s.retained {
            let better = match best {
                None => true,
                Some((bs, bh)) => {
                    h.score > bh.score || (h.score == bh.score && s.shot == bs && h.sku_key() < bh.sku_key())
                }
            };
            if better {
                best = Some((s.shot, h));
            }
        }
    }
    let Some((_, best)) = best else {
        return Err(PerceptionError::PerceptionFailed {
            bin,
            target: target_sku.to_string(),
        });
    };
    let best = best.clone();
    let candidates: Vec<usize> = (0..best.items.len()).filter(|&i| best.items[i].sku == target_sku).collect();
    let target_choice = *candidates
        .choose(&mut rng_from(derive_seed(seed, "target_choice")))
        .expect("best contains the target");
    let per_camera_counts = [
        (CameraKind::Kinect2.name().to_string(), SHOTS_PER_CAMERA),
        (CameraKind::RealSense.name().to_string(), SHOTS_PER_CAMERA),
    ]
    .into();
    Ok(SceneEstimate {
        bin,
        target: target_sku.to_string(),
        best,
        target_choice,
        shots_used: shots.len(),
        per_camera_counts,
        shots,
    })
}
