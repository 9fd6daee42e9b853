//! Masking, the simulated scene fitter and hypothesis rejection.

use nalgebra::{UnitQuaternion, Vector3};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::camera::{is_finite, Hit, PointCloud};
use super::PerceptionError;
use crate::catalog::Catalog;
use crate::geometry::{BinId, Obb, Pose6D, ShelfModel};
use crate::rng::{rng_from, SimRng};
use crate::world::InstanceId;

/// Slack around the bin interior kept by the mask, so that points on the
/// bin surfaces survive sensor noise.
pub const MASK_MARGIN: f64 = 0.01;
/// Height of the floor slab an object must touch.
pub const FLOOR_SLAB_THICKNESS: f64 = 0.06;
pub const MIN_FINITE_POINTS: usize = 50;

/// Drop lost returns and anything outside the bin interior.
pub fn shelf_mask(cloud: &PointCloud, shelf: &ShelfModel, bin: BinId) -> PointCloud {
    let (lo, hi) = shelf.bin_bounds(bin);
    let keep = |p: &Vector3<f64>| {
        is_finite(p) && (0..3).all(|i| p[i] >= lo[i] - MASK_MARGIN && p[i] <= hi[i] + MASK_MARGIN)
    };
    let (points, labels) = cloud
        .points
        .iter()
        .zip(&cloud.labels)
        .filter(|(p, _)| keep(p))
        .map(|(p, l)| (*p, *l))
        .unzip();
    PointCloud {
        points,
        labels,
        ..cloud.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisItem {
    pub sku: String,
    /// Object center in the world frame.
    pub pose: Pose6D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneHypothesis {
    pub items: Vec<HypothesisItem>,
    /// Negative mean squared residual, less constraint penalties.
    pub score: f64,
}

impl SceneHypothesis {
    pub fn contains(&self, sku: &str) -> bool {
        self.items.iter().any(|i| i.sku == sku)
    }

    pub fn sku_key(&self) -> Vec<&str> {
        let mut k: Vec<&str> = self.items.iter().map(|i| i.sku.as_str()).collect();
        k.sort_unstable();
        k
    }
}

/// Error model of the simulated fitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitterConfig {
    pub hypotheses_per_shot: usize,
    pub base_sigma_t: f64,
    pub base_sigma_r_deg: f64,
    /// Translation sigma added per meter of depth noise.
    pub k_noise_t: f64,
    pub k_noise_r_deg_per_m: f64,
    /// Translation sigma added at a fully lost object.
    pub k_nan_t: f64,
    pub k_nan_r_deg: f64,
    /// Objects with fewer visible returns are not detected.
    pub min_support: usize,
    pub decoy_rate: f64,
    pub outlier_rate: f64,
    pub identity_penalty: f64,
    pub constraint_penalty: f64,
    pub max_score_points: usize,
}

impl Default for FitterConfig {
    fn default() -> Self {
        FitterConfig {
            hypotheses_per_shot: 4,
            base_sigma_t: 0.001,
            base_sigma_r_deg: 0.2,
            k_noise_t: 1.0,
            k_noise_r_deg_per_m: 100.0,
            k_nan_t: 0.03,
            k_nan_r_deg: 5.0,
            min_support: 30,
            decoy_rate: 0.25,
            outlier_rate: 0.1,
            identity_penalty: 1e-4,
            constraint_penalty: 1e-4,
            max_score_points: 1200,
        }
    }
}

/// Ground truth the simulated fitter perturbs: each object in the bin with
/// its shelf-frame pose.
#[derive(Debug, Clone)]
pub struct TruthObject {
    pub id: InstanceId,
    pub sku: String,
    pub shelf_pose: Pose6D,
}

fn gaussian3(rng: &mut SimRng) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Mean squared distance of the cloud to the hypothesized boxes and the bin
/// boundary planes.
fn mean_sq_residual(points: &[Vector3<f64>], boxes: &[Obb], lo: &Vector3<f64>, hi: &Vector3<f64>) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let ss: f64 = points
        .iter()
        .map(|p| {
            let planes = [p.z - lo.z, hi.z - p.z, p.x - lo.x, hi.x - p.x, hi.y - p.y]
                .into_iter()
                .map(f64::abs)
                .fold(f64::INFINITY, f64::min);
            let r = boxes.iter().map(|b| b.surface_distance(p)).fold(planes, f64::min);
            r * r
        })
        .sum();
    ss / points.len() as f64
}

/// Simulated constrained fit of the declared items to a masked cloud.
///
/// Hypotheses are ground-truth poses perturbed with a spread that grows with
/// depth noise and with the share of each object's returns that were lost.
/// Some hypotheses swap identities between declared items, and some place an
/// item outside the bin; both score lower.
pub fn fit_scene(
    cloud: &PointCloud,
    shelf: &ShelfModel,
    bin: BinId,
    declared_skus: &[String],
    truth: &[TruthObject],
    catalog: &Catalog,
    config: &FitterConfig,
    seed: u64,
) -> Result<Vec<SceneHypothesis>, PerceptionError> {
    if declared_skus.is_empty() {
        return Err(PerceptionError::NoDeclaredItems(bin));
    }
    let finite: Vec<Vector3<f64>> = cloud.points.iter().filter(|p| is_finite(p)).copied().collect();
    if finite.len() < MIN_FINITE_POINTS {
        return Err(PerceptionError::NoHypothesis(bin));
    }
    let stride = finite.len().div_ceil(config.max_score_points.max(1));
    let sample: Vec<Vector3<f64>> = finite.iter().step_by(stride.max(1)).copied().collect();
    let (lo, hi) = shelf.bin_bounds(bin);
    let mut rng = rng_from(seed);

    // Visible support and loss ratio per object.
    struct Seen<'a> {
        truth: &'a TruthObject,
        support: usize,
        lost_fraction: f64,
    }
    let seen: Vec<Seen> = truth
        .iter()
        .filter(|t| declared_skus.contains(&t.sku))
        .map(|t| {
            let support = cloud.labels.iter().filter(|l| **l == Hit::Object(t.id)).count();
            let lost_fraction = cloud.object_returns.get(&t.id).copied().unwrap_or_default().lost_fraction();
            Seen {
                truth: t,
                support,
                lost_fraction,
            }
        })
        .collect();

    let mut out = Vec::with_capacity(config.hypotheses_per_shot);
    for _ in 0..config.hypotheses_per_shot {
        let mut items = Vec::new();
        let mut penalty = 0.0;
        for s in &seen {
            // Draws happen whether or not the object is detected.
            let dt = gaussian3(&mut rng);
            let dr = gaussian3(&mut rng);
            if s.support < config.min_support {
                continue;
            }
            let sigma_t = config.base_sigma_t + config.k_noise_t * cloud.noise_sigma + config.k_nan_t * s.lost_fraction;
            let sigma_r = (config.base_sigma_r_deg
                + config.k_noise_r_deg_per_m * cloud.noise_sigma
                + config.k_nan_r_deg * s.lost_fraction)
                .to_radians();
            let p = s.truth.shelf_pose;
            let pose = Pose6D::new(
                p.position + dt * sigma_t,
                UnitQuaternion::from_scaled_axis(dr * sigma_r) * p.orientation,
            );
            items.push(HypothesisItem {
                sku: s.truth.sku.clone(),
                pose,
            });
        }
        let decoy: f64 = rng.random();
        let outlier: f64 = rng.random();
        let pick: f64 = rng.random();
        let shift: f64 = rng.random();
        if !items.is_empty() && decoy < config.decoy_rate && declared_skus.len() > 1 {
            let k = ((pick * items.len() as f64) as usize).min(items.len() - 1);
            let others: Vec<&String> = declared_skus.iter().filter(|s| **s != items[k].sku).collect();
            if let Some(sku) = others.choose(&mut rng) {
                items[k].sku = (*sku).clone();
                penalty += config.identity_penalty;
            }
        }
        if !items.is_empty() && outlier < config.outlier_rate {
            let k = ((pick * items.len() as f64) as usize).min(items.len() - 1);
            let d = if shift < 0.5 {
                Vector3::new(0.0, hi.y - lo.y, 0.0) * (0.6 + shift)
            } else {
                Vector3::new(0.0, 0.0, 0.1 + 0.1 * shift)
            };
            items[k].pose.position += d;
        }
        let mut boxes = Vec::with_capacity(items.len());
        for it in &items {
            let spec = catalog.get(&it.sku).map_err(|e| PerceptionError::Catalog(e.to_string()))?;
            let b = spec.obb_at(it.pose);
            let c = it.pose.position;
            if (0..3).any(|i| c[i] < lo[i] || c[i] > hi[i]) {
                penalty += config.constraint_penalty;
            }
            boxes.push(b);
        }
        let score = -mean_sq_residual(&sample, &boxes, &lo, &hi) - penalty;
        for it in &mut items {
            it.pose = shelf.world_pose.compose(&it.pose);
        }
        out.push(SceneHypothesis { items, score });
    }
    Ok(out)
}

/// Keep hypotheses whose items all have their center inside the bin and
/// rest on a slab just above the bin floor.
pub fn reject_invalid(
    hyps: Vec<SceneHypothesis>,
    shelf: &ShelfModel,
    bin: BinId,
    catalog: &Catalog,
    slab_thickness: f64,
) -> Vec<SceneHypothesis> {
    let (lo, hi) = shelf.bin_bounds(bin);
    let slab = Obb::from_min_max(lo, Vector3::new(hi.x, hi.y, lo.z + slab_thickness.max(1e-6)));
    let to_shelf = shelf.world_pose.inverse();
    hyps.into_iter()
        .filter(|h| {
            h.items.iter().all(|it| {
                let pose = to_shelf.compose(&it.pose);
                let c = pose.position;
                let inside = (0..3).all(|i| c[i] >= lo[i] && c[i] <= hi[i]);
                let on_floor = catalog.get(&it.sku).is_ok_and(|spec| spec.obb_at(pose).intersects(&slab));
                inside && on_floor
            })
        })
        .collect()
}
