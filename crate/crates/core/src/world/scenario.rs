use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::Vector3;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axis_aligned_rotation, box_in_bin, InstanceId, ObjectInstance, WorldError, WorldState};
use super::resting_face_of;
use crate::catalog::{Catalog, ItemSpec};
use crate::geometry::{BinId, Pose6D, ShelfModel, ShelfSpec};
use crate::rng::{derive_indexed, derive_seed, rng_from, SimRng};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;
/// Minimum lateral spacing between neighbouring objects; items are not
/// tightly packed.
const MIN_SPACING: f64 = 0.01;
/// How far behind the bin front an object may be placed.
const FRONT_JITTER: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkOrderEntry {
    pub bin: BinId,
    pub item: String,
}

/// Fixes parts of an object's placement; anything left out is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementHint {
    pub bin: BinId,
    pub item: String,
    /// Local axis pointing up.
    #[serde(default)]
    pub up_axis: Option<usize>,
    /// Local axis along the bin width.
    #[serde(default)]
    pub lateral_axis: Option<usize>,
    /// Gap between the left wall and the object.
    #[serde(default)]
    pub x: Option<f64>,
    /// Gap between the bin front and the object.
    #[serde(default)]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub bin_contents: BTreeMap<BinId, Vec<String>>,
    pub work_order: Vec<WorkOrderEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bonus: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shelf: Option<ShelfSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub placements: Vec<PlacementHint>,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<ScenarioSpec, WorldError> {
        serde_json::from_str(text).map_err(|e| WorldError::InvalidScenario(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn shelf_model(&self) -> Result<ShelfModel, WorldError> {
        Ok(match &self.shelf {
            Some(s) => ShelfModel::from_spec(s)?,
            None => ShelfModel::nominal(),
        })
    }

    /// Check references against the catalog and the per-bin uniqueness rule.
    pub fn validate(&self, catalog: &Catalog) -> Result<(), WorldError> {
        for (bin, skus) in &self.bin_contents {
            let mut seen = BTreeSet::new();
            for s in skus {
                catalog.get(s)?;
                if !seen.insert(s) {
                    return Err(WorldError::RepeatedSku {
                        bin: *bin,
                        sku: s.clone(),
                    });
                }
            }
        }
        for e in &self.work_order {
            let present = self.bin_contents.get(&e.bin).is_some_and(|c| c.contains(&e.item));
            if !present {
                return Err(WorldError::InvalidScenario(format!(
                    "target {} is not in {}",
                    e.item, e.bin
                )));
            }
        }
        for h in &self.placements {
            let present = self.bin_contents.get(&h.bin).is_some_and(|c| c.contains(&h.item));
            if !present {
                return Err(WorldError::InvalidScenario(format!(
                    "placement for {} in {} has no matching item",
                    h.item, h.bin
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Oriented {
    lateral: usize,
    up: usize,
    depth: usize,
}

fn orientations(item: &ItemSpec, hint: Option<&PlacementHint>, w: f64, h: f64, d: f64) -> Vec<Oriented> {
    let mut out = Vec::new();
    for up in 0..3 {
        for lateral in 0..3 {
            if up == lateral {
                continue;
            }
            if hint.is_some_and(|h| h.up_axis.is_some_and(|a| a != up) || h.lateral_axis.is_some_and(|a| a != lateral)) {
                continue;
            }
            let depth = 3 - up - lateral;
            let dims = item.dims;
            if dims[up] <= h && dims[lateral] <= w && dims[depth] <= d {
                out.push(Oriented { lateral, up, depth });
            }
        }
    }
    out
}

/// Sample one placement of every object in a bin. Returns `None` when the
/// draw violates a placement rule.
fn sample_bin(
    shelf: &ShelfModel,
    bin: BinId,
    items: &[(&ItemSpec, Option<&PlacementHint>)],
    rng: &mut SimRng,
) -> Option<Vec<Pose6D>> {
    let g = shelf.bin(bin);
    let (lo, _) = shelf.bin_bounds(bin);
    let mut chosen = Vec::with_capacity(items.len());
    for (item, hint) in items {
        let options = orientations(item, *hint, g.opening_width, g.opening_height, g.depth);
        chosen.push(*options.choose(rng)?);
    }
    let widths: Vec<f64> = items.iter().zip(&chosen).map(|((it, _), o)| it.dims[o.lateral]).collect();
    let total: f64 = widths.iter().sum::<f64>() + MIN_SPACING * (items.len().saturating_sub(1)) as f64;
    let slack = g.opening_width - total;
    if slack < 0.0 {
        return None;
    }
    // Left-to-right order and the free space on either side of each object.
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    let mut cuts: Vec<f64> = (0..items.len()).map(|_| rng.random_range(0.0..=slack)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut left = vec![0.0; items.len()];
    let mut x = lo.x;
    let mut prev = 0.0;
    for (k, &i) in order.iter().enumerate() {
        x += cuts[k] - prev;
        prev = cuts[k];
        left[i] = x;
        x += widths[i] + MIN_SPACING;
    }

    let mut poses = Vec::with_capacity(items.len());
    for (i, ((item, hint), o)) in items.iter().zip(&chosen).enumerate() {
        let d = item.dims_vec();
        let x0 = hint.and_then(|h| h.x).map_or(left[i], |gap| lo.x + gap);
        let room = (g.depth * 0.5 - d[o.depth] * 0.5).max(0.0).min(FRONT_JITTER);
        let y0 = hint
            .and_then(|h| h.y)
            .unwrap_or_else(|| if room > 0.0 { rng.random_range(0.0..room) } else { 0.0 });
        let c = Vector3::new(
            x0 + d[o.lateral] * 0.5,
            lo.y + y0 + d[o.depth] * 0.5,
            lo.z + d[o.up] * 0.5,
        );
        poses.push(Pose6D::new(c, axis_aligned_rotation(o.lateral, o.up)));
    }

    // Placement rules: inside the bin, centered in the front half,
    // side by side without overlap.
    let boxes: Vec<_> = items.iter().zip(&poses).map(|((it, _), p)| it.obb_at(*p)).collect();
    for (b, p) in boxes.iter().zip(&poses) {
        if !box_in_bin(shelf, bin, b, 0.0) || p.position.y > lo.y + g.depth * 0.5 + 1e-12 {
            return None;
        }
    }
    for i in 0..boxes.len() {
        let (ai, bi) = boxes[i].aabb();
        for bj in &boxes[i + 1..] {
            let (aj, bjh) = bj.aabb();
            if ai.x < bjh.x + MIN_SPACING - 1e-12 && aj.x < bi.x + MIN_SPACING - 1e-12 {
                return None;
            }
        }
    }
    Some(poses)
}

/// Ground-truth world for a scenario.
///
/// Bins are sampled independently from seeds derived per bin, so the result
/// is a pure function of `(scenario, catalog, seed)`.
pub fn spawn(scenario: &ScenarioSpec, catalog: &Catalog, seed: u64) -> Result<WorldState, WorldError> {
    scenario.validate(catalog)?;
    let catalog = Arc::new(catalog.with_bonus(&scenario.bonus)?);
    let shelf = scenario.shelf_model()?;
    let mut world = WorldState::new(shelf.clone(), catalog.clone());
    let mut next_id = 0u32;
    for bin in BinId::all() {
        let Some(skus) = scenario.bin_contents.get(&bin) else {
            continue;
        };
        if skus.is_empty() {
            continue;
        }
        let items: Vec<(&ItemSpec, Option<&PlacementHint>)> = skus
            .iter()
            .map(|s| {
                let hint = scenario.placements.iter().find(|h| h.bin == bin && &h.item == s);
                Ok((catalog.get(s)?, hint))
            })
            .collect::<Result<_, WorldError>>()?;
        let mut rng = rng_from(derive_indexed(seed, "spawn", bin.index() as u64));
        let poses = (0..MAX_PLACEMENT_ATTEMPTS)
            .find_map(|_| sample_bin(&shelf, bin, &items, &mut rng))
            .ok_or(WorldError::PlacementInfeasible {
                bin,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            })?;
        for ((item, _), pose) in items.iter().zip(poses) {
            let id = InstanceId(next_id);
            next_id += 1;
            world.objects.insert(
                id,
                ObjectInstance {
                    id,
                    sku: item.sku.clone(),
                    pose: shelf.world_pose.compose(&pose),
                    resting_face: resting_face_of(&pose),
                    bin,
                },
            );
        }
    }
    debug_assert!(world.objects.keys().all(|&id| world.is_contained(id).unwrap_or(false)));
    Ok(world)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    #[default]
    Any,
    /// Longest side at most 15 cm.
    Small,
    /// Shortest side at least 6 cm.
    Large,
}

impl SizeClass {
    pub fn admits(self, item: &ItemSpec) -> bool {
        match self {
            SizeClass::Any => true,
            SizeClass::Small => item.dims[2] <= 0.15,
            SizeClass::Large => item.dims[0] >= 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConstraints {
    pub min_items: usize,
    pub max_items: usize,
    pub size_class: SizeClass,
}

impl Default for GenConstraints {
    fn default() -> Self {
        GenConstraints {
            min_items: 1,
            max_items: 3,
            size_class: SizeClass::Any,
        }
    }
}

/// Random scenario with every bin populated and one target per bin.
pub fn generate_scenario(
    catalog: &Catalog,
    constraints: &GenConstraints,
    seed: u64,
) -> Result<ScenarioSpec, WorldError> {
    let pool: Vec<&ItemSpec> = catalog
        .items()
        .iter()
        .filter(|i| constraints.size_class.admits(i))
        .collect();
    if constraints.min_items == 0 || constraints.min_items > constraints.max_items {
        return Err(WorldError::InvalidScenario("item count range is empty".into()));
    }
    if pool.len() < constraints.min_items {
        return Err(WorldError::InvalidScenario("not enough distinct items for the constraints".into()));
    }
    let shelf = ShelfModel::nominal();
    let mut rng = rng_from(derive_seed(seed, "gen"));
    let mut bin_contents = BTreeMap::new();
    let mut work_order = Vec::new();
    for bin in BinId::all() {
        let mut placed = None;
        for _ in 0..100 {
            let hi = constraints.max_items.min(pool.len());
            let n = rng.random_range(constraints.min_items..=hi);
            let picks: Vec<&ItemSpec> = pool.choose_multiple(&mut rng, n).copied().collect();
            let items: Vec<_> = picks.iter().map(|i| (*i, None)).collect();
            let mut probe = rng_from(rng.random());
            let feasible = (0..200).any(|_| sample_bin(&shelf, bin, &items, &mut probe).is_some());
            if feasible {
                placed = Some(picks);
                break;
            }
        }
        let picks = placed.ok_or(WorldError::PlacementInfeasible {
            bin,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        let target = picks.choose(&mut rng).expect("non-empty").sku.clone();
        bin_contents.insert(bin, picks.iter().map(|i| i.sku.clone()).collect());
        work_order.push(WorkOrderEntry { bin, item: target });
    }
    Ok(ScenarioSpec {
        bin_contents,
        work_order,
        bonus: BTreeMap::new(),
        shelf: None,
        placements: Vec::new(),
    })
}
