//! Task-level loop: order ingestion, difficulty ordering, strategy choice and
//! the percept → act → evaluate cycle.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{graspable_axes, Catalog, CatalogError, GripperSpec, ItemSpec, DEFAULT_GRASP_MARGIN};
use crate::data::STRATEGY_TABLE_JSON;
use crate::events::PrimitiveKind;
use crate::geometry::BinId;
use crate::perception::PerceptionError;
use crate::primitives::PrimitiveError;
use crate::world::{PoseType, ScenarioSpec, WorkOrderEntry, WorldError};

mod run;

pub use run::{check_log, run, scenario_hash, FaultKind, FaultSpec, RunConfig, RunLog};

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("work order does not match the world: {0}")]
    InconsistentOrder(String),
    #[error("strategy table: {0}")]
    StrategyTable(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkOrder {
    pub entries: Vec<WorkOrderEntry>,
    pub bin_contents: BTreeMap<BinId, Vec<String>>,
}

impl WorkOrder {
    pub fn from_scenario(s: &ScenarioSpec) -> WorkOrder {
        WorkOrder {
            entries: s.work_order.clone(),
            bin_contents: s.bin_contents.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), HeuristicError> {
        for e in &self.entries {
            if !self.bin_contents.get(&e.bin).is_some_and(|c| c.contains(&e.item)) {
                return Err(HeuristicError::InconsistentOrder(format!("{} is not listed in {}", e.item, e.bin)));
            }
        }
        Ok(())
    }
}

/// Lower sorts first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DifficultyKey {
    pub clutter: usize,
    pub weight: u32,
}

/// One point each for being deformable, reflective, or too large to grasp
/// across any axis.
pub fn item_weight(item: &ItemSpec, gripper: &GripperSpec) -> u32 {
    u32::from(item.deformable)
        + u32::from(item.reflective_packaging)
        + u32::from(graspable_axes(item, gripper, DEFAULT_GRASP_MARGIN).is_empty())
}

pub fn difficulty(
    entry: &WorkOrderEntry,
    bin_contents: &BTreeMap<BinId, Vec<String>>,
    catalog: &Catalog,
) -> Result<DifficultyKey, HeuristicError> {
    let item = catalog.get(&entry.item)?;
    Ok(DifficultyKey {
        clutter: bin_contents.get(&entry.bin).map_or(0, Vec::len),
        weight: item_weight(item, &GripperSpec::default()),
    })
}

/// Easiest first; equal keys go by bin, then keep their order.
pub fn sort_order(order: &WorkOrder, catalog: &Catalog) -> Result<Vec<WorkOrderEntry>, HeuristicError> {
    let mut keyed = order
        .entries
        .iter()
        .map(|e| Ok((difficulty(e, &order.bin_contents, catalog)?, e.clone())))
        .collect::<Result<Vec<_>, HeuristicError>>()?;
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.bin.cmp(&b.1.bin)));
    Ok(keyed.into_iter().map(|(_, e)| e).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemClass {
    Rigid,
    Deformable,
}

impl ItemClass {
    pub fn of(item: &ItemSpec) -> ItemClass {
        if item.deformable {
            ItemClass::Deformable
        } else {
            ItemClass::Rigid
        }
    }
}

pub type Strategy = Vec<PrimitiveKind>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Run(Strategy),
    Skip,
}

/// Prioritized strategies per pose type and item class.
///
/// A strategy ending in a helper push is followed by a percept; the loop then
/// re-classifies the object and picks again from the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyTable(pub BTreeMap<ItemClass, BTreeMap<PoseType, Vec<Strategy>>>);

impl StrategyTable {
    pub fn bundled() -> StrategyTable {
        StrategyTable::from_json(STRATEGY_TABLE_JSON).expect("bundled strategy table is valid")
    }

    pub fn from_json(text: &str) -> Result<StrategyTable, HeuristicError> {
        let t: StrategyTable = serde_json::from_str(text).map_err(|e| HeuristicError::StrategyTable(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StrategyTable, HeuristicError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HeuristicError::StrategyTable(format!("{}: {e}", path.display())))?;
        StrategyTable::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HeuristicError> {
        for class in [ItemClass::Rigid, ItemClass::Deformable] {
            for pt in PoseType::ALL {
                let list = self.0.get(&class).and_then(|m| m.get(&pt));
                let Some(list) = list.filter(|l| !l.is_empty()) else {
                    return Err(HeuristicError::StrategyTable(format!("no strategy for {class:?} {pt:?}")));
                };
                for s in list {
                    if s.is_empty() {
                        return Err(HeuristicError::StrategyTable(format!("empty strategy for {class:?} {pt:?}")));
                    }
                    for (i, k) in s.iter().enumerate() {
                        if k.is_helper() && s.get(i + 1) != Some(&PrimitiveKind::Percept) {
                            return Err(HeuristicError::StrategyTable(format!(
                                "{k:?} must be followed by a percept ({class:?} {pt:?})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn strategies(&self, pose_type: PoseType, class: ItemClass) -> &[Strategy] {
        self.0
            .get(&class)
            .and_then(|m| m.get(&pose_type))
            .map_or(&[], Vec::as_slice)
    }
}

impl Default for StrategyTable {
    fn default() -> Self {
        StrategyTable::bundled()
    }
}

pub fn select_strategy(pose_type: PoseType, item: &ItemSpec, attempt_index: usize, table: &StrategyTable) -> Selection {
    match table.strategies(pose_type, ItemClass::of(item)).get(attempt_index) {
        Some(s) => Selection::Run(s.clone()),
        None => Selection::Skip,
    }
}
