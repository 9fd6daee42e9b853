//! Data files bundled into the library.

pub const CATALOG_JSON: &str = include_str!("../data/catalog.json");
pub const SHELF_NOMINAL_JSON: &str = include_str!("../data/shelf_nominal.json");
pub const STRATEGY_TABLE_JSON: &str = include_str!("../data/strategy_table.json");
pub const EASY_SCENARIO_JSON: &str = include_str!("../data/scenarios/easy.json");
pub const REPLAY_SCENARIO_JSON: &str = include_str!("../data/scenarios/apc2015_replay.json");
pub const REPLAY_CONFIG_JSON: &str = include_str!("../data/scenarios/apc2015_replay.config.json");

/// Bundled scenarios by name.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    match name {
        "easy" => Some(EASY_SCENARIO_JSON),
        "apc2015_replay" => Some(REPLAY_SCENARIO_JSON),
        _ => None,
    }
}
