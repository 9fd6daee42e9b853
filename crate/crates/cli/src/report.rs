use std::fmt::Write as _;

use apcsim::events::{Event, PrimitiveKind};
use apcsim::heuristic::{RunLog, WorkOrder};
use apcsim::scoring::{score_event, ScoreBreakdown};
use apcsim::geometry::BinId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Picked,
    Skipped,
    /// Attempted, but the run ended first.
    Unfinished,
    NotReached,
}

impl ItemStatus {
    fn label(self) -> &'static str {
        match self {
            ItemStatus::Picked => "picked",
            ItemStatus::Skipped => "skipped",
            ItemStatus::Unfinished => "unfinished",
            ItemStatus::NotReached => "not reached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub bin: BinId,
    pub target: String,
    pub status: ItemStatus,
    pub attempts: usize,
    pub primitive: Option<PrimitiveKind>,
    pub points: i64,
}

/// Simulated time accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub final_clock: f64,
    pub penalty_seconds: f64,
    pub activity_seconds: f64,
    pub events: usize,
    pub attempts: usize,
    pub picks: usize,
    pub halted_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_hash: String,
    pub seed: u64,
    pub world_seed: u64,
    pub score: ScoreBreakdown,
    pub items: Vec<ItemRow>,
    pub stats: RunStats,
}

fn row(entry_bin: BinId, target: &str, log: &RunLog) -> ItemRow {
    let mut r = ItemRow {
        bin: entry_bin,
        target: target.to_string(),
        status: ItemStatus::NotReached,
        attempts: 0,
        primitive: None,
        points: 0,
    };
    let mut last = None;
    for e in &log.events {
        match &e.event {
            Event::Attempt {
                bin, target: t, primitive, attempt, ..
            } if *bin == entry_bin && t == target => {
                r.attempts = r.attempts.max(*attempt);
                last = Some(*primitive);
                if r.status == ItemStatus::NotReached {
                    r.status = ItemStatus::Unfinished;
                }
            }
            Event::Percept { bin, target: t, .. } if *bin == entry_bin && t == target => {
                if r.status == ItemStatus::NotReached {
                    r.status = ItemStatus::Unfinished;
                }
            }
            Event::Pick {
                bin, sku, target: true, ..
            } if *bin == entry_bin && sku == target => {
                r.status = ItemStatus::Picked;
                r.primitive = last;
                r.points += score_event(&e.event);
            }
            Event::Skip { bin, target: t, .. } if *bin == entry_bin && t == target => {
                r.status = ItemStatus::Skipped;
            }
            _ => {}
        }
    }
    r
}

pub fn build(order: &WorkOrder, log: &RunLog, score: ScoreBreakdown, world_seed: u64) -> RunReport {
    let items: Vec<ItemRow> = order.entries.iter().map(|e| row(e.bin, &e.item, log)).collect();
    let penalty: f64 = log.events.iter().map(|e| e.event.penalty()).sum();
    let count = |k: &str| log.events.iter().filter(|e| e.event.kind_name() == k).count();
    RunReport {
        scenario_hash: log.scenario_hash.clone(),
        seed: log.seed,
        world_seed,
        score,
        stats: RunStats {
            final_clock: log.final_clock,
            penalty_seconds: penalty,
            activity_seconds: log.final_clock - penalty,
            events: log.events.len(),
            attempts: count("attempt"),
            picks: items.iter().filter(|r| r.status == ItemStatus::Picked).count(),
            halted_by: log.halted_by.clone(),
        },
        items,
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}  seed {}  world seed {}", self.scenario_hash, self.seed, self.world_seed);
        let w = self.items.iter().map(|r| r.target.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "{:<6} {:<w$} {:<11} {:>8} {:<11} {:>6}", "bin", "target", "status", "attempts", "primitive", "points");
        for r in &self.items {
            let prim = r.primitive.map_or("-".to_string(), |p| format!("{p:?}").to_lowercase());
            let _ = writeln!(
                s,
                "{:<6} {:<w$} {:<11} {:>8} {:<11} {:>6}",
                r.bin.to_string(),
                r.target,
                r.status.label(),
                r.attempts,
                prim,
                r.points
            );
        }
        let b = &self.score;
        let _ = writeln!(
            s,
            "picks {}  bonus {}  damage {}  drop {}  total {}",
            b.picks_points, b.bonus_points, b.damage_penalty, b.drop_penalty, b.total
        );
        let st = &self.stats;
        let _ = writeln!(
            s,
            "clock {:.1} s  penalty {:.1} s  activity {:.1} s  picked {}/{}{}",
            st.final_clock,
            st.penalty_seconds,
            st.activity_seconds,
            st.picks,
            self.items.len(),
            st.halted_by.as_ref().map_or(String::new(), |h| format!("  halted by {h}"))
        );
        s
    }
}
