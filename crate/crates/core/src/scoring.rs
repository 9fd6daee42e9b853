//! Competition scoring of run logs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{Event, LoggedEvent};
use crate::world::DROP_PENALTY_HEIGHT;

pub const DAMAGE_PENALTY: i64 = -5;
pub const TARGET_DROP_PENALTY: i64 = -3;
pub const NON_TARGET_DROP_PENALTY: i64 = -12;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("unknown event kind {0:?}")]
    UnknownEventKind(String),
    #[error("malformed event: {0}")]
    Malformed(String),
}

/// Points for a target pick from a bin holding `clutter` items.
pub fn score_pick(clutter: usize, bonus: u32) -> i64 {
    let base = match clutter {
        0 | 1 => 10,
        2 => 15,
        _ => 20,
    };
    base + i64::from(bonus)
}

/// Points contributed by one event. Picks of anything but the order's
/// target score nothing.
pub fn score_event(event: &Event) -> i64 {
    match event {
        Event::Pick {
            clutter,
            bonus,
            target: true,
            ..
        } => score_pick(*clutter, *bonus),
        Event::Damage { .. } => DAMAGE_PENALTY,
        Event::Drop { height, target, .. } if *height > DROP_PENALTY_HEIGHT => {
            if *target {
                TARGET_DROP_PENALTY
            } else {
                NON_TARGET_DROP_PENALTY
            }
        }
        _ => 0,
    }
}

/// Parse one raw log entry, rejecting kinds the scorer does not know.
pub fn parse_event(value: &serde_json::Value) -> Result<LoggedEvent, ScoringError> {
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| ScoringError::Malformed("missing kind".into()))?;
    if !Event::KINDS.contains(&kind) {
        return Err(ScoringError::UnknownEventKind(kind.to_string()));
    }
    serde_json::from_value(value.clone()).map_err(|e| ScoringError::Malformed(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub event: usize,
    pub points: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Every scoring event in log order. Zero-point events are left out.
    pub deltas: Vec<ScoreDelta>,
    /// Base pick points without bonuses.
    pub picks_points: i64,
    pub damage_penalty: i64,
    pub drop_penalty: i64,
    pub bonus_points: i64,
    pub total: i64,
}

impl ScoreBreakdown {
    fn add(&mut self, e: &LoggedEvent) {
        let points = score_event(&e.event);
        if points == 0 {
            return;
        }
        match &e.event {
            Event::Pick { bonus, .. } => {
                self.bonus_points += i64::from(*bonus);
                self.picks_points += points - i64::from(*bonus);
            }
            Event::Damage { .. } => self.damage_penalty += points,
            Event::Drop { .. } => self.drop_penalty += points,
            _ => {}
        }
        self.total += points;
        self.deltas.push(ScoreDelta { event: e.id, points });
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }
}

pub fn score_run(events: &[LoggedEvent]) -> ScoreBreakdown {
    let mut b = ScoreBreakdown::default();
    for e in events {
        b.add(e);
    }
    b
}
