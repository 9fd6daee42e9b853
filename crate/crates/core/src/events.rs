//! Run-log events shared by the world, the task loop and scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::BinId;

/// Why a pick attempt ended the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Ok,
    FingerOpeningMismatch,
    NoVacuumSeal,
    BlockHeightMismatch,
    CollisionAbort,
    /// A helper push left the object where it was.
    NoEffect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Percept,
    Grasp,
    Scoop,
    Suction,
    Topple,
    PushRotate,
}

impl PrimitiveKind {
    pub fn is_helper(self) -> bool {
        matches!(self, PrimitiveKind::Topple | PrimitiveKind::PushRotate)
    }

    pub fn picks(self) -> bool {
        matches!(self, PrimitiveKind::Grasp | PrimitiveKind::Scoop | PrimitiveKind::Suction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Percept {
        bin: BinId,
        target: String,
        viewpoint: usize,
        shots: usize,
        camera_counts: BTreeMap<String, usize>,
        success: bool,
        duration: f64,
        /// Path to the viewpoint, as in `Attempt`.
        #[serde(default)]
        tcp: Vec<[f64; 3]>,
        #[serde(default)]
        timestamps: Vec<f64>,
    },
    Attempt {
        bin: BinId,
        target: String,
        primitive: PrimitiveKind,
        attempt: usize,
        /// Tool-point positions and their timestamps, relative to the start
        /// of the attempt.
        tcp: Vec<[f64; 3]>,
        timestamps: Vec<f64>,
    },
    ValidationFailed {
        bin: BinId,
        target: String,
        primitive: PrimitiveKind,
        reason: String,
        /// Planning time spent before the plan was rejected.
        duration: f64,
    },
    Outcome {
        bin: BinId,
        target: String,
        primitive: PrimitiveKind,
        success: bool,
        feedback: Feedback,
        duration: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        suction_attempts: Option<usize>,
    },
    Pick {
        bin: BinId,
        sku: String,
        instance: u32,
        clutter: usize,
        bonus: u32,
        target: bool,
    },
    Drop {
        bin: BinId,
        sku: String,
        height: f64,
        target: bool,
    },
    Damage {
        bin: BinId,
        sku: String,
    },
    Skip {
        bin: BinId,
        target: String,
        reason: String,
    },
    Fault {
        fault: String,
        /// Activity time of the interrupted action up to the fault.
        duration: f64,
    },
    Penalty {
        seconds: f64,
    },
}

impl Event {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Event::Percept { .. } => "percept",
            Event::Attempt { .. } => "attempt",
            Event::ValidationFailed { .. } => "validation_failed",
            Event::Outcome { .. } => "outcome",
            Event::Pick { .. } => "pick",
            Event::Drop { .. } => "drop",
            Event::Damage { .. } => "damage",
            Event::Skip { .. } => "skip",
            Event::Fault { .. } => "fault",
            Event::Penalty { .. } => "penalty",
        }
    }

    /// Clock time the event accounts for. Penalties are reported separately.
    pub fn duration(&self) -> f64 {
        match self {
            Event::Percept { duration, .. }
            | Event::ValidationFailed { duration, .. }
            | Event::Outcome { duration, .. }
            | Event::Fault { duration, .. } => *duration,
            _ => 0.0,
        }
    }

    pub fn penalty(&self) -> f64 {
        match self {
            Event::Penalty { seconds } => *seconds,
            _ => 0.0,
        }
    }

    pub const KINDS: [&'static str; 10] = [
        "percept",
        "attempt",
        "validation_failed",
        "outcome",
        "pick",
        "drop",
        "damage",
        "skip",
        "fault",
        "penalty",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub id: usize,
    /// Simulated clock in seconds when the event was recorded.
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}
