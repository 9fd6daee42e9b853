use std::collections::BTreeMap;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_strategy, sort_order, HeuristicError, Selection, StrategyTable, WorkOrder};
use crate::events::{Event, LoggedEvent, PrimitiveKind};
use crate::perception::{estimate_scene, FitterConfig, PerceptionConfig, PerceptionError, SceneEstimate};
use crate::planner::{validate, ValidatedTrajectory, WorkspaceEnvelope};
use crate::primitives::{execute, plan_percept, plan_primitive, ExecConfig};
use crate::rng::derive_indexed;
use crate::scoring::{score_run, ScoreBreakdown};
use crate::world::{classify_pose, WorkOrderEntry, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    ControllerStop,
}

impl FaultKind {
    pub fn name(self) -> &'static str {
        match self {
            FaultKind::ControllerStop => "controller_stop",
        }
    }
}

/// A fault striking once `t` seconds of activity (clock minus penalties)
/// have elapsed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub t: f64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub budget_seconds: f64,
    pub max_attempts: usize,
    /// Clock time charged before the first action.
    pub start_penalty: f64,
    pub faults: Vec<FaultSpec>,
    /// Clock time spent on a plan that fails validation.
    pub planning_overhead: f64,
    pub noiseless_perception: bool,
    /// Replaces the default fitter error model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitter: Option<FitterConfig>,
    pub exec: ExecConfig,
    /// Path of a strategy table replacing the bundled one, relative to the
    /// config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_table: Option<String>,
    #[serde(skip)]
    pub table: StrategyTable,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            budget_seconds: 1200.0,
            max_attempts: 3,
            start_penalty: 0.0,
            faults: Vec::new(),
            planning_overhead: 0.5,
            noiseless_perception: false,
            fitter: None,
            exec: ExecConfig::default(),
            strategy_table: None,
            table: StrategyTable::bundled(),
        }
    }
}

impl RunConfig {
    /// Parse a config, resolving a strategy table path against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<RunConfig, HeuristicError> {
        let mut c: RunConfig = serde_json::from_str(text).map_err(|e| HeuristicError::Config(e.to_string()))?;
        if let Some(p) = &c.strategy_table {
            c.table = StrategyTable::load(base_dir.join(p))?;
        }
        if !(c.budget_seconds >= 0.0) || !(c.start_penalty >= 0.0) || !(c.planning_overhead >= 0.0) {
            return Err(HeuristicError::Config("times must be non-negative".into()));
        }
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, HeuristicError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HeuristicError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    /// SHA-256 of the initial world and the work order.
    pub scenario_hash: String,
    pub events: Vec<LoggedEvent>,
    pub final_clock: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted_by: Option<String>,
}

impl RunLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run log serializes")
    }

    pub fn from_json(text: &str) -> Result<RunLog, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn scenario_hash(world: &WorldState, order: &WorkOrder) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(order).expect("order serializes"));
    h.update(serde_json::to_vec(world).expect("world serializes"));
    hex::encode(h.finalize())
}

enum Interrupt {
    Halt,
    Error(HeuristicError),
}

impl<E: Into<HeuristicError>> From<E> for Interrupt {
    fn from(e: E) -> Self {
        Interrupt::Error(e.into())
    }
}

type Step<T> = Result<T, Interrupt>;

struct Runner<'a> {
    world: WorldState,
    config: &'a RunConfig,
    perception: PerceptionConfig,
    envelope: WorkspaceEnvelope,
    events: Vec<LoggedEvent>,
    seed: u64,
    draws: u64,
    halted_by: Option<String>,
}

impl Runner<'_> {
    fn emit(&mut self, event: Event) {
        debug!("t={:.2} {}", self.world.clock, event.kind_name());
        self.events.push(LoggedEvent {
            id: self.events.len(),
            t: self.world.clock,
            event,
        });
    }

    fn next_seed(&mut self, stream: &str) -> u64 {
        self.draws += 1;
        derive_indexed(self.seed, stream, self.draws)
    }

    fn activity(&self) -> f64 {
        self.world.clock - self.config.start_penalty
    }

    /// Advance the clock by `duration`, or up to a fault that strikes first.
    fn charge(&mut self, duration: f64) -> Step<()> {
        let activity = self.activity();
        let fault = self
            .config
            .faults
            .iter()
            .filter(|f| activity + duration > f.t)
            .min_by(|a, b| a.t.total_cmp(&b.t))
            .copied();
        if let Some(f) = fault {
            let partial = (f.t - activity).clamp(0.0, duration);
            self.world.advance_clock(partial);
            self.halted_by = Some(f.kind.name().to_string());
            info!("{} at {:.1} s of activity", f.kind.name(), self.activity());
            self.emit(Event::Fault {
                fault: f.kind.name().to_string(),
                duration: partial,
            });
            return Err(Interrupt::Halt);
        }
        self.world.advance_clock(duration);
        Ok(())
    }

    fn plan_failed(&mut self, entry: &WorkOrderEntry, primitive: PrimitiveKind, reason: String) -> Step<()> {
        debug!("{primitive:?} for {} rejected: {reason}", entry.item);
        let d = self.config.planning_overhead;
        self.charge(d)?;
        self.emit(Event::ValidationFailed {
            bin: entry.bin,
            target: entry.item.clone(),
            primitive,
            reason,
            duration: d,
        });
        Ok(())
    }

    fn validated(&self, plan: &crate::primitives::PrimitivePlan) -> Result<ValidatedTrajectory, String> {
        validate(plan, &self.world.shelf, &self.config.exec.gripper, &self.envelope).map_err(|e| e.to_string())
    }

    /// Move to the viewpoint, expose both cameras and estimate the scene.
    fn percept(&mut self, entry: &WorkOrderEntry, viewpoint: usize) -> Step<Option<SceneEstimate>> {
        let plan = plan_percept(&self.world.shelf, entry.bin, &entry.item);
        let traj = match self.validated(&plan) {
            Ok(t) => t,
            Err(reason) => {
                self.plan_failed(entry, PrimitiveKind::Percept, reason)?;
                return Ok(None);
            }
        };
        let exec_seed = self.next_seed("exec");
        let (_, outcome) = execute(&self.world, &traj, &self.config.exec, exec_seed)?;
        self.charge(outcome.duration)?;
        let seed = self.next_seed("percept");
        let estimate = match estimate_scene(&self.world, entry.bin, &entry.item, &self.perception, viewpoint, seed) {
            Ok(e) => Some(e),
            Err(PerceptionError::PerceptionFailed { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let (shots, camera_counts) = match &estimate {
            Some(e) => (e.shots_used, e.per_camera_counts.clone()),
            None => (0, BTreeMap::new()),
        };
        self.emit(Event::Percept {
            bin: entry.bin,
            target: entry.item.clone(),
            viewpoint,
            shots,
            camera_counts,
            success: estimate.is_some(),
            duration: outcome.duration,
            tcp: traj.tcp_positions(),
            timestamps: traj.timestamps.clone(),
        });
        Ok(estimate)
    }

    fn skip(&mut self, entry: &WorkOrderEntry, reason: &str) {
        info!("skipping {} in {}: {reason}", entry.item, entry.bin);
        self.emit(Event::Skip {
            bin: entry.bin,
            target: entry.item.clone(),
            reason: reason.to_string(),
        });
    }

    fn item(&mut self, entry: &WorkOrderEntry) -> Step<()> {
        let catalog = self.world.catalog_arc();
        let item = catalog.get(&entry.item)?;
        let gripper = self.config.exec.gripper.clone();
        let mut attempts = 0;
        let mut viewpoint = 0;
        let mut cursors = BTreeMap::new();
        let mut estimate: Option<SceneEstimate> = None;
        loop {
            if self.world.clock >= self.config.budget_seconds {
                return Ok(());
            }
            if attempts >= self.config.max_attempts {
                self.skip(entry, "attempts exhausted");
                return Ok(());
            }
            let est = match estimate.take() {
                Some(e) => e,
                None => match self.percept(entry, viewpoint)? {
                    Some(e) => e,
                    None => {
                        attempts += 1;
                        viewpoint = 1;
                        continue;
                    }
                },
            };
            let shelf_pose = self.world.shelf.world_pose.inverse().compose(&est.target_pose());
            let pose_type = classify_pose(&self.world.shelf, entry.bin, item, &shelf_pose, &gripper);
            let cursor = cursors.entry(pose_type).or_insert(0usize);
            let strategy = match select_strategy(pose_type, item, *cursor, &self.config.table) {
                Selection::Run(s) => s,
                Selection::Skip => {
                    self.skip(entry, &format!("no strategy left for {pose_type:?}"));
                    return Ok(());
                }
            };
            *cursor += 1;
            debug!("{} is {pose_type:?}; trying {strategy:?}", entry.item);

            let mut counted = false;
            let mut current = Some(est);
            for step in strategy {
                let Some(est) = current.take() else { break };
                if step == PrimitiveKind::Percept {
                    if !counted {
                        attempts += 1;
                        counted = true;
                    }
                    current = self.percept(entry, viewpoint)?;
                    if current.is_none() {
                        attempts += 1;
                        viewpoint = 1;
                    }
                    continue;
                }
                let traj = match plan_primitive(step, &est, &self.world, &gripper) {
                    Ok(plan) => self.validated(&plan),
                    Err(e) => Err(e.to_string()),
                };
                let traj = match traj {
                    Ok(t) => t,
                    Err(reason) => {
                        self.plan_failed(entry, step, reason)?;
                        current = Some(est);
                        break;
                    }
                };
                if !counted {
                    attempts += 1;
                    counted = true;
                }
                self.emit(Event::Attempt {
                    bin: entry.bin,
                    target: entry.item.clone(),
                    primitive: step,
                    attempt: attempts,
                    tcp: traj.tcp_positions(),
                    timestamps: traj.timestamps.clone(),
                });
                let exec_seed = self.next_seed("exec");
                let (next, outcome) = execute(&self.world, &traj, &self.config.exec, exec_seed)?;
                self.charge(outcome.duration)?;
                let changed = next.objects != self.world.objects;
                self.world.objects = next.objects;
                self.world.removed = next.removed;
                self.emit(Event::Outcome {
                    bin: entry.bin,
                    target: entry.item.clone(),
                    primitive: step,
                    success: outcome.success,
                    feedback: outcome.feedback,
                    duration: outcome.duration,
                    suction_attempts: outcome.suction_attempts,
                });
                let picked_target = outcome
                    .events
                    .iter()
                    .any(|e| matches!(e, Event::Pick { target: true, .. }));
                for e in outcome.events {
                    self.emit(e);
                }
                if picked_target {
                    info!("picked {} from {} at {:.1} s", entry.item, entry.bin, self.world.clock);
                    return Ok(());
                }
                if step.is_helper() {
                    // The following percept sees whatever the push did.
                    current = Some(est);
                    continue;
                }
                // A failed pick that changed nothing leaves the estimate usable.
                current = (!changed).then_some(est);
                break;
            }
            estimate = current;
        }
    }
}

/// Work through the order easiest first until it is exhausted, the clock
/// reaches the budget, or a scripted fault strikes.
pub fn run(
    world: &WorldState,
    order: &WorkOrder,
    config: &RunConfig,
    seed: u64,
) -> Result<(WorldState, RunLog, ScoreBreakdown), HeuristicError> {
    order.validate()?;
    for e in &order.entries {
        if world.find(e.bin, &e.item).is_empty() {
            return Err(HeuristicError::InconsistentOrder(format!("{} is not in {}", e.item, e.bin)));
        }
    }
    let sorted = sort_order(order, world.catalog())?;
    let mut perception = if config.noiseless_perception {
        PerceptionConfig::noiseless(&world.shelf)
    } else {
        PerceptionConfig::standard(&world.shelf)
    };
    if let Some(f) = &config.fitter {
        perception.fitter = f.clone();
    }
    let mut r = Runner {
        world: world.clone(),
        config,
        perception,
        envelope: WorkspaceEnvelope::for_shelf(&world.shelf),
        events: Vec::new(),
        seed,
        draws: 0,
        halted_by: None,
    };
    if config.budget_seconds > 0.0 && config.start_penalty > 0.0 {
        r.world.advance_clock(config.start_penalty);
        r.emit(Event::Penalty {
            seconds: config.start_penalty,
        });
    }
    for entry in &sorted {
        if r.world.clock >= config.budget_seconds {
            break;
        }
        match r.item(entry) {
            Ok(()) => {}
            Err(Interrupt::Halt) => break,
            Err(Interrupt::Error(e)) => return Err(e),
        }
    }
    let score = score_run(&r.events);
    let log = RunLog {
        seed,
        scenario_hash: scenario_hash(world, order),
        events: r.events,
        final_clock: r.world.clock,
        halted_by: r.halted_by,
    };
    Ok((r.world, log, score))
}

/// Log properties every run must satisfy; returns one message per violation.
pub fn check_log(log: &RunLog, max_attempts: usize) -> Vec<String> {
    let mut bad = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    let mut clock = 0.0;
    let mut last_success: Option<bool> = None;
    let mut attempts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut awaiting_percept: BTreeMap<(String, String), bool> = BTreeMap::new();
    for e in &log.events {
        if e.t < last_t {
            bad.push(format!("event {} goes back in time", e.id));
        }
        last_t = e.t;
        clock += e.event.duration() + e.event.penalty();
        match &e.event {
            Event::Outcome { success, .. } => last_success = Some(*success),
            Event::Pick { .. } if last_success != Some(true) => {
                bad.push(format!("pick {} without a successful outcome", e.id));
            }
            Event::Attempt {
                bin,
                target,
                primitive,
                attempt,
                ..
            } => {
                let key = (bin.to_string(), target.clone());
                let n = attempts.entry(key.clone()).or_default();
                *n = (*n).max(*attempt);
                if *n > max_attempts {
                    bad.push(format!("{} in {} exceeds {max_attempts} attempts", target, bin));
                }
                if primitive.picks() && awaiting_percept.get(&key).copied().unwrap_or(false) {
                    bad.push(format!("pick attempt {} follows a helper without a percept", e.id));
                }
                awaiting_percept.insert(key, primitive.is_helper());
                last_success = None;
            }
            Event::Percept { bin, target, .. } => {
                awaiting_percept.insert((bin.to_string(), target.clone()), false);
            }
            _ => {}
        }
    }
    if (clock - log.final_clock).abs() > 1e-6 {
        bad.push(format!("event durations sum to {clock}, final clock is {}", log.final_clock));
    }
    bad
}
