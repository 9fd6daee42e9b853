use std::path::Path;

use apcsim::catalog::Catalog;
use apcsim::data::{EASY_SCENARIO_JSON, REPLAY_CONFIG_JSON, REPLAY_SCENARIO_JSON};
use apcsim::events::Event;
use apcsim::heuristic::{check_log, run, RunConfig, RunLog, WorkOrder};
use apcsim::planner::{segment_speeds, TCP_SPEED_LIMIT};
use apcsim::rng::derive_seed;
use apcsim::world::{generate_scenario, spawn, GenConstraints, ScenarioSpec};

fn run_scenario(spec: &ScenarioSpec, config: &RunConfig, seed: u64) -> RunLog {
    let catalog = Catalog::bundled();
    let world = spawn(spec, &catalog, derive_seed(seed, "world")).unwrap();
    run(&world, &WorkOrder::from_scenario(spec), config, seed).unwrap().1
}

fn assert_sound(log: &RunLog, config: &RunConfig) {
    let bad = check_log(log, config.max_attempts);
    assert!(bad.is_empty(), "{bad:?}");
    for e in &log.events {
        match &e.event {
            Event::Attempt { tcp, timestamps, .. } => {
                for v in segment_speeds(tcp, timestamps) {
                    assert!(v <= TCP_SPEED_LIMIT + 1e-9, "segment at {v} m/s");
                }
            }
            Event::ValidationFailed { duration, .. } => assert_eq!(*duration, config.planning_overhead),
            _ => {}
        }
    }
}

fn count(log: &RunLog, f: impl Fn(&Event) -> bool) -> usize {
    log.events.iter().filter(|e| f(&e.event)).count()
}

#[test]
fn easy_scenario_picks_on_every_seed() {
    let spec = ScenarioSpec::from_json(EASY_SCENARIO_JSON).unwrap();
    let config = RunConfig::default();
    for seed in 0..5 {
        let log = run_scenario(&spec, &config, seed);
        assert_sound(&log, &config);
        assert!(count(&log, |e| matches!(e, Event::Pick { target: true, .. })) >= 1);
    }
}

#[test]
fn replay_lands_near_the_competition_run() {
    let spec = ScenarioSpec::from_json(REPLAY_SCENARIO_JSON).unwrap();
    let config = RunConfig::from_json(REPLAY_CONFIG_JSON, Path::new(".")).unwrap();
    let log = run_scenario(&spec, &config, 0);
    assert_sound(&log, &config);
    let picks = count(&log, |e| matches!(e, Event::Pick { target: true, .. }));
    assert!((6..=8).contains(&picks), "{picks} picks");
    assert_eq!(count(&log, |e| matches!(e, Event::Damage { .. })), 1);
    let activity = log.final_clock - config.start_penalty;
    assert!((360.0..=480.0).contains(&activity), "{activity} s");
    assert_eq!(log.halted_by.as_deref(), Some("controller_stop"));
}

#[test]
fn generated_scenarios_run_soundly_and_repeatably() {
    let catalog = Catalog::bundled();
    let config = RunConfig::default();
    for seed in 1..4 {
        let spec = generate_scenario(&catalog, &GenConstraints::default(), seed).unwrap();
        let a = run_scenario(&spec, &config, seed);
        assert_sound(&a, &config);
        let b = run_scenario(&spec, &config, seed);
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.final_clock <= config.budget_seconds + 120.0);
    }
}

#[test]
fn helpers_are_followed_by_a_percept() {
    let spec = ScenarioSpec::from_json(REPLAY_SCENARIO_JSON).unwrap();
    let config = RunConfig::default();
    let mut helpers = 0;
    for seed in 0..4 {
        let log = run_scenario(&spec, &config, seed);
        assert_sound(&log, &config);
        for (i, e) in log.events.iter().enumerate() {
            let Event::Attempt { primitive, bin, target, .. } = &e.event else { continue };
            if !primitive.is_helper() {
                continue;
            }
            helpers += 1;
            let next = log.events[i + 1..].iter().find(|n| match &n.event {
                Event::Attempt { bin: b, target: t, .. } | Event::Percept { bin: b, target: t, .. } => b == bin && t == target,
                _ => false,
            });
            if let Some(n) = next {
                assert!(matches!(n.event, Event::Percept { .. }), "helper at {} not followed by a percept", e.id);
            }
        }
    }
    assert!(helpers > 0, "no helper primitive was exercised");
}
