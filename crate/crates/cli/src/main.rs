use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apcsim::catalog::Catalog;
use apcsim::data::{bundled_scenario, REPLAY_CONFIG_JSON};
use apcsim::heuristic::{run, HeuristicError, RunConfig, RunLog, WorkOrder};
use apcsim::rng::derive_seed;
use apcsim::scoring::{parse_event, score_run, ScoringError};
use apcsim::world::{generate_scenario, spawn, GenConstraints, ScenarioSpec, SizeClass, WorldError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use thiserror::Error;

mod report;

#[derive(Parser)]
#[command(name = "apcsim", version, about = "Shelf-picking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario.
    Gen(GenArgs),
    /// Run the task loop on a scenario.
    Run(RunArgs),
    /// Score a run log.
    Score(ScoreArgs),
    /// Run the bundled competition replay.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    min_items: usize,
    #[arg(long, default_value_t = 3)]
    max_items: usize,
    #[arg(long, value_enum, default_value_t = SizeArg::Any)]
    size_class: SizeArg,
    /// Item catalog; the bundled one by default.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Directory for scenario.json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SizeArg {
    Any,
    Small,
    Large,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file, `-` for stdin, or a bundled name (easy, apc2015_replay).
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for object placement; derived from --seed when absent.
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Directory for log and report files; the log goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of consecutive seeds to run, starting at --seed.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args)]
struct ScoreArgs {
    /// Run log file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    log: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<HeuristicError> for CliError {
    fn from(e: HeuristicError) -> Self {
        match e {
            HeuristicError::InconsistentOrder(_)
            | HeuristicError::StrategyTable(_)
            | HeuristicError::Config(_)
            | HeuristicError::Catalog(_) => CliError::Input(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn read_input(path: &str) -> Result<String, CliError> {
    if path == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Input(format!("stdin: {e}")))?;
        return Ok(s);
    }
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{path}: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn stdout(text: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| CliError::Internal(format!("stdout: {e}")))
}

fn load_catalog(path: &Option<PathBuf>) -> Result<Catalog, CliError> {
    match path {
        None => Ok(Catalog::bundled()),
        Some(p) => {
            let text = read_input(&p.to_string_lossy())?;
            Catalog::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec, CliError> {
    let text = if arg != "-" && !Path::new(arg).exists() {
        bundled_scenario(arg)
            .ok_or_else(|| CliError::Input(format!("{arg}: no such file or bundled scenario")))?
            .to_string()
    } else {
        read_input(arg)?
    };
    ScenarioSpec::from_json(&text).map_err(|e| CliError::Input(format!("{arg}: {e}")))
}

fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    let catalog = load_catalog(&a.catalog)?;
    let constraints = GenConstraints {
        min_items: a.min_items,
        max_items: a.max_items,
        size_class: match a.size_class {
            SizeArg::Any => SizeClass::Any,
            SizeArg::Small => SizeClass::Small,
            SizeArg::Large => SizeClass::Large,
        },
    };
    let s = generate_scenario(&catalog, &constraints, a.seed).map_err(|e| CliError::Input(e.to_string()))?;
    match &a.out {
        Some(dir) => write_file(&dir.join("scenario.json"), &s.to_json()),
        None => stdout(&s.to_json()),
    }
}

struct RunFiles {
    log: RunLog,
    report: report::RunReport,
}

fn run_one(scenario: &ScenarioSpec, catalog: &Catalog, config: &RunConfig, seed: u64, world_seed: u64) -> Result<RunFiles, CliError> {
    let world = spawn(scenario, catalog, derive_seed(world_seed, "world")).map_err(|e| match e {
        WorldError::UnknownInstance(_) => CliError::Internal(e.to_string()),
        other => CliError::Input(other.to_string()),
    })?;
    let order = WorkOrder::from_scenario(scenario);
    let (_, log, score) = run(&world, &order, config, seed)?;
    let report = report::build(&order, &log, score, world_seed);
    Ok(RunFiles { log, report })
}

fn cmd_run(a: &RunArgs, default_config: Option<&str>) -> Result<(), CliError> {
    if a.runs == 0 || a.parallel == 0 {
        return Err(CliError::Usage("--runs and --parallel must be positive".into()));
    }
    if a.runs > 1 && a.out.is_none() {
        return Err(CliError::Usage("--out is required with more than one run".into()));
    }
    let catalog = load_catalog(&a.catalog)?;
    let scenario = load_scenario(&a.scenario)?;
    let mut config = match (&a.config, default_config) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(text)) => RunConfig::from_json(text, Path::new("."))?,
        (None, None) => RunConfig::default(),
    };
    if let Some(b) = a.budget {
        if !(b >= 0.0) {
            return Err(CliError::Usage("--budget must be non-negative".into()));
        }
        config.budget_seconds = b;
    }

    let seeds: Vec<u64> = (0..a.runs).map(|i| a.seed.wrapping_add(i)).collect();
    let job = |seed: u64| {
        let world_seed = if a.runs == 1 { a.world_seed.unwrap_or(seed) } else { seed };
        run_one(&scenario, &catalog, &config, seed, world_seed).map(|f| (seed, f))
    };
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(a.parallel) {
        let done: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || job(seed))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Internal("run panicked".into()))))
                .collect()
        });
        results.extend(done);
    }

    for r in results {
        let (seed, files) = r?;
        match &a.out {
            Some(dir) => {
                write_file(&dir.join(format!("run_{seed}.log.json")), &files.log.to_json())?;
                write_file(&dir.join(format!("report_{seed}.json")), &files.report.to_json())?;
                write_file(&dir.join(format!("report_{seed}.txt")), &files.report.to_text())?;
            }
            None => {
                eprint!("{}", files.report.to_text());
                stdout(&files.log.to_json())?;
            }
        }
    }
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> Result<(), CliError> {
    let text = read_input(&a.log)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", a.log)))?;
    let raw = match &value {
        serde_json::Value::Array(v) => v.as_slice(),
        serde_json::Value::Object(o) => o
            .get("events")
            .and_then(|e| e.as_array())
            .map(Vec::as_slice)
            .ok_or_else(|| CliError::Input(format!("{}: no events array", a.log)))?,
        _ => return Err(CliError::Input(format!("{}: expected a run log", a.log))),
    };
    let events = raw
        .iter()
        .map(parse_event)
        .collect::<Result<Vec<_>, ScoringError>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", a.log)))?;
    stdout(&score_run(&events).to_json())
}

fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let args = RunArgs {
        scenario: "apc2015_replay".into(),
        config: None,
        seed: a.seed,
        world_seed: None,
        budget: None,
        catalog: None,
        out: a.out.clone(),
        runs: 1,
        parallel: 1,
    };
    cmd_run(&args, Some(REPLAY_CONFIG_JSON))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("APCSIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a, None),
        Command::Score(a) => cmd_score(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apcsim: {e}");
            ExitCode::from(e.code())
        }
    }
}
