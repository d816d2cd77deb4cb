//! `chaser`: run predictions, single plans, episodes and benchmark sweeps
//! from scenario files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chaser_core::exec::Workers;
use chaser_core::planner::yaw_reference;
use chaser_core::scenario::{ConfigError, Scenario};
use chaser_core::sim::{bench_sweep, run_episode, Outcome, SimError, Snapshot, SweepAxis};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "chaser", version, about = "Sample-check-select drone chase planner and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict every target from the scenario's initial state.
    Predict(Common),
    /// Plan one chase trajectory from the scenario's initial state.
    Plan(Common),
    /// Run one closed-loop episode.
    Simulate(Common),
    /// Sweep obstacle (or target) counts over seeded episodes.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated counts to sweep.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        /// Episodes per count.
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Which count the sweep varies.
        #[arg(long, value_enum, default_value_t = Axis::Obstacles)]
        axis: Axis,
    },
    /// Check a scenario against every rule and print the results.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replaces the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Override any scenario field, e.g. `--set planner.samples=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Axis {
    Obstacles,
    Targets,
}

enum Failure {
    /// Ran, but the result is not a success.
    Outcome(String),
    Config(ConfigError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Config(c),
            other => Failure::Config(ConfigError::new("out", other.to_string())),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Outcome(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

impl Common {
    fn load(&self) -> Result<Scenario, ConfigError> {
        let mut s = Scenario::load(&self.scenario, &self.overrides)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn workers(&self) -> Result<Workers, ConfigError> {
        if self.workers == 0 {
            return Err(ConfigError::new("workers", "must be at least 1"));
        }
        Workers::new(self.workers).map_err(|e| ConfigError::new("workers", e.to_string()))
    }

    fn out_dir(&self) -> Result<&Path, ConfigError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| ConfigError::new("out", format!("cannot create {}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ConfigError> {
    fs::write(path, contents).map_err(|e| ConfigError::new("out", format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ConfigError> {
    let text = serde_json::to_string_pretty(value).expect("serializable output");
    write(path, &text)
}

fn write_csv<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<(), ConfigError> {
    let err = |e: csv::Error| ConfigError::new("out", format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush()
        .map_err(|e| ConfigError::new("out", format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { scenario, overrides } => validate(&scenario, &overrides),
        Command::Predict(c) => predict_cmd(&c),
        Command::Plan(c) => plan_cmd(&c),
        Command::Simulate(c) => simulate_cmd(&c),
        Command::Bench {
            common,
            counts,
            episodes,
            axis,
        } => bench_cmd(&common, &counts, episodes, axis),
    }
}

fn validate(path: &Path, overrides: &[String]) -> Result<(), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new("scenario", format!("cannot read {}: {e}", path.display())))?;
    let mut s = Scenario::parse(&text, overrides)?;
    s.base_dir = path.parent().map(Path::to_path_buf);
    let report = s.validate();
    for c in &report.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("{mark} {} [{}]: {}", c.rule, c.field, c.detail);
    }
    match report.first_failure() {
        None => Ok(()),
        Some(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct PredictionEntry {
    target: usize,
    state: chaser_core::predictor::TargetState,
    prediction: Option<chaser_core::predictor::TargetPrediction>,
    error: Option<String>,
}

fn predict_cmd(c: &Common) -> Result<(), Failure> {
    let scenario = c.load()?;
    let workers = c.workers()?;
    let out = c.out_dir()?;
    let snap = Snapshot::initial(&scenario)?;
    let preds = snap.predict(&scenario, &workers);
    let entries: Vec<PredictionEntry> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| PredictionEntry {
            target: i,
            state: snap.targets[i],
            prediction: p.as_ref().ok().cloned(),
            error: p.as_ref().err().map(ToString::to_string),
        })
        .collect();
    write_json(&out.join("prediction.json"), &entries)?;
    let mut failed = 0;
    for e in &entries {
        match (&e.prediction, &e.error) {
            (Some(p), _) => println!(
                "target {}: kept {} of {} primitives, selected {}",
                e.target, p.sample_count_accepted, p.sampled, p.selected
            ),
            (None, Some(err)) => {
                failed += 1;
                println!("target {}: no prediction ({err})", e.target);
            }
            _ => {}
        }
    }
    if failed > 0 {
        return Err(Failure::Outcome(format!("{failed} target(s) without a prediction")));
    }
    Ok(())
}

#[derive(Serialize)]
struct YawRow {
    t: f64,
    yaw: f64,
}

fn plan_cmd(c: &Common) -> Result<(), Failure> {
    let scenario = c.load()?;
    let workers = c.workers()?;
    let out = c.out_dir()?;
    let snap = Snapshot::initial(&scenario)?;
    let preds = snap.predict(&scenario, &workers);
    let forecasts = snap.forecasts(&scenario, &preds);
    let plan = snap.plan(&scenario, &forecasts, &workers);
    write_json(&out.join("plan.json"), &plan)?;
    let yaw = yaw_reference(&plan, &forecasts, 100);
    write_csv(&out.join("yaw.csv"), yaw.iter().map(|&(t, yaw)| YawRow { t, yaw }))?;
    println!(
        "{:?}: {} of {} primitives feasible, score {:.6}, {:.3} ms",
        plan.status,
        plan.stats.feasible,
        plan.stats.sampled,
        plan.score,
        plan.stats.elapsed_s * 1e3
    );
    if plan.is_degraded() {
        return Err(Failure::Outcome("planner degraded: emergency stop returned".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    chi: f64,
    phi: f64,
    plan_id: usize,
}

fn simulate_cmd(c: &Common) -> Result<(), Failure> {
    let scenario = c.load()?;
    let workers = c.workers()?;
    let out = c.out_dir()?;
    let log = run_episode(&scenario, &workers)?;
    log.save(&out.join("episode.jsonl"))?;
    write_json(&out.join("summary.json"), &log.summary)?;
    write_csv(
        &out.join("metrics.csv"),
        log.steps.iter().map(|s| MetricRow {
            t: s.t,
            x: s.drone.x,
            y: s.drone.y,
            z: s.drone.z,
            chi: s.chi,
            phi: s.phi,
            plan_id: s.plan_id,
        }),
    )?;
    let s = &log.summary;
    println!(
        "{:?} after {} steps: chi min/mean/max {:.3}/{:.3}/{:.3}, phi min/mean/max {:.3}/{:.3}/{:.3}, cycle {:.3} ms mean",
        s.outcome,
        s.steps,
        s.chi.min,
        s.chi.mean,
        s.chi.max,
        s.phi.min,
        s.phi.mean,
        s.phi.max,
        s.cycle_time_mean_s * 1e3
    );
    match s.outcome {
        Outcome::Success => Ok(()),
        other => Err(Failure::Outcome(format!(
            "episode ended with {other:?} at t = {:.2} s",
            s.failure_time.unwrap_or(0.0)
        ))),
    }
}

fn bench_cmd(c: &Common, counts: &[usize], episodes: usize, axis: Axis) -> Result<(), Failure> {
    if episodes == 0 {
        return Err(ConfigError::new("episodes", "must be at least 1").into());
    }
    let scenario = c.load()?;
    let workers = c.workers()?;
    let out = c.out_dir()?;
    let axis = match axis {
        Axis::Obstacles => SweepAxis::Obstacles,
        Axis::Targets => SweepAxis::Targets,
    };
    let report = bench_sweep(&scenario, axis, counts, episodes, &workers)?;
    write_json(&out.join("bench.json"), &report)?;
    let table = report.to_table();
    write(&out.join("bench.txt"), &table)?;
    print!("{table}");
    Ok(())
}
