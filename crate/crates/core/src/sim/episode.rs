//! One closed-loop episode and its line-delimited log.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::metrics::{safety_metric, visibility_metric, Body};
use super::world::World;
use super::derive_seed;
use crate::bernstein::Curve3;
use crate::exec::Workers;
use crate::geometry::{MovingObstacle, OccupancyMap};
use crate::planner::{plan, ChasePlan, DroneState, PlanInput, PlanStatus, TrackedTarget};
use crate::predictor::{build_ncvm, predict, TargetState};
use crate::scenario::{ConfigError, Mode, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Occlusion,
    /// The planner was still offering only emergency stops when the episode
    /// ended.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub name: String,
    pub seed: u64,
    pub mode: Mode,
    pub dt: f64,
    pub replan_period: f64,
    pub horizon: f64,
    pub duration: f64,
    pub drone_radius: f64,
    pub obstacle_count: usize,
    pub target_count: usize,
    pub primitives: usize,
    /// The full scenario as TOML.
    pub scenario: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub index: usize,
    pub t: f64,
    pub plan_id: usize,
    pub status: PlanStatus,
    pub sampled: usize,
    pub feasible: usize,
    /// Rejections per check, in the planner's check order.
    pub rejected: [usize; 6],
    pub selected: Option<usize>,
    pub score: f64,
    pub corridor_error: Option<String>,
    /// Accepted prediction primitives per target; `None` where the
    /// prediction failed and a constant-velocity guess was used.
    pub prediction_accepted: Vec<Option<usize>>,
    pub predict_s: f64,
    pub plan_s: f64,
    pub cycle_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub drone: Vector3<f64>,
    pub drone_velocity: Vector3<f64>,
    pub drone_acceleration: Vector3<f64>,
    pub targets: Vec<Vector3<f64>>,
    pub obstacles: Vec<Vector3<f64>>,
    pub plan_id: usize,
    pub chi: f64,
    pub phi: f64,
}

/// Minimum, mean and maximum of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary3 {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary3 {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut n = 0usize;
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in values {
            n += 1;
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        (n > 0).then(|| Self {
            min,
            mean: sum / n as f64,
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub outcome: Outcome,
    /// Time of the step or cycle that decided a failed outcome.
    pub failure_time: Option<f64>,
    pub steps: usize,
    pub cycles: usize,
    pub planned_cycles: usize,
    pub reused_cycles: usize,
    pub degraded_cycles: usize,
    pub prediction_fallbacks: usize,
    pub chi: Summary3,
    pub phi: Summary3,
    pub cycle_time_mean_s: f64,
    pub cycle_time_max_s: f64,
    pub plan_time_mean_s: f64,
}

/// One line of the log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header(EpisodeHeader),
    Cycle(CycleRecord),
    Step(StepRecord),
    Summary(EpisodeSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub cycles: Vec<CycleRecord>,
    pub steps: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn outcome(&self) -> Outcome {
        self.summary.outcome
    }

    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut log = self.clone();
        for c in &mut log.cycles {
            c.predict_s = 0.0;
            c.plan_s = 0.0;
            c.cycle_s = 0.0;
        }
        log.summary.cycle_time_mean_s = 0.0;
        log.summary.cycle_time_max_s = 0.0;
        log.summary.plan_time_mean_s = 0.0;
        log
    }

    /// Header, then cycles and steps interleaved by time, then the summary.
    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = Vec::with_capacity(self.cycles.len() + self.steps.len() + 2);
        out.push(LogRecord::Header(self.header.clone()));
        let mut cycles = self.cycles.iter().peekable();
        for s in &self.steps {
            while let Some(c) = cycles.next_if(|c| c.t <= s.t) {
                out.push(LogRecord::Cycle(c.clone()));
            }
            out.push(LogRecord::Step(s.clone()));
        }
        out.extend(cycles.map(|c| LogRecord::Cycle(c.clone())));
        out.push(LogRecord::Summary(self.summary.clone()));
        out
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, SimError> {
        let (mut header, mut summary) = (None, None);
        let (mut cycles, mut steps) = (Vec::new(), Vec::new());
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line).map_err(|e| SimError::Log {
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec {
                LogRecord::Header(h) => header = Some(h),
                LogRecord::Cycle(c) => cycles.push(c),
                LogRecord::Step(s) => steps.push(s),
                LogRecord::Summary(s) => summary = Some(s),
            }
        }
        let missing = |what: &str| SimError::Log {
            line: 0,
            message: format!("no {what} record"),
        };
        Ok(Self {
            header: header.ok_or_else(|| missing("header"))?,
            cycles,
            steps,
            summary: summary.ok_or_else(|| missing("summary"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Builds the scenario's map and runs one episode.
pub fn run_episode(scenario: &Scenario, workers: &Workers) -> Result<EpisodeLog, SimError> {
    if let Some(e) = scenario.validate().first_failure() {
        return Err(e.into());
    }
    let map = scenario.build_map()?;
    run_episode_with_map(scenario, map, workers)
}

/// Runs one episode on a prebuilt map; the scenario must already be valid.
///
/// Each cycle snapshots the world, predicts every target, plans from the
/// active plan's state at that instant, then flies the new plan exactly for
/// one replan period while the world steps. The episode ends early at the
/// first collision or occlusion.
pub fn run_episode_with_map(scenario: &Scenario, map: OccupancyMap, workers: &Workers) -> Result<EpisodeLog, SimError> {
    let mut world = World::new(scenario, map)?;
    let timing = &scenario.timing;
    let dt = timing.dt;
    let horizon = timing.horizon;
    let steps_per_cycle = ((timing.replan_period / dt).round() as usize).max(1);
    let total_steps = (timing.duration / dt).round() as usize;
    let planner_params = scenario.planner_params();
    let predictor_params = scenario.predictor_params();
    let target_shape = world.target_shape();
    let obstacle_shape = world.obstacle_shape();
    let r_c = scenario.drone.radius;
    let kappa = scenario.predictor.kappa;
    let kappa_z = scenario.kappa_z();

    let header = EpisodeHeader {
        name: scenario.name.clone(),
        seed: scenario.seed,
        mode: scenario.mode,
        dt,
        replan_period: steps_per_cycle as f64 * dt,
        horizon,
        duration: total_steps as f64 * dt,
        drone_radius: r_c,
        obstacle_count: world.obstacles().len(),
        target_count: world.targets().len(),
        primitives: planner_params.samples,
        scenario: scenario.to_toml(),
    };

    let start = world.drone_start();
    let mut active = Curve3::stationary(start, 5, horizon).expect("positive horizon");
    let mut active_plan: Option<ChasePlan> = None;
    let mut active_since = 0usize;
    let mut plan_id = 0usize;
    let mut cycles = Vec::new();
    let mut steps = Vec::with_capacity(total_steps + 1);
    let mut degraded_run = 0usize;
    let mut fallbacks = 0usize;

    let score_step = |world: &World, t: f64, curve: &Curve3, local: f64, plan_id: usize| {
        let state = DroneState::on_curve(curve, local);
        let obstacles: Vec<Body> = world
            .obstacles()
            .iter()
            .map(|o| Body::new(o.position, obstacle_shape))
            .collect();
        let targets = world.targets();
        let target_bodies: Vec<Body> = targets.iter().map(|q| Body::new(q.position, target_shape)).collect();
        let target_points: Vec<Vector3<f64>> = targets.iter().map(|q| q.position).collect();
        let chi = safety_metric(&state.position, r_c, &obstacles, &target_bodies, world.map());
        let phi = visibility_metric(&state.position, &target_points, &obstacles, world.map());
        StepRecord {
            t,
            drone: state.position,
            drone_velocity: state.velocity,
            drone_acceleration: state.acceleration,
            targets: target_points,
            obstacles: obstacles.iter().map(|b| b.center).collect(),
            plan_id,
            chi,
            phi,
        }
    };

    let verdict = |r: &StepRecord| {
        if r.chi <= 0.0 {
            Some(Outcome::Collision)
        } else if r.phi <= 0.0 {
            Some(Outcome::Occlusion)
        } else {
            None
        }
    };
    let first = score_step(&world, 0.0, &active, 0.0, plan_id);
    let mut failure: Option<(Outcome, f64)> = verdict(&first).map(|o| (o, 0.0));
    steps.push(first);
    let mut step = 0usize;
    let mut cycle = 0usize;
    while step < total_steps && failure.is_none() {
        let t = step as f64 * dt;
        let began = Instant::now();
        let local = (step - active_since) as f64 * dt;
        let drone = DroneState::on_curve(&active, local);

        let obstacles: Vec<MovingObstacle> = world
            .obstacles()
            .iter()
            .map(|o| MovingObstacle::constant_velocity(o.position, o.velocity, obstacle_shape, horizon))
            .collect();
        let predict_began = Instant::now();
        let mut tracked = Vec::new();
        let mut accepted = Vec::new();
        for (i, q) in world.targets().iter().enumerate() {
            let s = TargetState::with_dispersion(q.position, q.velocity, kappa, kappa_z, horizon)
                .expect("finite target state");
            let seed = derive_seed(scenario.seed, 4, (cycle * 64 + i) as u64);
            let curve = match predict(&s, &target_shape, world.map(), &obstacles, &predictor_params, seed, workers) {
                Ok(p) => {
                    accepted.push(Some(p.sample_count_accepted));
                    p.curve
                }
                Err(e) => {
                    log::debug!("cycle {cycle}: prediction for target {i} failed ({e}); using constant velocity");
                    fallbacks += 1;
                    accepted.push(None);
                    let b = world.map().bounds();
                    build_ncvm(&s, &s.mean_terminal(horizon).sup(&b.min).inf(&b.max), horizon)
                }
            };
            tracked.push(TrackedTarget {
                curve,
                shape: target_shape,
            });
        }
        let predict_s = predict_began.elapsed().as_secs_f64();

        let input = PlanInput {
            drone,
            targets: &tracked,
            obstacles: &obstacles,
            map: world.map(),
        };
        let previous = active_plan.as_ref().map(|p| (p, local));
        let plan_began = Instant::now();
        let next = plan(
            &input,
            &planner_params,
            derive_seed(scenario.seed, 5, cycle as u64),
            workers,
            previous,
        );
        let plan_s = plan_began.elapsed().as_secs_f64();
        plan_id += 1;
        active = next.curve.clone();
        active_since = step;
        degraded_run = if next.is_degraded() { degraded_run + 1 } else { 0 };
        cycles.push(CycleRecord {
            index: cycle,
            t,
            plan_id,
            status: next.status,
            sampled: next.stats.sampled,
            feasible: next.stats.feasible,
            rejected: next.stats.rejected,
            selected: next.stats.selected,
            score: next.score,
            corridor_error: next.stats.corridor_error.clone(),
            prediction_accepted: accepted,
            predict_s,
            plan_s,
            cycle_s: began.elapsed().as_secs_f64(),
        });
        active_plan = Some(next);

        for _ in 0..steps_per_cycle {
            if step >= total_steps {
                break;
            }
            world.step(dt);
            step += 1;
            let rec = score_step(&world, step as f64 * dt, &active, (step - active_since) as f64 * dt, plan_id);
            let bad = verdict(&rec).map(|o| (o, rec.t));
            steps.push(rec);
            if bad.is_some() {
                failure = bad;
                break;
            }
        }
        cycle += 1;
    }
    if failure.is_none() && degraded_run > 0 {
        failure = Some((Outcome::Degraded, cycles.last().map_or(0.0, |c: &CycleRecord| c.t)));
    }

    let count = |s: PlanStatus| cycles.iter().filter(|c| c.status == s).count();
    let summary = EpisodeSummary {
        outcome: failure.map_or(Outcome::Success, |f| f.0),
        failure_time: failure.map(|f| f.1),
        steps: steps.len(),
        cycles: cycles.len(),
        planned_cycles: count(PlanStatus::Planned),
        reused_cycles: count(PlanStatus::Reused),
        degraded_cycles: count(PlanStatus::Degraded),
        prediction_fallbacks: fallbacks,
        chi: Summary3::of(steps.iter().map(|s| s.chi)).expect("at least the initial step"),
        phi: Summary3::of(steps.iter().map(|s| s.phi)).expect("at least the initial step"),
        cycle_time_mean_s: Summary3::of(cycles.iter().map(|c| c.cycle_s)).map_or(0.0, |s| s.mean),
        cycle_time_max_s: Summary3::of(cycles.iter().map(|c| c.cycle_s)).map_or(0.0, |s| s.max),
        plan_time_mean_s: Summary3::of(cycles.iter().map(|c| c.plan_s)).map_or(0.0, |s| s.mean),
    };
    Ok(EpisodeLog {
        header,
        cycles,
        steps,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(extra: &str) -> Scenario {
        let text = format!(
            "schema = 1\nmode = \"2d\"\nseed = 11\n[bounds]\nmin = [-3.0, -3.0, 0.0]\nmax = [3.0, 3.0, 2.0]\n[timing]\nduration = 3.0\n[planner]\nsamples = 300\n{extra}"
        );
        Scenario::parse(&text, &[]).unwrap()
    }

    #[test]
    fn static_target_in_empty_world_succeeds() {
        let s = scenario("[targets]\nmotion = \"static\"\nstart = [0.0, 0.0, 1.0]\n");
        let log = run_episode(&s, &Workers::sequential()).unwrap();
        assert_eq!(log.outcome(), Outcome::Success, "{:?}", log.summary);
        assert_eq!(log.steps.len(), 301);
        assert!(log.steps.iter().all(|r| r.chi > 0.0 && r.phi > 0.0));
        for (i, r) in log.steps.iter().enumerate() {
            assert!((r.t - i as f64 * 0.01).abs() < 1e-9);
        }
        let last = log.steps.last().unwrap();
        let d = (last.drone - last.targets[0]).norm();
        assert!(d > 0.4 && d < 1.2, "final distance {d}");
    }

    #[test]
    fn handoff_is_continuous() {
        let s = scenario("[obstacles]\ncount = 4\n");
        let log = run_episode(&s, &Workers::sequential()).unwrap();
        // consecutive steps straddling a replan differ by at most one step of motion
        for w in log.steps.windows(2) {
            let jump = (w[1].drone - w[0].drone).norm();
            assert!(jump <= 3.0 * 0.01 + 1e-9, "jump {jump} at {}", w[1].t);
        }
    }

    #[test]
    fn log_round_trips() {
        let s = scenario("[obstacles]\ncount = 3\n");
        let log = run_episode(&s, &Workers::sequential()).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let back = EpisodeLog::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn replay_is_identical() {
        let s = scenario("[obstacles]\ncount = 5\n");
        let a = run_episode(&s, &Workers::sequential()).unwrap();
        let b = run_episode(&s, &Workers::new(3).unwrap()).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
    }
}
