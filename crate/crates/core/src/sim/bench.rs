//! Seeded sweeps over obstacle or target counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::episode::{run_episode_with_map, EpisodeSummary, Outcome, SimError, Summary3};
use crate::exec::Workers;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Obstacles,
    Targets,
}

impl SweepAxis {
    fn apply(self, s: &mut Scenario, value: usize) {
        match self {
            SweepAxis::Obstacles => s.obstacles.count = value,
            SweepAxis::Targets => s.targets.count = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEpisode {
    pub value: usize,
    pub index: usize,
    pub seed: u64,
    pub summary: EpisodeSummary,
}

/// Aggregate over the episodes of one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub value: usize,
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub occlusions: usize,
    pub degraded: usize,
    pub success_rate: f64,
    /// Mean over all cycles of all episodes.
    pub cycle_ms_mean: f64,
    pub cycle_ms_max: f64,
    /// Smallest per-episode minimum, step-weighted mean, largest maximum.
    pub chi: Summary3,
    pub phi: Summary3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub axis: SweepAxis,
    pub base_seed: u64,
    pub episodes_per_value: usize,
    pub rows: Vec<BenchRow>,
    pub episodes: Vec<BenchEpisode>,
}

impl BenchRow {
    fn aggregate(value: usize, eps: &[&BenchEpisode]) -> Self {
        let count = |o: Outcome| eps.iter().filter(|e| e.summary.outcome == o).count();
        let cycles: usize = eps.iter().map(|e| e.summary.cycles).sum();
        let steps: usize = eps.iter().map(|e| e.summary.steps).sum();
        let weighted = |f: &dyn Fn(&EpisodeSummary) -> f64, w: &dyn Fn(&EpisodeSummary) -> usize, total: usize| {
            if total == 0 {
                0.0
            } else {
                eps.iter().map(|e| f(&e.summary) * w(&e.summary) as f64).sum::<f64>() / total as f64
            }
        };
        let metric = |pick: &dyn Fn(&EpisodeSummary) -> Summary3| Summary3 {
            min: eps.iter().map(|e| pick(&e.summary).min).fold(f64::INFINITY, f64::min),
            mean: weighted(&|s| pick(s).mean, &|s| s.steps, steps),
            max: eps.iter().map(|e| pick(&e.summary).max).fold(f64::NEG_INFINITY, f64::max),
        };
        let successes = count(Outcome::Success);
        Self {
            value,
            episodes: eps.len(),
            successes,
            collisions: count(Outcome::Collision),
            occlusions: count(Outcome::Occlusion),
            degraded: count(Outcome::Degraded),
            success_rate: if eps.is_empty() { 0.0 } else { successes as f64 / eps.len() as f64 },
            cycle_ms_mean: 1e3 * weighted(&|s| s.cycle_time_mean_s, &|s| s.cycles, cycles),
            cycle_ms_max: 1e3 * eps.iter().map(|e| e.summary.cycle_time_max_s).fold(0.0, f64::max),
            chi: metric(&|s| s.chi),
            phi: metric(&|s| s.phi),
        }
    }
}

impl BenchReport {
    /// Fixed-width table, one row per sweep value.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let label = match self.axis {
            SweepAxis::Obstacles => "obstacles",
            SweepAxis::Targets => "targets",
        };
        let _ = writeln!(
            out,
            "# {} sweep over {label}, {} episodes each, base seed {}",
            self.scenario, self.episodes_per_value, self.base_seed
        );
        let _ = writeln!(
            out,
            "{label:>9} {:>8} {:>9} {:>9} {:>9} {:>9} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "success",
            "collision",
            "occlusion",
            "degraded",
            "cycle_ms",
            "cycle_max",
            "chi_min",
            "chi_mean",
            "chi_max",
            "phi_min",
            "phi_mean",
            "phi_max",
            "episodes"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>9} {:>8.3} {:>9} {:>9} {:>9} {:>9.3} {:>10.3} {:>10.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8}",
                r.value,
                r.success_rate,
                r.collisions,
                r.occlusions,
                r.degraded,
                r.cycle_ms_mean,
                r.cycle_ms_max,
                r.chi.min,
                r.chi.mean,
                r.chi.max,
                r.phi.min,
                r.phi.mean,
                r.phi.max,
                r.episodes
            );
        }
        out
    }

    pub fn row(&self, value: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.value == value)
    }
}

/// Runs `episodes` seeded episodes for each value of `axis`.
///
/// Episode `k` uses the same seed for every value, so bodies shared between
/// values follow the same paths. Episodes run in parallel over `workers`,
/// each with a sequential planner.
pub fn bench_sweep(
    base: &Scenario,
    axis: SweepAxis,
    values: &[usize],
    episodes: usize,
    workers: &Workers,
) -> Result<BenchReport, SimError> {
    let mut scenarios = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = base.clone();
        axis.apply(&mut s, v);
        if let Some(e) = s.validate().first_failure() {
            return Err(e.into());
        }
        scenarios.push(s);
    }
    let map = base.build_map()?;
    let jobs: Vec<(usize, usize)> = (0..values.len()).flat_map(|v| (0..episodes).map(move |k| (v, k))).collect();
    let sequential = Workers::sequential();
    let results = workers.map(&jobs, |_, &(v, k)| {
        let mut s = scenarios[v].clone();
        // 63 bits so the seed stays a valid TOML integer
        s.seed = derive_seed(base.seed, 7, k as u64) >> 1;
        run_episode_with_map(&s, map.clone(), &sequential).map(|log| BenchEpisode {
            value: values[v],
            index: k,
            seed: s.seed,
            summary: log.summary,
        })
    });
    let episodes_out = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = values
        .iter()
        .map(|&v| {
            let eps: Vec<&BenchEpisode> = episodes_out.iter().filter(|e| e.value == v).collect();
            BenchRow::aggregate(v, &eps)
        })
        .collect();
    Ok(BenchReport {
        scenario: base.name.clone(),
        axis,
        base_seed: base.seed,
        episodes_per_value: episodes,
        rows,
        episodes: episodes_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_world_sweep_succeeds_and_totals_match() {
        let text = "schema = 1\nmode = \"2d\"\nseed = 2\n[bounds]\nmin = [-3.0, -3.0, 0.0]\nmax = [3.0, 3.0, 2.0]\n[timing]\nduration = 2.0\n[planner]\nsamples = 200\n";
        let s = Scenario::parse(text, &[]).unwrap();
        let report = bench_sweep(&s, SweepAxis::Obstacles, &[0], 3, &Workers::sequential()).unwrap();
        let row = report.row(0).unwrap();
        assert_eq!(row.success_rate, 1.0);
        assert_eq!(row.episodes, 3);
        let min_chi = report.episodes.iter().map(|e| e.summary.chi.min).fold(f64::INFINITY, f64::min);
        assert_eq!(row.chi.min, min_chi);
        assert!(report.to_table().lines().count() == 3);
    }
}
