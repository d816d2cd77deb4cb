//! Closed-loop simulation: a seeded world of wandering bodies, a drone that
//! flies its active plan exactly, replanning on a fixed period, and the
//! safety and visibility metrics scored at every step.

mod bench;
mod episode;
mod metrics;
mod snapshot;
mod world;

pub use bench::{bench_sweep, BenchEpisode, BenchReport, BenchRow, SweepAxis};
pub use episode::{
    run_episode, run_episode_with_map, CycleRecord, EpisodeHeader, EpisodeLog, EpisodeSummary, LogRecord, Outcome,
    SimError, StepRecord, Summary3,
};
pub use metrics::{safety_metric, visibility_metric, Body, METRIC_CAP, SIGHT_SAMPLES};
pub use snapshot::Snapshot;
pub use world::{World, WorldBody};

/// Mixes a base seed with a stream and an index (splitmix64 finalizer), so
/// every consumer of randomness gets an independent, reproducible seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
