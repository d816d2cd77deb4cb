//! Chase planning: sample terminal points around the forecast targets, join
//! each to the drone state with a minimum-jerk quintic, certify every
//! constraint on the control points, and keep the cheapest survivor.

mod checks;
mod corridor;
mod sampling;

pub use checks::{
    check_collision, check_distance, check_dynamics, check_fov_pair, check_visibility, gaze_curve, score,
    smoothness_cost, spacing_cost, yaw_rate_terms, CheckKind, CycleContext, FovTerm, Outcome, PRIMITIVE_DEGREE,
};
pub use corridor::build_visible_safe_corridor;
pub use sampling::{build_minjerk, sample_shooting_terminals, spherical_offset};

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{Curve3, PolySegment};
use crate::exec::{argmin, Workers};
use crate::geometry::{CorridorConfig, CorridorSequence, Ellipsoid, GeometryError, MovingObstacle, OccupancyMap};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("corridor bisection fell below the minimum segment after t = {time}")]
    CorridorFloor { time: f64 },
    #[error("invalid planner parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> PlanError {
    PlanError::InvalidParam {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

impl DroneState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
        }
    }

    /// Position, velocity and acceleration of `c` at time `t`.
    pub fn on_curve(c: &Curve3, t: f64) -> Self {
        let v = c.derivative();
        let a = v.derivative();
        Self {
            position: c.value_at(t),
            velocity: v.value_at(t),
            acceleration: a.value_at(t),
        }
    }
}

/// Terminal sampling ranges around the anchor: radius, elevation, azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingShell {
    pub radius: [f64; 2],
    pub elevation: [f64; 2],
    pub azimuth: [f64; 2],
}

impl SamplingShell {
    pub fn new(radius: [f64; 2], elevation: [f64; 2], azimuth: [f64; 2]) -> Result<Self, PlanError> {
        let s = Self {
            radius,
            elevation,
            azimuth,
        };
        s.validate()?;
        Ok(s)
    }

    /// Radii 0.1 m inside the distance band, elevation up to 30 degrees,
    /// full azimuth.
    pub fn for_band(d_min: f64, d_max: f64) -> Self {
        let lo = d_min + 0.1;
        let hi = (d_max - 0.1).max(lo);
        Self {
            radius: [lo, hi],
            elevation: [0.0, std::f64::consts::FRAC_PI_6],
            azimuth: [0.0, std::f64::consts::TAU],
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(ok(self.radius) && self.radius[0] > 0.0) {
            return Err(invalid("radius", format!("need 0 < min <= max, got {:?}", self.radius)));
        }
        if !ok(self.elevation) {
            return Err(invalid("elevation", format!("need min <= max, got {:?}", self.elevation)));
        }
        if !ok(self.azimuth) {
            return Err(invalid("azimuth", format!("need min <= max, got {:?}", self.azimuth)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerLimits {
    pub d_min: f64,
    pub d_max: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
    /// Camera field of view in radians, in `(0, pi]`.
    pub fov: f64,
    pub drone_radius: f64,
}

impl PlannerLimits {
    /// Checks ranges and that `d_min` keeps the drone sphere off every target.
    pub fn validate(&self, target_shapes: &[Ellipsoid]) -> Result<(), PlanError> {
        let positive = [
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("yaw_rate_max", self.yaw_rate_max),
            ("drone_radius", self.drone_radius),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.d_max < self.d_min {
            return Err(invalid("d_max", format!("{} is below d_min {}", self.d_max, self.d_min)));
        }
        if !(self.fov > 0.0 && self.fov <= std::f64::consts::PI) {
            return Err(invalid("fov", format!("must lie in (0, pi], got {}", self.fov)));
        }
        for e in target_shapes {
            let need = e.max_finite_axis() + self.drone_radius;
            if self.d_min < need {
                return Err(invalid(
                    "d_min",
                    format!("{} is below the largest target semi-axis plus drone radius ({need})", self.d_min),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_a: f64,
    pub w_j: f64,
    pub d_des: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    pub horizon: f64,
    pub samples: usize,
    pub shell: SamplingShell,
    pub limits: PlannerLimits,
    pub weights: CostWeights,
    /// Extra radius given to moving obstacles in collision and sight checks.
    pub obstacle_margin: f64,
    pub corridor: CorridorConfig,
    pub check_order: Vec<CheckKind>,
    /// Shortest remaining horizon for which a previous plan may be reused.
    pub reuse_min_remaining: f64,
}

impl PlannerParams {
    pub fn validate(&self, target_shapes: &[Ellipsoid]) -> Result<(), PlanError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        self.shell.validate()?;
        self.limits.validate(target_shapes)?;
        if !(self.weights.w_a >= 0.0 && self.weights.w_j >= 0.0 && self.weights.d_des >= 0.0) {
            return Err(invalid("weights", "w_a, w_j and d_des must be nonnegative"));
        }
        if !(self.obstacle_margin >= 0.0) {
            return Err(invalid("obstacle_margin", "must be nonnegative"));
        }
        let mut seen = self.check_order.clone();
        seen.sort_by_key(|k| k.index());
        seen.dedup();
        if seen.len() != CheckKind::ALL.len() || self.check_order.len() != CheckKind::ALL.len() {
            return Err(invalid("check_order", "must list every check exactly once"));
        }
        Ok(())
    }
}

/// A forecast target as the planner sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedTarget {
    pub curve: Curve3,
    pub shape: Ellipsoid,
}

/// World snapshot for one planning cycle.
#[derive(Debug, Clone, Copy)]
pub struct PlanInput<'a> {
    pub drone: DroneState,
    pub targets: &'a [TrackedTarget],
    pub obstacles: &'a [MovingObstacle],
    pub map: &'a OccupancyMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    /// A fresh primitive passed every check.
    Planned,
    /// The previous plan's remainder passed every check again.
    Reused,
    /// Emergency stop; nothing is certified.
    Degraded,
}

/// Look-at yaw rate as a rational Bernstein function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YawRate {
    pub numerator: PolySegment,
    pub denominator: PolySegment,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub sampled: usize,
    pub feasible: usize,
    /// Rejections per check, indexed like [`CheckKind::ALL`].
    pub rejected: [usize; 6],
    pub selected: Option<usize>,
    pub corridor_error: Option<String>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChasePlan {
    pub curve: Curve3,
    /// One corridor chain per target; empty for a degraded plan.
    pub corridors: Vec<CorridorSequence>,
    pub score: f64,
    pub yaw_rate: YawRate,
    pub status: PlanStatus,
    pub stats: PlanStats,
}

impl ChasePlan {
    pub fn horizon(&self) -> f64 {
        self.curve.horizon()
    }

    pub fn is_degraded(&self) -> bool {
        self.status == PlanStatus::Degraded
    }
}

/// Mean of the targets' forecast end points.
pub fn terminal_anchor(targets: &[TrackedTarget]) -> Vector3<f64> {
    let sum: Vector3<f64> = targets.iter().map(|t| t.curve.end()).sum();
    sum / targets.len().max(1) as f64
}

fn yaw_for(c: &Curve3, targets: &[Curve3]) -> YawRate {
    let gaze = gaze_curve(targets);
    let gaze = if gaze.degree() < c.degree() {
        gaze.elevate(c.degree()).expect("raising degree")
    } else {
        gaze
    };
    let (numerator, denominator) = yaw_rate_terms(c, &gaze);
    YawRate { numerator, denominator }
}

fn build_context(
    input: &PlanInput<'_>,
    targets: &[TrackedTarget],
    obstacles: &[MovingObstacle],
    params: &PlannerParams,
) -> Result<CycleContext, PlanError> {
    let corridors = targets
        .iter()
        .map(|t| build_visible_safe_corridor(&input.drone.position, &t.curve, input.map, &params.corridor))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CycleContext::new(
        &input.drone.position,
        targets,
        corridors,
        obstacles,
        &params.limits,
        &params.weights,
        params.obstacle_margin,
        &params.check_order,
    ))
}

/// One planning cycle.
///
/// `previous` is the plan being flown and the time elapsed on it; when no
/// fresh primitive survives, its remainder is re-certified against the new
/// snapshot and reused, and failing that an emergency stop is returned.
pub fn plan(
    input: &PlanInput<'_>,
    params: &PlannerParams,
    seed: u64,
    workers: &Workers,
    previous: Option<(&ChasePlan, f64)>,
) -> ChasePlan {
    let started = Instant::now();
    let horizon = params.horizon;
    let mut stats = PlanStats::default();
    let target_curves: Vec<Curve3> = input.targets.iter().map(|t| t.curve.clone()).collect();
    if input.targets.is_empty() {
        stats.corridor_error = Some("no targets".into());
    } else {
        match build_context(input, input.targets, input.obstacles, params) {
            Err(e) => stats.corridor_error = Some(e.to_string()),
            Ok(ctx) => {
                let anchor = terminal_anchor(input.targets);
                let terminals = sample_shooting_terminals(&anchor, &params.shell, params.samples, seed);
                stats.sampled = terminals.len();
                let outcomes = workers.map(&terminals, |_, xf| {
                    let c = build_minjerk(&input.drone, xf, horizon);
                    ctx.evaluate(&c)
                });
                let scores: Vec<Option<f64>> = outcomes
                    .iter()
                    .map(|o| match o {
                        Outcome::Feasible(s) => Some(*s),
                        Outcome::Rejected(_) => None,
                    })
                    .collect();
                for o in &outcomes {
                    match o {
                        Outcome::Feasible(_) => stats.feasible += 1,
                        Outcome::Rejected(k) => stats.rejected[k.index()] += 1,
                    }
                }
                if let Some(best) = argmin(&scores) {
                    stats.selected = Some(best);
                    let curve = build_minjerk(&input.drone, &terminals[best], horizon);
                    stats.elapsed_s = started.elapsed().as_secs_f64();
                    return ChasePlan {
                        yaw_rate: yaw_for(&curve, &target_curves),
                        curve,
                        corridors: ctx.corridors().to_vec(),
                        score: scores[best].expect("selected score"),
                        status: PlanStatus::Planned,
                        stats,
                    };
                }
            }
        }
    }
    if let Some((prev, elapsed)) = previous {
        if let Some(mut reused) = reuse(input, params, prev, elapsed) {
            stats.elapsed_s = started.elapsed().as_secs_f64();
            reused.stats = stats;
            return reused;
        }
    }
    let curve = build_minjerk(&input.drone, &input.drone.position, horizon);
    let score = if target_curves.is_empty() {
        smoothness_cost(&curve, &params.weights)
    } else {
        score(&curve, &target_curves, &params.weights)
    };
    stats.elapsed_s = started.elapsed().as_secs_f64();
    ChasePlan {
        yaw_rate: if target_curves.is_empty() {
            let z = PolySegment::zero(2 * PRIMITIVE_DEGREE, horizon).expect("positive horizon");
            YawRate {
                numerator: z.clone(),
                denominator: z.offset(1.0),
            }
        } else {
            yaw_for(&curve, &target_curves)
        },
        curve,
        corridors: Vec::new(),
        score,
        status: PlanStatus::Degraded,
        stats,
    }
}

/// The previous plan from `elapsed` on, if it still passes every check over
/// its remaining horizon.
fn reuse(input: &PlanInput<'_>, params: &PlannerParams, prev: &ChasePlan, elapsed: f64) -> Option<ChasePlan> {
    if prev.is_degraded() || input.targets.is_empty() {
        return None;
    }
    let remaining = prev.horizon() - elapsed;
    if remaining < params.reuse_min_remaining || remaining <= 0.0 {
        return None;
    }
    let tail = if elapsed > 0.0 {
        prev.curve.split_at(elapsed).ok()?.1
    } else {
        prev.curve.clone()
    };
    let truncate = |c: &Curve3| -> Option<Curve3> {
        if remaining < c.horizon() {
            Some(c.split_at(remaining).ok()?.0)
        } else {
            Some(c.clone())
        }
    };
    let targets: Vec<TrackedTarget> = input
        .targets
        .iter()
        .map(|t| {
            Some(TrackedTarget {
                curve: truncate(&t.curve)?,
                shape: t.shape,
            })
        })
        .collect::<Option<_>>()?;
    let obstacles: Vec<MovingObstacle> = input
        .obstacles
        .iter()
        .map(|o| Some(MovingObstacle::new(truncate(&o.curve)?, o.shape)))
        .collect::<Option<_>>()?;
    let drone = DroneState::on_curve(&tail, 0.0);
    let shifted = PlanInput {
        drone,
        targets: &targets,
        obstacles: &obstacles,
        map: input.map,
    };
    let ctx = build_context(&shifted, &targets, &obstacles, params).ok()?;
    match ctx.evaluate(&tail) {
        Outcome::Feasible(score) => {
            let curves: Vec<Curve3> = targets.iter().map(|t| t.curve.clone()).collect();
            Some(ChasePlan {
                yaw_rate: yaw_for(&tail, &curves),
                curve: tail,
                corridors: ctx.corridors().to_vec(),
                score,
                status: PlanStatus::Reused,
                stats: PlanStats::default(),
            })
        }
        Outcome::Rejected(_) => None,
    }
}

/// Look-at yaw sampled at `n + 1` evenly spaced times and unwrapped. When the
/// gaze point sits on the drone the previous yaw is held.
pub fn yaw_reference(plan: &ChasePlan, predictions: &[Curve3], n: usize) -> Vec<(f64, f64)> {
    let horizon = plan.horizon();
    let gaze = gaze_curve(predictions);
    let mut out = Vec::with_capacity(n + 1);
    let mut prev: Option<f64> = None;
    for i in 0..=n {
        let t = horizon * i as f64 / n.max(1) as f64;
        let d = gaze.value_at(t.min(gaze.horizon())) - plan.curve.value_at(t);
        let yaw = if d.x.hypot(d.y) < 1e-9 {
            prev.unwrap_or(0.0)
        } else {
            let raw = d.y.atan2(d.x);
            match prev {
                None => raw,
                Some(p) => {
                    let tau = std::f64::consts::TAU;
                    p + (raw - p + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI
                }
            }
        };
        prev = Some(yaw);
        out.push((t, yaw));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    pub(crate) fn test_params() -> PlannerParams {
        let limits = PlannerLimits {
            d_min: 0.4,
            d_max: 1.2,
            v_max: 3.0,
            a_max: 8.0,
            yaw_rate_max: 3.0,
            fov: 100f64.to_radians(),
            drone_radius: 0.1,
        };
        PlannerParams {
            horizon: 1.0,
            samples: 500,
            shell: SamplingShell::for_band(limits.d_min, limits.d_max),
            limits,
            weights: CostWeights {
                w_a: 0.01,
                w_j: 0.001,
                d_des: 0.8,
            },
            obstacle_margin: 0.03,
            corridor: CorridorConfig::default(),
            check_order: CheckKind::ALL.to_vec(),
            reuse_min_remaining: 0.1,
        }
    }

    fn arena(walls: &[Aabb]) -> OccupancyMap {
        let b = Aabb::new(Vector3::new(-3.0, -3.0, 0.0), Vector3::new(3.0, 3.0, 2.0)).unwrap();
        OccupancyMap::from_boxes(0.1, b.min, b, walls).unwrap()
    }

    #[test]
    fn static_target_in_empty_world() {
        let map = arena(&[]);
        let target = TrackedTarget {
            curve: Curve3::stationary(Vector3::new(0.0, 0.0, 1.0), 3, 1.0).unwrap(),
            shape: Ellipsoid::sphere(0.15).unwrap(),
        };
        let input = PlanInput {
            drone: DroneState::at_rest(Vector3::new(-0.8, 0.0, 1.0)),
            targets: std::slice::from_ref(&target),
            obstacles: &[],
            map: &map,
        };
        let params = test_params();
        let p = plan(&input, &params, 7, &Workers::sequential(), None);
        assert_eq!(p.status, PlanStatus::Planned);
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            let d = (p.curve.value_at(t) - target.curve.value_at(t)).norm();
            assert!(d >= params.limits.d_min - 1e-6 && d <= params.limits.d_max + 1e-6);
        }
        let yaw = yaw_reference(&p, &[target.curve.clone()], 10);
        assert_eq!(yaw.len(), 11);
    }

    #[test]
    fn boxed_in_drone_gets_stop_plan() {
        let map = arena(&[]);
        let target = TrackedTarget {
            curve: Curve3::stationary(Vector3::new(0.0, 0.0, 1.0), 3, 1.0).unwrap(),
            shape: Ellipsoid::sphere(0.15).unwrap(),
        };
        // a ring of obstacles sitting right on the sampling shell
        let obstacles: Vec<MovingObstacle> = (0..24)
            .map(|k| {
                let a = k as f64 / 24.0 * std::f64::consts::TAU;
                MovingObstacle::constant_velocity(
                    Vector3::new(0.8 * a.cos(), 0.8 * a.sin(), 1.0),
                    Vector3::zeros(),
                    Ellipsoid::cylinder(0.3, 0.3).unwrap(),
                    1.0,
                )
            })
            .collect();
        let drone = DroneState::at_rest(Vector3::new(-2.0, 0.0, 1.0));
        let input = PlanInput {
            drone,
            targets: std::slice::from_ref(&target),
            obstacles: &obstacles,
            map: &map,
        };
        let p = plan(&input, &test_params(), 1, &Workers::sequential(), None);
        assert_eq!(p.status, PlanStatus::Degraded);
        assert_eq!(p.curve.start(), drone.position);
        assert_eq!(p.curve.end(), drone.position);
        assert_eq!(p.stats.feasible, 0);
    }

    #[test]
    fn yaw_examples() {
        let c = Curve3::stationary(Vector3::zeros(), 5, 1.0).unwrap();
        let plan = ChasePlan {
            yaw_rate: yaw_for(&c, &[Curve3::stationary(Vector3::x(), 3, 1.0).unwrap()]),
            curve: c,
            corridors: vec![],
            score: 0.0,
            status: PlanStatus::Planned,
            stats: PlanStats::default(),
        };
        let ahead = Curve3::stationary(Vector3::new(2.0, 0.0, 0.0), 3, 1.0).unwrap();
        assert!(yaw_reference(&plan, &[ahead], 20).iter().all(|(_, y)| *y == 0.0));
        let pair = [
            Curve3::stationary(Vector3::new(1.0, 1.0, 0.0), 3, 1.0).unwrap(),
            Curve3::stationary(Vector3::new(1.0, -1.0, 0.0), 3, 1.0).unwrap(),
        ];
        assert!(yaw_reference(&plan, &pair, 5).iter().all(|(_, y)| y.abs() < 1e-15));
    }

    #[test]
    fn orbit_yaw_rate() {
        // target circling the hovering drone at rate w
        let w = 0.8;
        let n = 64;
        let pts: Vec<Vector3<f64>> = (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                Vector3::new((w * t).cos(), (w * t).sin(), 0.0)
            })
            .collect();
        // cubic through the orbit: least-effort fit by sampling the arc ends
        let arc = Curve3::from_control_points(
            &[
                pts[0],
                pts[0] + Vector3::new(0.0, w / 3.0, 0.0),
                pts[n] - Vector3::new(-(w).sin(), w.cos(), 0.0) * (w / 3.0),
                pts[n],
            ],
            1.0,
        )
        .unwrap();
        let c = Curve3::stationary(Vector3::zeros(), 5, 1.0).unwrap();
        let plan = ChasePlan {
            yaw_rate: yaw_for(&c, std::slice::from_ref(&arc)),
            curve: c,
            corridors: vec![],
            score: 0.0,
            status: PlanStatus::Planned,
            stats: PlanStats::default(),
        };
        let yaw = yaw_reference(&plan, &[arc], 100);
        let total = yaw.last().unwrap().1 - yaw[0].1;
        assert!((total - w).abs() < 1e-2, "{total}");
    }
}
