//! Target forecasting: sample terminal points around a constant-velocity
//! guess, join each to the current state with a minimum-acceleration cubic,
//! drop cubics that leave free space or hit a moving obstacle, and keep the
//! one closest to all the others.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{Curve3, CERT_EPS};
use crate::exec::Workers;
use crate::geometry::{
    curve_in_polytope, generate_corridor, CorridorConfig, Ellipsoid, GeometryError, MovingObstacle, OccupancyMap,
    Polytope,
};

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("target state is not finite or has a negative covariance")]
    InvalidState,
    #[error("no primitives to choose from")]
    Empty,
    #[error("no free corridor around the target at {position:?}")]
    NoCorridor { position: [f64; 3] },
    #[error("all {sampled} primitives rejected ({outside_corridor} left the corridor, {hit_obstacle} hit an obstacle)")]
    NoneAccepted {
        sampled: usize,
        outside_corridor: usize,
        hit_obstacle: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, PredictionError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Diagonal of the terminal-point covariance, in m^2.
    pub terminal_covariance: Vector3<f64>,
}

impl TargetState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>, terminal_covariance: Vector3<f64>) -> Result<Self> {
        let finite = position.iter().chain(velocity.iter()).all(|v| v.is_finite());
        let cov_ok = terminal_covariance.iter().all(|v| v.is_finite() && *v >= 0.0);
        if finite && cov_ok {
            Ok(Self {
                position,
                velocity,
                terminal_covariance,
            })
        } else {
            Err(PredictionError::InvalidState)
        }
    }

    /// Covariance `diag((k T)^2, (k T)^2, (k_z T)^2)`: the spread of a velocity
    /// error of `k` m/s accumulated over the horizon.
    pub fn with_dispersion(position: Vector3<f64>, velocity: Vector3<f64>, kappa: f64, kappa_z: f64, horizon: f64) -> Result<Self> {
        let s = kappa * horizon;
        let sz = kappa_z * horizon;
        Self::new(position, velocity, Vector3::new(s * s, s * s, sz * sz))
    }

    pub fn mean_terminal(&self, horizon: f64) -> Vector3<f64> {
        self.position + self.velocity * horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub samples: usize,
    pub horizon: f64,
    pub corridor: CorridorConfig,
}

impl Default for PredictorParams {
    fn default() -> Self {
        Self {
            samples: 300,
            horizon: 1.0,
            corridor: CorridorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub curve: Curve3,
    pub corridor: Polytope,
    pub sampled: usize,
    pub sample_count_accepted: usize,
    /// Index of the selected primitive among the accepted ones.
    pub selected: usize,
}

/// Draws `n` terminal points from the Gaussian around the constant-velocity
/// terminal. Normals are drawn x, y, z per sample, so the sequence depends
/// only on the seed. `z_range` clamps the height.
pub fn sample_target_terminals(
    s: &TargetState,
    horizon: f64,
    n: usize,
    seed: u64,
    z_range: Option<(f64, f64)>,
) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = s.mean_terminal(horizon);
    let sd = s.terminal_covariance.map(f64::sqrt);
    (0..n)
        .map(|_| {
            let mut p = Vector3::zeros();
            for k in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                p[k] = mean[k] + sd[k] * z;
            }
            if let Some((lo, hi)) = z_range {
                p.z = p.z.clamp(lo, hi);
            }
            p
        })
        .collect()
}

/// Minimum-acceleration cubic from the current state to `xf` with free
/// terminal velocity.
pub fn build_ncvm(s: &TargetState, xf: &Vector3<f64>, horizon: f64) -> Curve3 {
    let x0 = s.position;
    let v = s.velocity;
    let pts = [
        x0,
        x0 + v * (horizon / 3.0),
        x0 * 0.5 + xf * 0.5 + v * (horizon / 6.0),
        *xf,
    ];
    Curve3::from_control_points(&pts, horizon).expect("finite control points")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    OutsideCorridor,
    HitObstacle(usize),
}

/// Obstacle curves raised to the primitive degree, with the collision
/// weights `(r_q + r_o)^-2`.
struct ObstacleTerms {
    curves: Vec<Curve3>,
    weights: Vec<[f64; 3]>,
}

impl ObstacleTerms {
    fn new(target_shape: &Ellipsoid, obstacles: &[MovingObstacle], degree: usize) -> Self {
        let curves = obstacles
            .iter()
            .map(|o| {
                if o.curve.degree() < degree {
                    o.curve.elevate(degree).expect("raising degree")
                } else {
                    o.curve.clone()
                }
            })
            .collect();
        let weights = obstacles.iter().map(|o| target_shape.collision_weights(&o.shape)).collect();
        Self { curves, weights }
    }

    fn judge(&self, c: &Curve3, corridor: &Polytope, target_shape: &Ellipsoid) -> Verdict {
        if !curve_in_polytope(c, Some(target_shape), corridor).is_proved() {
            return Verdict::OutsideCorridor;
        }
        for (i, (o, w)) in self.curves.iter().zip(&self.weights).enumerate() {
            if !clears(c, o, *w) {
                return Verdict::HitObstacle(i);
            }
        }
        Verdict::Accepted
    }
}

/// Certifies `||a - b||_W^2 >= 1` over the horizon.
pub(crate) fn clears(a: &Curve3, b: &Curve3, w: [f64; 3]) -> bool {
    let Ok(diff) = a.sub(b) else {
        return false;
    };
    match diff.weighted_sqnorm(w) {
        Ok(d) => d.coeffs().iter().all(|&c| c - 1.0 >= -CERT_EPS),
        Err(_) => false,
    }
}

/// Indices of the primitives whose target-inflated hull stays in the corridor
/// and whose separation from every obstacle is certified.
pub fn filter_target_primitives(
    curves: &[Curve3],
    corridor: &Polytope,
    target_shape: &Ellipsoid,
    obstacles: &[MovingObstacle],
) -> Vec<usize> {
    judge_all(curves, corridor, target_shape, obstacles, &Workers::sequential())
        .into_iter()
        .enumerate()
        .filter(|(_, v)| *v == Verdict::Accepted)
        .map(|(i, _)| i)
        .collect()
}

fn judge_all(
    curves: &[Curve3],
    corridor: &Polytope,
    target_shape: &Ellipsoid,
    obstacles: &[MovingObstacle],
    workers: &Workers,
) -> Vec<Verdict> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let terms = ObstacleTerms::new(target_shape, obstacles, first.degree());
    workers.map(curves, |_, c| terms.judge(c, corridor, target_shape))
}

/// The primitive minimizing the summed squared L2 distance to all others.
///
/// With `y_i` the primitives relative to their mean curve and `S = sum_j y_j`,
/// `sum_j int ||y_i - y_j||^2 = N int ||y_i||^2 - 2 int y_i . S + sum_j int ||y_j||^2`,
/// so the whole cost vector takes `O(N)` products.
pub fn select_center(accepted: &[Curve3]) -> Result<usize> {
    Ok(center_costs(accepted)?.0)
}

/// Selected index together with the full cost vector.
pub fn center_costs(accepted: &[Curve3]) -> Result<(usize, Vec<f64>)> {
    let n = accepted.len();
    let first = accepted.first().ok_or(PredictionError::Empty)?;
    let ones = [1.0; 3];
    let mut mean = first.scale(0.0);
    for c in accepted {
        mean = mean.add(c).map_err(|_| PredictionError::Empty)?;
    }
    let mean = mean.scale(1.0 / n as f64);
    let rel: Vec<Curve3> = accepted.iter().map(|c| c.sub(&mean).expect("shapes checked")).collect();
    let mut sum = rel[0].scale(0.0);
    for y in &rel {
        sum = sum.add(y).expect("shapes checked");
    }
    let self_terms: Vec<f64> = rel
        .iter()
        .map(|y| y.weighted_sqnorm(ones).expect("unit weights").definite_integral())
        .collect();
    let total: f64 = self_terms.iter().sum();
    let costs: Vec<f64> = rel
        .iter()
        .zip(&self_terms)
        .map(|(y, a)| {
            let cross = y.weighted_inner(&sum, ones).expect("unit weights").definite_integral();
            n as f64 * a - 2.0 * cross + total
        })
        .collect();
    let best = crate::exec::argmin(&costs.iter().map(|&c| Some(c)).collect::<Vec<_>>()).ok_or(PredictionError::Empty)?;
    Ok((best, costs))
}

/// Corridor around `[p0, pf]`; when that segment is blocked the far end is
/// pulled back toward `p0` by halves, ending with the point `p0` alone.
fn seed_corridor(p0: &Vector3<f64>, pf: &Vector3<f64>, map: &OccupancyMap, cfg: &CorridorConfig) -> Result<Polytope> {
    let mut frac = 1.0;
    loop {
        let end = p0 + (pf - p0) * frac;
        if let Some(c) = generate_corridor(p0, &end, map, cfg)? {
            return Ok(c);
        }
        if frac == 0.0 {
            return Err(PredictionError::NoCorridor {
                position: (*p0).into(),
            });
        }
        frac = if frac < 1.0 / 64.0 { 0.0 } else { frac * 0.5 };
    }
}

/// Full forecast for one target.
///
/// The corridor is grown around the segment from the current position to the
/// constant-velocity terminal (clamped into the map, and shortened if it runs
/// into occupancy), so primitives that bend toward free space survive while
/// ones heading into walls do not.
pub fn predict(
    s: &TargetState,
    target_shape: &Ellipsoid,
    map: &OccupancyMap,
    obstacles: &[MovingObstacle],
    params: &PredictorParams,
    seed: u64,
    workers: &Workers,
) -> Result<TargetPrediction> {
    let horizon = params.horizon;
    let b = map.bounds();
    let mean = s.mean_terminal(horizon).sup(&b.min).inf(&b.max);
    let corridor = seed_corridor(&s.position, &mean, map, &params.corridor)?;
    let terminals = sample_target_terminals(s, horizon, params.samples.max(1), seed, Some((b.min.z, b.max.z)));
    let curves: Vec<Curve3> = terminals.iter().map(|xf| build_ncvm(s, xf, horizon)).collect();
    let verdicts = judge_all(&curves, &corridor, target_shape, obstacles, workers);
    let accepted: Vec<Curve3> = curves
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| **v == Verdict::Accepted)
        .map(|(c, _)| c.clone())
        .collect();
    if accepted.is_empty() {
        let outside_corridor = verdicts.iter().filter(|v| **v == Verdict::OutsideCorridor).count();
        return Err(PredictionError::NoneAccepted {
            sampled: curves.len(),
            outside_corridor,
            hit_obstacle: curves.len() - outside_corridor,
        });
    }
    let selected = select_center(&accepted)?;
    log::trace!("prediction kept {} of {} primitives", accepted.len(), curves.len());
    Ok(TargetPrediction {
        curve: accepted[selected].clone(),
        corridor,
        sampled: curves.len(),
        sample_count_accepted: accepted.len(),
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    fn state(p: [f64; 3], v: [f64; 3], cov: f64) -> TargetState {
        TargetState::new(Vector3::from(p), Vector3::from(v), Vector3::repeat(cov)).unwrap()
    }

    #[test]
    fn ncvm_examples() {
        let s = state([0.0; 3], [3.0, 0.0, 0.0], 0.0);
        let c = build_ncvm(&s, &Vector3::new(3.0, 0.0, 0.0), 1.0);
        for (i, want) in [0.0, 1.0, 2.0, 3.0].iter().enumerate() {
            assert!((c.control_point(i) - Vector3::new(*want, 0.0, 0.0)).norm() < 1e-15);
        }
        let p = Vector3::new(1.0, -2.0, 0.5);
        let rest = state([0.0; 3], [0.0; 3], 0.0);
        let c = build_ncvm(&rest, &p, 2.0);
        assert_eq!(c.control_point(1), Vector3::zeros());
        assert_eq!(c.control_point(2), p / 2.0);
        let v_end = c.derivative().end();
        assert!((v_end - p * 1.5 / 2.0).norm() < 1e-12);
    }

    #[test]
    fn ncvm_interpolates_state() {
        let s = state([1.0, 2.0, 3.0], [0.3, -0.7, 0.2], 0.0);
        let xf = Vector3::new(2.0, 1.0, 3.5);
        let c = build_ncvm(&s, &xf, 1.7);
        assert!((c.start() - s.position).norm() < 1e-15);
        assert!((c.end() - xf).norm() < 1e-15);
        assert!((c.derivative().start() - s.velocity).norm() < 1e-12);
        // natural boundary: zero acceleration at the free end
        assert!(c.derivative().derivative().end().norm() < 1e-12);
    }

    #[test]
    fn zero_covariance_samples_collapse() {
        let s = state([1.0, 0.0, 1.0], [0.5, 0.5, 0.0], 0.0);
        for p in sample_target_terminals(&s, 2.0, 50, 9, None) {
            assert_eq!(p, Vector3::new(2.0, 1.0, 1.0));
        }
    }

    #[test]
    fn sample_mean_converges() {
        let s = state([0.0; 3], [1.0, 0.0, 0.0], 0.09);
        let n = 100_000;
        let pts = sample_target_terminals(&s, 1.0, n, 4, None);
        let mean: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / n as f64;
        let tol = 3.0 * 0.3 / (n as f64).sqrt();
        assert!((mean - Vector3::new(1.0, 0.0, 0.0)).abs().max() < tol, "{mean:?}");
        let again = sample_target_terminals(&s, 1.0, 1000, 4, None);
        assert_eq!(&pts[..1000], &again[..]);
    }

    #[test]
    fn filter_examples() {
        let s = state([0.0; 3], [1.0, 0.0, 0.0], 0.0);
        let huge = Polytope::from_box(&Aabb::new(Vector3::repeat(-100.0), Vector3::repeat(100.0)).unwrap()).unwrap();
        let shape = Ellipsoid::sphere(0.2).unwrap();
        let curves: Vec<Curve3> = (0..5)
            .map(|i| build_ncvm(&s, &Vector3::new(1.0, i as f64 * 0.5, 0.0), 1.0))
            .collect();
        assert_eq!(filter_target_primitives(&curves, &huge, &shape, &[]), vec![0, 1, 2, 3, 4]);

        let twin = MovingObstacle::new(curves[2].clone(), Ellipsoid::sphere(0.1).unwrap());
        let kept = filter_target_primitives(&curves[2..3], &huge, &shape, &[twin]);
        assert!(kept.is_empty());

        // obstacle crossing the midpoint of the straight primitive
        let line = build_ncvm(&s, &Vector3::new(1.0, 0.0, 0.0), 1.0);
        let crossing = MovingObstacle::constant_velocity(
            Vector3::new(0.5, -1.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
            Ellipsoid::sphere(0.1).unwrap(),
            1.0,
        );
        assert!(filter_target_primitives(std::slice::from_ref(&line), &huge, &shape, &[crossing.clone()]).is_empty());
        let closest = (0..=1000)
            .map(|i| {
                let t = i as f64 / 1000.0;
                (line.value_at(t) - crossing.curve.value_at(t)).norm()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(closest < 0.3);
    }

    #[test]
    fn center_of_collinear_fan() {
        let s = state([0.0; 3], [1.0, 0.0, 0.0], 0.0);
        let a = Vector3::new(1.0, -1.0, 0.0);
        let d = Vector3::new(0.0, 0.7, 0.1);
        let curves: Vec<Curve3> = (0..3).map(|i| build_ncvm(&s, &(a + d * i as f64), 1.0)).collect();
        assert_eq!(select_center(&curves).unwrap(), 1);
        assert!(matches!(select_center(&[]), Err(PredictionError::Empty)));
    }

    #[test]
    fn predict_in_empty_map_is_constant_velocity() {
        let map = OccupancyMap::empty(0.1, Aabb::new(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(5.0, 5.0, 3.0)).unwrap()).unwrap();
        let s = state([0.0, 0.0, 1.0], [0.8, -0.3, 0.0], 0.0);
        let p = predict(
            &s,
            &Ellipsoid::sphere(0.2).unwrap(),
            &map,
            &[],
            &PredictorParams::default(),
            1,
            &Workers::sequential(),
        )
        .unwrap();
        let line = Curve3::linear(s.position, s.velocity, 1.0).unwrap().elevate(3).unwrap();
        for i in 0..4 {
            assert!((p.curve.control_point(i) - line.control_point(i)).norm() < 1e-12);
        }
        assert_eq!(p.sample_count_accepted, p.sampled);
    }

    #[test]
    fn prediction_toward_wall_stays_free() {
        let b = Aabb::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(4.0, 4.0, 2.0)).unwrap();
        let wall = Aabb::new(Vector3::new(2.0, 0.0, 0.0), Vector3::new(2.4, 4.0, 2.0)).unwrap();
        let map = OccupancyMap::from_boxes(0.1, Vector3::zeros(), b, &[wall]).unwrap();
        let s = TargetState::with_dispersion(Vector3::new(1.2, 2.0, 1.0), Vector3::new(1.5, 0.0, 0.0), 0.6, 0.1, 1.0).unwrap();
        let shape = Ellipsoid::sphere(0.15).unwrap();
        let p = predict(&s, &shape, &map, &[], &PredictorParams::default(), 3, &Workers::sequential()).unwrap();
        let end = p.curve.end();
        assert!(!map.point_occupied(&end));
        assert!(end.x + 0.15 <= 2.0 + 1e-9);
        assert!(p.sample_count_accepted < p.sampled);
    }
}
