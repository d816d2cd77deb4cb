//! Per-primitive certificates and the cost, plus a per-cycle context that
//! prepares everything that does not depend on the primitive.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{CostWeights, PlannerLimits, TrackedTarget};
use crate::bernstein::{rational_range_check, Certificate, Curve3, PolySegment, CERT_EPS};
use crate::geometry::{curve_in_polytope, CorridorSequence, Ellipsoid, MovingObstacle};

pub const PRIMITIVE_DEGREE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Distance,
    Corridor,
    Collision,
    Visibility,
    FieldOfView,
    Dynamics,
}

impl CheckKind {
    pub const ALL: [CheckKind; 6] = [
        CheckKind::Distance,
        CheckKind::Corridor,
        CheckKind::Collision,
        CheckKind::Visibility,
        CheckKind::FieldOfView,
        CheckKind::Dynamics,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Distance => "distance",
            CheckKind::Corridor => "corridor",
            CheckKind::Collision => "collision",
            CheckKind::Visibility => "visibility",
            CheckKind::FieldOfView => "field_of_view",
            CheckKind::Dynamics => "dynamics",
        }
    }
}

fn raise(c: &Curve3, degree: usize) -> Curve3 {
    if c.degree() < degree {
        c.elevate(degree).expect("raising degree")
    } else {
        c.clone()
    }
}

fn raise_seg(p: &PolySegment, degree: usize) -> PolySegment {
    if p.degree() < degree {
        p.elevate(degree).expect("raising degree")
    } else {
        p.clone()
    }
}

fn all_at_least(p: &PolySegment, lo: f64) -> bool {
    p.coeffs().iter().all(|&c| c - lo >= -CERT_EPS)
}

fn all_at_most(p: &PolySegment, hi: f64) -> bool {
    p.coeffs().iter().all(|&c| hi - c >= -CERT_EPS)
}

const ONES: [f64; 3] = [1.0; 3];
const PLANAR: [f64; 3] = [1.0, 1.0, 0.0];

/// `d_min^2 <= ||c - q||^2 <= d_max^2` from the squared distance polynomial.
fn distance_ok(d2: &PolySegment, limits: &PlannerLimits) -> bool {
    all_at_least(d2, limits.d_min * limits.d_min) && all_at_most(d2, limits.d_max * limits.d_max)
}

/// Squared distance polynomial between a primitive and a raised target curve.
fn squared_distance(c: &Curve3, q: &Curve3) -> PolySegment {
    c.sub(q).expect("matching shapes").weighted_sqnorm(ONES).expect("unit weights")
}

fn corridors_ok(c: &Curve3, corridors: &[CorridorSequence], drone: &Ellipsoid) -> bool {
    corridors.iter().all(|seq| {
        let Ok(pieces) = c.split_many(seq.interior_times()) else {
            return false;
        };
        pieces
            .iter()
            .zip(seq.polytopes())
            .all(|(p, s)| curve_in_polytope(p, Some(drone), s).is_proved())
    })
}

/// Line-of-sight term `(c - o)^T W (q - o) - 1`.
fn sight_ok(c_minus_o: &Curve3, q_minus_o: &Curve3, w: [f64; 3]) -> bool {
    match c_minus_o.weighted_inner(q_minus_o, w) {
        Ok(s) => all_at_least(&s, 1.0),
        Err(_) => false,
    }
}

/// Deadzone of one target pair: the disk (in the horizontal plane) from
/// which the two targets subtend more than the field of view, on the side of
/// the target chord where the drone starts.
#[derive(Debug, Clone)]
pub struct FovTerm {
    pub pair: (usize, usize),
    center: Curve3,
    radius2: PolySegment,
    anchor: Curve3,
    normal: Curve3,
    side: f64,
}

impl FovTerm {
    /// `None` when the pair needs no check: a field of view of `pi` or more,
    /// or targets that coincide at the start.
    pub fn new(x_c0: &Vector3<f64>, qi: &Curve3, qj: &Curve3, fov: f64, pair: (usize, usize)) -> Option<Self> {
        if fov >= std::f64::consts::PI {
            return None;
        }
        let delta = qi.sub(qj).ok()?;
        let d0 = delta.start();
        if d0.x.hypot(d0.y) < 1e-6 {
            log::warn!("targets {} and {} coincide; skipping their field-of-view check", pair.0, pair.1);
            return None;
        }
        let zero = delta.z().scale(0.0);
        let normal = Curve3::new(delta.y().scale(-1.0), delta.x().clone(), zero).ok()?;
        let side = if (x_c0 - qj.start()).dot(&normal.start()) >= 0.0 { 1.0 } else { -1.0 };
        let mid = qi.add(qj).ok()?.scale(0.5);
        let cot = 1.0 / fov.tan();
        let center = mid.add(&normal.scale(side * 0.5 * cot)).ok()?;
        let sin = fov.sin();
        let radius2 = delta.weighted_sqnorm(PLANAR).ok()?.scale(1.0 / (4.0 * sin * sin));
        Some(Self {
            pair,
            center: raise(&center, PRIMITIVE_DEGREE),
            radius2: raise_seg(&radius2, 2 * PRIMITIVE_DEGREE),
            anchor: raise(qj, PRIMITIVE_DEGREE),
            normal,
            side,
        })
    }

    pub fn certify(&self, c: &Curve3) -> bool {
        let Ok(off) = c.sub(&self.center) else {
            return false;
        };
        let Ok(d2) = off.weighted_sqnorm(PLANAR) else {
            return false;
        };
        let Ok(margin) = d2.sub(&self.radius2) else {
            return false;
        };
        if !all_at_least(&margin, 0.0) {
            return false;
        }
        let Ok(rel) = c.sub(&self.anchor) else {
            return false;
        };
        match rel.weighted_inner(&self.normal, PLANAR) {
            Ok(h) => all_at_least(&h.scale(self.side), 0.0),
            Err(_) => false,
        }
    }
}

/// Numerator and denominator of the look-at yaw rate toward `gaze`:
/// `psi' = cross_z(g - c, g' - c') / |g - c|_xy^2`, both of degree `2n`.
pub fn yaw_rate_terms(c: &Curve3, gaze: &Curve3) -> (PolySegment, PolySegment) {
    let rel = gaze.sub(c).expect("matching shapes");
    let vel = rel.derivative();
    let num = rel
        .x()
        .multiply(vel.y())
        .and_then(|a| a.sub(&rel.y().multiply(vel.x())?))
        .expect("matching horizons");
    let den = rel.weighted_sqnorm(PLANAR).expect("planar weights");
    let num = raise_seg(&num, den.degree());
    (num, den)
}

fn dynamics_ok(c: &Curve3, gaze: &Curve3, limits: &PlannerLimits) -> bool {
    let v = c.derivative();
    if !all_at_most(&v.weighted_sqnorm(ONES).expect("unit weights"), limits.v_max * limits.v_max) {
        return false;
    }
    let a = v.derivative();
    if !all_at_most(&a.weighted_sqnorm(ONES).expect("unit weights"), limits.a_max * limits.a_max) {
        return false;
    }
    let (num, den) = yaw_rate_terms(c, gaze);
    matches!(
        rational_range_check(&num, &den, -limits.yaw_rate_max, limits.yaw_rate_max),
        Ok(Certificate::Proved)
    )
}

/// Smoothness part of the cost: `w_a int |c''|^2 + w_j int |c'''|^2`.
pub fn smoothness_cost(c: &Curve3, w: &CostWeights) -> f64 {
    let a = c.derivative().derivative();
    let j = a.derivative();
    let ia = a.weighted_sqnorm(ONES).expect("unit weights").definite_integral();
    let ij = j.weighted_sqnorm(ONES).expect("unit weights").definite_integral();
    w.w_a * ia + w.w_j * ij
}

/// Distance part of the cost for one target: `int (|c - q|^2 - d_des^2)^2`.
pub fn spacing_cost(d2: &PolySegment, d_des: f64) -> f64 {
    let e = d2.offset(-d_des * d_des);
    e.multiply(&e).expect("same horizon").definite_integral()
}

/// Gaze point: the single target, or the centroid of several.
pub fn gaze_curve(targets: &[Curve3]) -> Curve3 {
    let mut g = targets[0].clone();
    for q in &targets[1..] {
        g = g.add(q).expect("matching shapes");
    }
    g.scale(1.0 / targets.len() as f64)
}

/// Distance certificate against one target.
pub fn check_distance(c: &Curve3, q: &Curve3, limits: &PlannerLimits) -> Certificate {
    let q = raise(q, c.degree());
    Certificate::from_bool(distance_ok(&squared_distance(c, &q), limits))
}

/// Corridor containment of the drone sphere, and certified separation from
/// each moving obstacle with collision weights `(r_o + r_c)^-2`. Target
/// separation follows from the distance check and is not repeated.
pub fn check_collision(
    c: &Curve3,
    corridors: &[CorridorSequence],
    obstacles: &[MovingObstacle],
    limits: &PlannerLimits,
) -> Certificate {
    let drone = Ellipsoid::sphere(limits.drone_radius).expect("positive radius");
    if !corridors_ok(c, corridors, &drone) {
        return Certificate::Unknown;
    }
    let clear = obstacles.iter().all(|o| {
        let w = drone.collision_weights(&o.shape);
        let diff = c.sub(&raise(&o.curve, c.degree())).expect("matching shapes");
        all_at_least(&diff.weighted_sqnorm(w).expect("nonnegative weights"), 1.0)
    });
    Certificate::from_bool(clear)
}

/// Line of sight from the drone to one target against moving obstacles.
///
/// Any point of the sight line is `(1 - e) c + e q`, and its shape norm
/// against obstacle `o` expands into a Bernstein form in `e` whose three
/// coefficients are the drone term, the cross term and the target term. The
/// drone term follows from the collision check and the target term from the
/// prediction filter, so only the cross term is certified here.
pub fn check_visibility(c: &Curve3, q: &Curve3, obstacles: &[MovingObstacle]) -> Certificate {
    let clear = obstacles.iter().all(|o| {
        let w = o.shape.shape_weights();
        let co = c.sub(&raise(&o.curve, c.degree())).expect("matching shapes");
        let deg = q.degree().max(o.curve.degree());
        let qo = raise(q, deg).sub(&raise(&o.curve, deg)).expect("matching shapes");
        sight_ok(&co, &qo, w)
    });
    Certificate::from_bool(clear)
}

/// Field-of-view certificate for the pair `(qi, qj)`. Also proved when the
/// pair is skipped.
pub fn check_fov_pair(c: &Curve3, qi: &Curve3, qj: &Curve3, fov: f64) -> Certificate {
    match FovTerm::new(&c.start(), qi, qj, fov, (0, 1)) {
        None => Certificate::Proved,
        Some(term) => Certificate::from_bool(term.certify(c)),
    }
}

/// Speed, acceleration and look-at yaw rate toward `gaze`.
pub fn check_dynamics(c: &Curve3, gaze: &Curve3, limits: &PlannerLimits) -> Certificate {
    Certificate::from_bool(dynamics_ok(c, &raise(gaze, c.degree()), limits))
}

/// Total cost of a primitive against the target forecasts.
pub fn score(c: &Curve3, predictions: &[Curve3], w: &CostWeights) -> f64 {
    let spacing: f64 = predictions
        .iter()
        .map(|q| spacing_cost(&squared_distance(c, &raise(q, c.degree())), w.d_des))
        .sum();
    smoothness_cost(c, w) + spacing
}

struct SightTerm {
    target: usize,
    obstacle: usize,
    q_minus_o: Curve3,
    weights: [f64; 3],
}

/// Everything a cycle shares across primitives.
pub struct CycleContext {
    limits: PlannerLimits,
    weights: CostWeights,
    drone: Ellipsoid,
    targets: Vec<Curve3>,
    corridors: Vec<CorridorSequence>,
    obstacles: Vec<Curve3>,
    collision_weights: Vec<[f64; 3]>,
    sight: Vec<SightTerm>,
    /// False when some target's own clearance from an obstacle is not
    /// certified, in which case no line of sight can be.
    sight_possible: bool,
    fov: Vec<FovTerm>,
    gaze: Curve3,
    order: Vec<CheckKind>,
}

#[derive(Default)]
struct PrimitiveCache {
    distances: Option<Vec<PolySegment>>,
    obstacle_offsets: Option<Vec<Curve3>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Feasible(f64),
    Rejected(CheckKind),
}

impl CycleContext {
    /// `margin` inflates every obstacle for both collision and sight checks.
    pub fn new(
        x_c0: &Vector3<f64>,
        targets: &[TrackedTarget],
        corridors: Vec<CorridorSequence>,
        obstacles: &[MovingObstacle],
        limits: &PlannerLimits,
        weights: &CostWeights,
        margin: f64,
        order: &[CheckKind],
    ) -> Self {
        let drone = Ellipsoid::sphere(limits.drone_radius).expect("positive radius");
        let targets5: Vec<Curve3> = targets.iter().map(|t| raise(&t.curve, PRIMITIVE_DEGREE)).collect();
        let obstacles5: Vec<Curve3> = obstacles.iter().map(|o| raise(&o.curve, PRIMITIVE_DEGREE)).collect();
        let inflated: Vec<Ellipsoid> = obstacles.iter().map(|o| o.shape.inflated(margin)).collect();
        let collision_weights = inflated.iter().map(|e| drone.collision_weights(e)).collect();
        let mut sight = Vec::new();
        let mut sight_possible = true;
        for (i, t) in targets.iter().enumerate() {
            for (j, o) in obstacles.iter().enumerate() {
                let deg = t.curve.degree().max(o.curve.degree());
                let qo = raise(&t.curve, deg).sub(&raise(&o.curve, deg)).expect("matching horizons");
                let w = inflated[j].shape_weights();
                if !all_at_least(&qo.weighted_sqnorm(w).expect("nonnegative weights"), 1.0) {
                    sight_possible = false;
                }
                sight.push(SightTerm {
                    target: i,
                    obstacle: j,
                    q_minus_o: qo,
                    weights: w,
                });
            }
        }
        let mut fov = Vec::new();
        for i in 0..targets.len() {
            for j in i + 1..targets.len() {
                if let Some(term) = FovTerm::new(x_c0, &targets[i].curve, &targets[j].curve, limits.fov, (i, j)) {
                    fov.push(term);
                }
            }
        }
        let gaze = gaze_curve(&targets5);
        Self {
            limits: *limits,
            weights: *weights,
            drone,
            targets: targets5,
            corridors,
            obstacles: obstacles5,
            collision_weights,
            sight,
            sight_possible,
            fov,
            gaze,
            order: order.to_vec(),
        }
    }

    pub fn corridors(&self) -> &[CorridorSequence] {
        &self.corridors
    }

    fn distances<'a>(&self, c: &Curve3, cache: &'a mut PrimitiveCache) -> &'a [PolySegment] {
        cache
            .distances
            .get_or_insert_with(|| self.targets.iter().map(|q| squared_distance(c, q)).collect())
    }

    fn offsets<'a>(&self, c: &Curve3, cache: &'a mut PrimitiveCache) -> &'a [Curve3] {
        cache
            .obstacle_offsets
            .get_or_insert_with(|| self.obstacles.iter().map(|o| c.sub(o).expect("matching shapes")).collect())
    }

    fn run(&self, kind: CheckKind, c: &Curve3, cache: &mut PrimitiveCache) -> bool {
        match kind {
            CheckKind::Distance => {
                let limits = self.limits;
                self.distances(c, cache).iter().all(|d| distance_ok(d, &limits))
            }
            CheckKind::Corridor => corridors_ok(c, &self.corridors, &self.drone),
            CheckKind::Collision => {
                let w = &self.collision_weights;
                self.offsets(c, cache)
                    .iter()
                    .zip(w)
                    .all(|(d, w)| all_at_least(&d.weighted_sqnorm(*w).expect("nonnegative weights"), 1.0))
            }
            CheckKind::Visibility => {
                if !self.sight_possible {
                    return false;
                }
                let offsets = self.offsets(c, cache);
                self.sight
                    .iter()
                    .all(|s| sight_ok(&offsets[s.obstacle], &s.q_minus_o, s.weights))
            }
            CheckKind::FieldOfView => self.fov.iter().all(|f| f.certify(c)),
            CheckKind::Dynamics => dynamics_ok(c, &self.gaze, &self.limits),
        }
    }

    /// Runs the checks in the configured order, stopping at the first
    /// failure, and scores survivors.
    pub fn evaluate(&self, c: &Curve3) -> Outcome {
        let mut cache = PrimitiveCache::default();
        for &kind in &self.order {
            if !self.run(kind, c, &mut cache) {
                return Outcome::Rejected(kind);
            }
        }
        let spacing: f64 = self
            .distances(c, &mut cache)
            .iter()
            .map(|d| spacing_cost(d, self.weights.d_des))
            .sum();
        Outcome::Feasible(smoothness_cost(c, &self.weights) + spacing)
    }

    /// Each check on its own, without short-circuiting.
    pub fn verdicts(&self, c: &Curve3) -> [bool; 6] {
        let mut cache = PrimitiveCache::default();
        CheckKind::ALL.map(|k| self.run(k, c, &mut cache))
    }

    pub fn gaze(&self) -> &Curve3 {
        &self.gaze
    }

    pub fn sight_targets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sight.iter().map(|s| (s.target, s.obstacle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> PlannerLimits {
        PlannerLimits {
            d_min: 0.5,
            d_max: 1.5,
            v_max: 2.0,
            a_max: 5.0,
            yaw_rate_max: 2.0,
            fov: std::f64::consts::FRAC_PI_2,
            drone_radius: 0.1,
        }
    }

    fn still(p: [f64; 3], degree: usize) -> Curve3 {
        Curve3::stationary(Vector3::from(p), degree, 1.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        let q = still([0.0; 3], 3);
        assert!(check_distance(&still([1.0, 0.0, 0.0], 5), &q, &limits()).is_proved());
        let converging = Curve3::from_control_points(&[Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()], 1.0)
            .unwrap()
            .elevate(5)
            .unwrap();
        assert!(!check_distance(&converging, &q, &limits()).is_proved());
    }

    #[test]
    fn sight_example_is_conservative() {
        // drone (2,0,0), target at origin, obstacle at (1,1,0) of radius 0.5:
        // drone and target terms are 7 but the cross term is -1
        let c = still([2.0, 0.0, 0.0], 5);
        let q = still([0.0; 3], 3);
        let o = MovingObstacle::new(still([1.0, 1.0, 0.0], 1), Ellipsoid::sphere(0.5).unwrap());
        let w = o.shape.shape_weights();
        let co = c.sub(&raise(&o.curve, 5)).unwrap();
        let qo = q.sub(&raise(&o.curve, 3)).unwrap();
        assert!((co.weighted_sqnorm(w).unwrap().coeffs()[0] - 1.0 - 7.0).abs() < 1e-12);
        assert!((qo.weighted_sqnorm(w).unwrap().coeffs()[0] - 1.0 - 7.0).abs() < 1e-12);
        assert!((co.weighted_inner(&qo, w).unwrap().coeffs()[0] - 1.0 + 1.0).abs() < 1e-12);
        assert!(!check_visibility(&c, &q, &[o]).is_proved());
    }

    #[test]
    fn thales_circle_at_right_angle() {
        let qi = still([1.0, 0.0, 0.0], 3);
        let qj = still([-1.0, 0.0, 0.0], 3);
        let term = FovTerm::new(&Vector3::new(0.0, 3.0, 0.0), &qi, &qj, std::f64::consts::FRAC_PI_2, (0, 1)).unwrap();
        assert!(term.center.control_points().all(|p| p.x.abs() < 1e-15 && p.y.abs() < 1e-15));
        assert!(term.radius2.coeffs().iter().all(|r| (r - 1.0).abs() < 1e-12));
        // on the circle: right angle, margin exactly zero
        let on = still([0.0, 1.0, 0.0], 5);
        assert!(term.certify(&on));
        let inside = still([0.0, 0.5, 0.0], 5);
        assert!(!term.certify(&inside));
    }

    #[test]
    fn fov_between_targets_fails() {
        let qi = still([1.0, 0.0, 0.0], 3);
        let qj = still([-1.0, 0.0, 0.0], 3);
        let c = still([0.0, 0.0, 0.0], 5);
        assert!(!check_fov_pair(&c, &qi, &qj, 1.2).is_proved());
        let far = still([0.0, 10.0, 0.0], 5);
        assert!(check_fov_pair(&far, &qi, &qj, 1.2).is_proved());
        assert!(check_fov_pair(&c, &qi, &qi, 1.2).is_proved());
    }

    #[test]
    fn hover_yaw_rate_is_zero() {
        let c = still([0.0; 3], 5);
        let g = still([1.0, 1.0, 0.0], 5);
        let (num, den) = yaw_rate_terms(&c, &g);
        assert!(num.coeffs().iter().all(|v| v.abs() < 1e-15));
        assert!(den.coeffs().iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert!(check_dynamics(&c, &g, &limits()).is_proved());
    }

    #[test]
    fn fast_line_fails_speed() {
        let l = limits();
        let c = Curve3::from_control_points(&[Vector3::zeros(), Vector3::new(1.2 * l.v_max, 0.0, 0.0)], 1.0)
            .unwrap()
            .elevate(5)
            .unwrap();
        let g = still([0.0, 5.0, 0.0], 5);
        assert!(!check_dynamics(&c, &g, &l).is_proved());
    }

    #[test]
    fn stationary_at_desired_distance_costs_nothing() {
        let w = CostWeights {
            w_a: 1.0,
            w_j: 1.0,
            d_des: 0.8,
        };
        let c = still([0.8, 0.0, 0.0], 5);
        assert!(score(&c, &[still([0.0; 3], 3)], &w).abs() < 1e-12);
    }

    #[test]
    fn smoothness_scales_linearly() {
        let c = Curve3::from_control_points(
            &[
                Vector3::zeros(),
                Vector3::new(0.1, 0.2, 0.0),
                Vector3::new(0.5, 0.1, 0.3),
                Vector3::new(0.4, 0.9, 0.2),
                Vector3::new(1.0, 1.0, 0.0),
                Vector3::new(1.1, 0.7, 0.5),
            ],
            1.0,
        )
        .unwrap();
        let w = CostWeights {
            w_a: 0.3,
            w_j: 0.05,
            d_des: 1.0,
        };
        let w3 = CostWeights {
            w_a: 0.9,
            w_j: 0.15,
            d_des: 1.0,
        };
        assert!((smoothness_cost(&c, &w3) - 3.0 * smoothness_cost(&c, &w)).abs() < 1e-9 * smoothness_cost(&c, &w3));
    }
}
