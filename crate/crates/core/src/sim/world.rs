//! Moving bodies: wandering obstacles and a target group, all seeded.
//!
//! Wanderers head for random goals inside the bounds at a per-leg cruise
//! speed, easing into and out of each leg under an acceleration limit, and
//! pick a new goal and speed on arrival. Legs start clear of static
//! occupancy. Wanderers look one second ahead and turn or slow down to keep
//! clear of every other moving body, though not of the drone. Targets move
//! as a group: one wandering center with the targets fixed on a circle
//! around it. Scripted bodies move at constant speed and avoid nothing.

use std::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::derive_seed;
use crate::geometry::{Aabb, Ellipsoid, OccupancyMap};
use crate::scenario::{ConfigError, Motion, Scenario};

const PLACEMENT_TRIES: usize = 200;
const LEG_TRIES: usize = 32;
/// How far ahead wanderers look for conflicts, in seconds.
const LOOKAHEAD: f64 = 1.0;
/// Gap wanderers keep between their hulls.
const SPACING: f64 = 0.05;
const ARRIVAL: f64 = 0.02;
/// Heading changes tried when the direct heading conflicts, in steps of
/// `PI / TURNS`.
const TURNS: usize = 9;

#[derive(Debug, Clone)]
enum Route {
    Still,
    Wander { goal: Vector3<f64>, speed: f64 },
    Scripted { points: Vec<Vector3<f64>>, next: usize, speed: f64 },
}

/// Position and velocity of one moving body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldBody {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Where a mover's parts are, for the others to steer around.
struct Footprint {
    parts: Vec<Vector3<f64>>,
    velocity: Vector3<f64>,
    radius: f64,
}

#[derive(Debug, Clone)]
struct Mover {
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    route: Route,
    rng: ChaCha8Rng,
    /// Radius kept free of occupancy around the position.
    clearance: f64,
    /// Region goals are drawn from.
    region: Aabb,
    /// Region the position stays in.
    limits: Aabb,
    speed_range: (f64, f64),
    accel: f64,
    /// Offsets of the body's parts; each part is a ball of `radius`.
    parts: Vec<Vector3<f64>>,
    radius: f64,
    /// Time left before an unfinished leg is abandoned.
    leg_time: f64,
}

#[derive(Debug, Clone)]
pub struct World {
    time: f64,
    freeze_at: f64,
    planar: bool,
    plane_z: f64,
    map: OccupancyMap,
    obstacle_shape: Ellipsoid,
    target_shape: Ellipsoid,
    /// Obstacles first, then the target group.
    movers: Vec<Mover>,
    drone_start: Vector3<f64>,
}

fn shrink(b: &Aabb, margin: Vector3<f64>) -> Aabb {
    let mut lo = b.min + margin;
    let mut hi = b.max - margin;
    for k in 0..3 {
        if lo[k] > hi[k] {
            let m = 0.5 * (b.min[k] + b.max[k]);
            lo[k] = m;
            hi[k] = m;
        }
    }
    Aabb { min: lo, max: hi }
}

fn point_free(map: &OccupancyMap, p: &Vector3<f64>, clearance: f64) -> bool {
    map.bounds().contains(p) && map.distance_to_occupied(p, clearance + 1.0) > clearance
}

fn segment_free(map: &OccupancyMap, a: &Vector3<f64>, b: &Vector3<f64>, clearance: f64) -> bool {
    if map.is_empty() {
        return true;
    }
    let step = 0.5 * map.resolution();
    let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
    (0..=n).all(|i| point_free(map, &(a + (b - a) * (i as f64 / n as f64)), clearance))
}

impl Mover {
    #[allow(clippy::too_many_arguments)]
    fn new(
        position: Vector3<f64>,
        route: Route,
        seed: u64,
        clearance: f64,
        region: Aabb,
        limits: Aabb,
        speed_range: (f64, f64),
        accel: f64,
        parts: Vec<Vector3<f64>>,
        radius: f64,
    ) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            route,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clearance,
            region,
            limits,
            speed_range,
            accel,
            parts,
            radius,
            leg_time: 0.0,
        }
    }

    fn random_point(&mut self, planar_z: Option<f64>) -> Vector3<f64> {
        let r = &self.region;
        let mut draw = |k: usize| {
            if r.max[k] > r.min[k] {
                self.rng.random_range(r.min[k]..r.max[k])
            } else {
                r.min[k]
            }
        };
        let x = draw(0);
        let y = draw(1);
        let z = draw(2);
        Vector3::new(x, y, planar_z.unwrap_or(z))
    }

    fn new_leg(&mut self, map: &OccupancyMap, planar_z: Option<f64>) {
        let (lo, hi) = self.speed_range;
        for _ in 0..LEG_TRIES {
            let goal = self.random_point(planar_z);
            let speed = if hi > lo { self.rng.random_range(lo..=hi) } else { hi };
            if segment_free(map, &self.position, &goal, self.clearance) {
                self.route = Route::Wander { goal, speed };
                self.leg_time = if speed > 0.0 {
                    2.0 * (goal - self.position).norm() / speed + 2.0
                } else {
                    0.0
                };
                return;
            }
        }
        // boxed in: wait in place and retry on the next step
        self.route = Route::Wander {
            goal: self.position,
            speed: 0.0,
        };
        self.leg_time = 0.0;
    }

    fn footprint(&self) -> Footprint {
        Footprint {
            parts: self.parts.iter().map(|p| self.position + p).collect(),
            velocity: self.velocity,
            radius: self.radius,
        }
    }

    /// True when moving at `v` leaves the limits before braking to rest, or
    /// brings a part within reach of another body's part inside the
    /// lookahead, assuming the other keeps its velocity. Parts already too
    /// close only conflict while still closing in.
    fn conflicts(&self, v: &Vector3<f64>, others: &[&Footprint], planar: bool) -> bool {
        let stop = self.position + v * (v.norm() / (2.0 * self.accel) + 0.1);
        if !self.limits.contains(&stop) {
            return true;
        }
        let flat = |mut u: Vector3<f64>| {
            if planar {
                u.z = 0.0;
            }
            u
        };
        others.iter().any(|o| {
            let reach = self.radius + o.radius + SPACING;
            let w = flat(v - o.velocity);
            let ww = w.norm_squared();
            self.parts.iter().any(|a| {
                o.parts.iter().any(|b| {
                    let d = flat(self.position + a - b);
                    if d.norm_squared() < reach * reach {
                        return d.dot(&w) < 0.0;
                    }
                    if ww < 1e-12 {
                        return false;
                    }
                    let t = (-d.dot(&w) / ww).clamp(0.0, LOOKAHEAD);
                    (d + w * t).norm_squared() < reach * reach
                })
            })
        })
    }

    /// The first conflict-free velocity among turns of `desired` at full
    /// and half speed, trying small turns first; rest when none is free.
    fn avoid(&self, desired: Vector3<f64>, others: &[&Footprint], planar: bool) -> Vector3<f64> {
        if desired.norm_squared() < 1e-18 || !self.conflicts(&desired, others, planar) {
            return desired;
        }
        for scale in [1.0, 0.5] {
            for k in 0..=2 * TURNS {
                // 0, +1, -1, +2, -2, ... turns
                let turn = ((k + 1) / 2) as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
                let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), turn * PI / TURNS as f64);
                let v = rot * desired * scale;
                if !self.conflicts(&v, others, planar) {
                    return v;
                }
            }
        }
        Vector3::zeros()
    }

    fn advance(&mut self, dt: f64, map: &OccupancyMap, planar_z: Option<f64>, frozen: bool, others: &[&Footprint]) {
        match self.route {
            Route::Still => self.velocity = Vector3::zeros(),
            Route::Wander { .. } => self.wander(dt, map, planar_z, frozen, others),
            Route::Scripted { .. } if frozen => {
                self.route = Route::Still;
                self.velocity = Vector3::zeros();
            }
            Route::Scripted { .. } => self.follow_script(dt),
        }
    }

    fn wander(&mut self, dt: f64, map: &OccupancyMap, planar_z: Option<f64>, frozen: bool, others: &[&Footprint]) {
        let desired = if frozen {
            Vector3::zeros()
        } else {
            self.leg_time -= dt;
            if let Route::Wander { goal, speed } = self.route {
                let dist = (goal - self.position).norm();
                if speed <= 0.0 || self.leg_time <= 0.0 || dist <= ARRIVAL.max(self.velocity.norm() * dt) {
                    self.new_leg(map, planar_z);
                }
            }
            let Route::Wander { goal, speed } = self.route else {
                return;
            };
            let gap = goal - self.position;
            let dist = gap.norm();
            if speed <= 0.0 || dist < 1e-12 {
                Vector3::zeros()
            } else {
                let u = speed.min((2.0 * self.accel * dist).sqrt());
                self.avoid(gap * (u / dist), others, planar_z.is_some())
            }
        };
        let mut dv = desired - self.velocity;
        let cap = self.accel * dt;
        if dv.norm() > cap {
            dv *= cap / dv.norm();
        }
        self.velocity += dv;
        let mut next = self.position + self.velocity * dt;
        for k in 0..3 {
            if next[k] < self.limits.min[k] || next[k] > self.limits.max[k] {
                next[k] = next[k].clamp(self.limits.min[k], self.limits.max[k]);
                self.velocity[k] = 0.0;
            }
        }
        if !map.is_empty() && !point_free(map, &next, self.clearance) {
            // a turn carried it toward occupancy: stop dead and pick a new leg
            self.velocity = Vector3::zeros();
            self.new_leg(map, planar_z);
            return;
        }
        self.position = next;
    }

    fn follow_script(&mut self, dt: f64) {
        let mut left = dt;
        // a few arrivals per step at most
        for _ in 0..8 {
            let Route::Scripted { points, next, speed } = &mut self.route else {
                break;
            };
            let Some(goal) = points.get(*next).copied() else {
                break;
            };
            let speed = *speed;
            let gap = goal - self.position;
            let dist = gap.norm();
            if speed <= 0.0 {
                break;
            }
            if speed * left < dist {
                self.position += gap * (speed * left / dist);
                break;
            }
            left -= dist / speed;
            self.position = goal;
            *next += 1;
            if left <= 0.0 {
                break;
            }
        }
        self.velocity = match &self.route {
            Route::Scripted { points, next, speed } => points.get(*next).map_or(Vector3::zeros(), |g| {
                let gap = g - self.position;
                if *speed > 0.0 && gap.norm() > 1e-12 {
                    gap.normalize() * *speed
                } else {
                    Vector3::zeros()
                }
            }),
            _ => Vector3::zeros(),
        };
    }

    fn body(&self) -> WorldBody {
        WorldBody {
            position: self.position,
            velocity: self.velocity,
        }
    }
}

impl World {
    /// Places every body for `scenario.seed` on `map`.
    pub fn new(scenario: &Scenario, map: OccupancyMap) -> Result<Self, ConfigError> {
        let planar = scenario.is_planar();
        let planar_z = planar.then_some(scenario.plane_z);
        let flatten = |p: [f64; 3]| {
            let mut v = Vector3::from(p);
            if let Some(z) = planar_z {
                v.z = z;
            }
            v
        };
        let flat = |v: Vector3<f64>| if planar { Vector3::new(v.x, v.y, 0.0) } else { v };
        let bounds = scenario.bounds();
        let obstacle_shape = scenario.obstacle_shape()?;
        let target_shape = scenario.target_shape()?;
        let seed = scenario.seed;
        let margin_for = |e: &Ellipsoid, extra: f64| {
            let a = e.semi_axes();
            let z = if planar { 0.0 } else { a.z + extra };
            Vector3::new(a.x + extra, a.y + extra, z)
        };
        let hull = |e: &Ellipsoid| {
            let a = e.semi_axes();
            if planar {
                a.x.max(a.y)
            } else {
                a.max()
            }
        };

        // target group
        let t = &scenario.targets;
        let mut formation_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2, 1));
        let phase: f64 = formation_rng.random_range(0.0..TAU);
        let formation: Vec<Vector3<f64>> = if t.count <= 1 {
            vec![Vector3::zeros(); t.count]
        } else {
            (0..t.count)
                .map(|i| {
                    let a = phase + TAU * i as f64 / t.count as f64;
                    Vector3::new(a.cos(), a.sin(), 0.0) * t.formation_radius
                })
                .collect()
        };
        let axis = target_shape.semi_axes().x.max(target_shape.semi_axes().y);
        let group_clearance = t.formation_radius + axis + 0.05;
        let mut group = Mover::new(
            Vector3::zeros(),
            Route::Still,
            derive_seed(seed, 2, 0),
            group_clearance,
            shrink(&bounds, margin_for(&target_shape, t.formation_radius + 0.5)),
            shrink(&bounds, margin_for(&target_shape, t.formation_radius)),
            (t.min_speed_fraction * t.max_speed, t.max_speed),
            t.accel,
            formation,
            hull(&target_shape),
        );
        let group_start = match (t.start, t.waypoints.first(), t.motion) {
            (Some(s), _, _) => flatten(s),
            (None, Some(w), Motion::Waypoints) => flatten(*w),
            _ => {
                let mut p = group.random_point(planar_z);
                for _ in 0..PLACEMENT_TRIES {
                    if point_free(&map, &p, group_clearance) {
                        break;
                    }
                    p = group.random_point(planar_z);
                }
                p
            }
        };
        group.position = group_start;
        group.route = match t.motion {
            Motion::Static => Route::Still,
            Motion::Waypoints => Route::Scripted {
                points: t.waypoints.iter().map(|w| flatten(*w)).collect(),
                next: 0,
                speed: t.max_speed,
            },
            Motion::RandomWaypoint => Route::Still,
        };
        if t.motion == Motion::RandomWaypoint && t.max_speed > 0.0 {
            group.new_leg(&map, planar_z);
        }

        // drone start: d_des from the group, first free direction with a clear view
        let d_des = scenario.planner_params().weights.d_des;
        let r_c = scenario.drone.radius;
        let drone_start = match scenario.drone.start {
            Some(s) => flatten(s),
            None => {
                let inside = shrink(&bounds, Vector3::new(r_c, r_c, if planar { 0.0 } else { r_c }));
                (0..16)
                    .map(|k| {
                        let a = TAU * k as f64 / 16.0;
                        group_start + Vector3::new(a.cos(), a.sin(), 0.0) * d_des
                    })
                    .find(|p| {
                        inside.contains(p) && point_free(&map, p, r_c + 0.05) && segment_free(&map, p, &group_start, 0.0)
                    })
                    .unwrap_or_else(|| (group_start + Vector3::new(d_des, 0.0, 0.0)).sup(&inside.min).inf(&inside.max))
            }
        };

        // obstacles, apart from each other and away from the group and drone
        let o = &scenario.obstacles;
        let o_radius = hull(&obstacle_shape);
        let o_clearance = obstacle_shape.semi_axes().x.max(obstacle_shape.semi_axes().y) + 0.02;
        let o_region = shrink(&bounds, margin_for(&obstacle_shape, 0.15));
        let o_limits = shrink(&bounds, margin_for(&obstacle_shape, 0.0));
        let o_speed = (o.min_speed_fraction * o.max_speed, o.max_speed);
        let mut movers: Vec<Mover> = Vec::with_capacity(o.count + o.scripted.len() + 1);
        for i in 0..o.count {
            let mut m = Mover::new(
                Vector3::zeros(),
                Route::Still,
                derive_seed(seed, 1, i as u64),
                o_clearance,
                o_region,
                o_limits,
                o_speed,
                o.accel,
                vec![Vector3::zeros()],
                o_radius,
            );
            let placed = |p: &Vector3<f64>, movers: &[Mover]| {
                (flat(*p) - flat(group_start)).norm() > t.formation_radius + 1.0
                    && (flat(*p) - flat(drone_start)).norm() > 1.0
                    && movers
                        .iter()
                        .all(|q| (flat(*p) - flat(q.position)).norm() > 2.0 * o_radius + 2.0 * SPACING)
            };
            let mut p = m.random_point(planar_z);
            for _ in 0..PLACEMENT_TRIES {
                if point_free(&map, &p, o_clearance) && placed(&p, &movers) {
                    break;
                }
                p = m.random_point(planar_z);
            }
            m.position = p;
            if o.motion == Motion::RandomWaypoint && o.max_speed > 0.0 {
                m.new_leg(&map, planar_z);
            }
            movers.push(m);
        }
        for (i, s) in o.scripted.iter().enumerate() {
            let route = Route::Scripted {
                points: s.waypoints.iter().map(|w| flatten(*w)).collect(),
                next: 0,
                speed: s.speed,
            };
            movers.push(Mover::new(
                flatten(s.start),
                route,
                derive_seed(seed, 3, i as u64),
                o_clearance,
                o_region,
                o_limits,
                (0.0, s.speed),
                o.accel,
                vec![Vector3::zeros()],
                o_radius,
            ));
        }
        movers.push(group);

        Ok(Self {
            time: 0.0,
            freeze_at: (scenario.timing.duration - scenario.timing.freeze_before_end).max(0.0),
            planar,
            plane_z: scenario.plane_z,
            map,
            obstacle_shape,
            target_shape,
            movers,
            drone_start,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.map
    }

    pub fn obstacle_shape(&self) -> Ellipsoid {
        self.obstacle_shape
    }

    pub fn target_shape(&self) -> Ellipsoid {
        self.target_shape
    }

    pub fn drone_start(&self) -> Vector3<f64> {
        self.drone_start
    }

    pub fn is_planar(&self) -> bool {
        self.planar
    }

    pub fn plane_z(&self) -> f64 {
        self.plane_z
    }

    fn group(&self) -> &Mover {
        self.movers.last().expect("the target group")
    }

    pub fn obstacles(&self) -> Vec<WorldBody> {
        self.movers[..self.movers.len() - 1].iter().map(Mover::body).collect()
    }

    pub fn targets(&self) -> Vec<WorldBody> {
        let g = self.group();
        g.parts
            .iter()
            .map(|off| WorldBody {
                position: g.position + off,
                velocity: g.velocity,
            })
            .collect()
    }

    /// Advances every body by `dt` against the others' states at the start
    /// of the step. From the freeze time on, wanderers brake to rest and
    /// scripted bodies stop.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0, "time step must be positive");
        let frozen = self.time >= self.freeze_at - 1e-12;
        let planar_z = self.planar.then_some(self.plane_z);
        let prints: Vec<Footprint> = self.movers.iter().map(Mover::footprint).collect();
        for (i, m) in self.movers.iter_mut().enumerate() {
            let others: Vec<&Footprint> = prints
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, f)| f)
                .collect();
            m.advance(dt, &self.map, planar_z, frozen, &others);
        }
        self.time += dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(extra: &str) -> Scenario {
        let text = format!(
            "schema = 1\nmode = \"2d\"\nseed = 5\n[bounds]\nmin = [-3.0, -3.0, 0.0]\nmax = [3.0, 3.0, 2.0]\n{extra}"
        );
        let s = Scenario::parse(&text, &[]).unwrap();
        assert!(s.validate().passed(), "{:?}", s.validate().first_failure());
        s
    }

    fn world(s: &Scenario) -> World {
        World::new(s, s.build_map().unwrap()).unwrap()
    }

    #[test]
    fn zero_speed_world_is_static() {
        let s = scenario("[obstacles]\ncount = 5\nmax_speed = 0.0\n[targets]\nmax_speed = 0.0\n");
        let mut w = world(&s);
        let before = (w.obstacles(), w.targets());
        for _ in 0..100 {
            w.step(0.01);
        }
        assert_eq!(before, (w.obstacles(), w.targets()));
    }

    #[test]
    fn scripted_obstacle_arrives_and_stops() {
        let s = scenario(
            "[targets]\nmotion = \"static\"\nstart = [-2.0, -2.0, 1.0]\n[[obstacles.scripted]]\nstart = [0.0, 0.0, 1.0]\nwaypoints = [[1.0, 0.5, 1.0]]\nspeed = 0.7\n",
        );
        let mut w = world(&s);
        for _ in 0..300 {
            w.step(0.01);
        }
        let o = w.obstacles()[0];
        assert!((o.position - Vector3::new(1.0, 0.5, 1.0)).norm() < 1e-9);
        assert_eq!(o.velocity, Vector3::zeros());
    }

    #[test]
    fn long_run_stays_in_bounds_under_speed_cap() {
        let s = scenario("[obstacles]\ncount = 10\nmax_speed = 1.0\n[targets]\ncount = 3\nmax_speed = 0.8\n[timing]\nduration = 200.0\n");
        let mut w = world(&s);
        let b = s.bounds();
        let dt = 0.01;
        let mut prev: Vec<WorldBody> = w.obstacles().into_iter().chain(w.targets()).collect();
        for _ in 0..10_000 {
            w.step(dt);
            let now: Vec<WorldBody> = w.obstacles().into_iter().chain(w.targets()).collect();
            for (i, (a, p)) in now.iter().zip(&prev).enumerate() {
                assert!(b.contains(&a.position));
                assert!((a.position.z - 1.0).abs() < 1e-12);
                let cap = if i < 10 { 1.0 } else { 0.8 };
                assert!((a.position - p.position).norm() <= cap * dt + 1e-9);
                assert!(a.velocity.norm() <= cap + 1e-9);
                let at_wall = (0..2).any(|k| a.position[k] <= b.min[k] + 0.3 || a.position[k] >= b.max[k] - 0.3);
                assert!(at_wall || (a.velocity - p.velocity).norm() <= 2.0 * dt + 1e-9, "{a:?} after {p:?}");
            }
            prev = now;
        }
    }

    #[test]
    fn bodies_freeze_before_the_end() {
        let s = scenario("[obstacles]\ncount = 4\n[timing]\nduration = 2.0\nfreeze_before_end = 1.0\n");
        let mut w = world(&s);
        // at rest within max_speed / accel of the freeze time
        for _ in 0..151 {
            w.step(0.01);
        }
        let frozen = (w.obstacles(), w.targets());
        assert!(frozen.0.iter().all(|b| b.velocity == Vector3::zeros()));
        for _ in 0..100 {
            w.step(0.01);
        }
        assert_eq!(frozen, (w.obstacles(), w.targets()));
    }

    #[test]
    fn wanderers_avoid_static_occupancy() {
        let s = scenario(
            "[map]\nresolution = 0.1\nboxes = [{ min = [-0.5, -3.0, 0.0], max = [0.5, 1.0, 2.0] }]\n[obstacles]\ncount = 6\n[timing]\nduration = 100.0\n",
        );
        let mut w = world(&s);
        for _ in 0..5000 {
            w.step(0.01);
            for o in w.obstacles() {
                assert!(!w.map().point_occupied(&o.position));
            }
        }
    }

    #[test]
    fn wanderers_keep_apart() {
        let s = scenario("[obstacles]\ncount = 20\n[targets]\ncount = 2\n[timing]\nduration = 100.0\n");
        let mut w = world(&s);
        let mut closest = f64::INFINITY;
        for _ in 0..6000 {
            w.step(0.01);
            let bodies: Vec<(Vector3<f64>, f64)> = w
                .obstacles()
                .iter()
                .map(|o| (o.position, 0.07))
                .chain(w.targets().iter().map(|q| (q.position, 0.1)))
                .collect();
            for (i, a) in bodies.iter().enumerate() {
                for b in &bodies[i + 1..] {
                    closest = closest.min((a.0 - b.0).norm() - a.1 - b.1);
                }
            }
        }
        assert!(closest > 0.0, "bodies overlapped by {}", -closest);
    }

    #[test]
    fn same_seed_same_motion() {
        let s = scenario("[obstacles]\ncount = 6\n");
        let (mut a, mut b) = (world(&s), world(&s));
        for _ in 0..500 {
            a.step(0.01);
            b.step(0.01);
        }
        assert_eq!(a.obstacles(), b.obstacles());
        assert_eq!(a.drone_start(), b.drone_start());
    }
}
