//! Safety and visibility scores of a world snapshot.

use nalgebra::Vector3;

use crate::geometry::{point_ellipsoid_distance, Ellipsoid, OccupancyMap};

/// Stand-in for "nothing in range".
pub const METRIC_CAP: f64 = 1e3;

/// Points checked along each line of sight, end points included.
pub const SIGHT_SAMPLES: usize = 101;

/// An ellipsoidal body at a position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub center: Vector3<f64>,
    pub shape: Ellipsoid,
}

impl Body {
    pub fn new(center: Vector3<f64>, shape: Ellipsoid) -> Self {
        Self { center, shape }
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        point_ellipsoid_distance(p, &self.center, &self.shape)
    }

    /// Cheap lower bound on the distance from any point of segment `a`-`b`.
    fn segment_bound(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        let planar = self.shape.is_planar();
        let flat = |v: Vector3<f64>| if planar { Vector3::new(v.x, v.y, 0.0) } else { v };
        let (a, b, c) = (flat(*a), flat(*b), flat(self.center));
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((c - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (a + ab * s - c).norm() - self.shape.max_finite_axis()
    }
}

/// Clearance between the drone sphere and everything solid: obstacle and
/// target ellipsoids and occupied cells. Negative means penetration.
pub fn safety_metric(
    drone: &Vector3<f64>,
    drone_radius: f64,
    obstacles: &[Body],
    targets: &[Body],
    map: &OccupancyMap,
) -> f64 {
    let mut best = map.distance_to_occupied(drone, METRIC_CAP + drone_radius);
    for b in obstacles.iter().chain(targets) {
        best = best.min(b.distance(drone));
    }
    (best - drone_radius).min(METRIC_CAP)
}

/// Smallest clearance between any drone-to-target sight line and the
/// obstacle set (moving ellipsoids and occupied cells), checked at
/// [`SIGHT_SAMPLES`] evenly spaced points per line. Negative means occluded.
pub fn visibility_metric(drone: &Vector3<f64>, targets: &[Vector3<f64>], obstacles: &[Body], map: &OccupancyMap) -> f64 {
    let mut best = METRIC_CAP;
    let steps = (SIGHT_SAMPLES - 1) as f64;
    for q in targets {
        let near: Vec<&Body> = obstacles.iter().filter(|b| b.segment_bound(drone, q) < best).collect();
        let spacing = (q - drone).norm() / steps;
        let mut i = 0usize;
        while i < SIGHT_SAMPLES {
            let p = drone + (q - drone) * (i as f64 / steps);
            let mut d = map.distance_to_occupied(&p, best);
            for b in &near {
                d = d.min(b.distance(&p));
            }
            best = best.min(d);
            // the clearance is 1-Lipschitz along the line, so samples closer
            // than d - best cannot go below best
            let skip = if spacing > 0.0 { ((d - best) / spacing).floor() as usize } else { SIGHT_SAMPLES };
            i += skip.max(1);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;

    fn empty() -> OccupancyMap {
        OccupancyMap::empty(0.1, Aabb::new(Vector3::repeat(-5.0), Vector3::repeat(5.0)).unwrap()).unwrap()
    }

    fn brute_visibility(drone: &Vector3<f64>, targets: &[Vector3<f64>], obstacles: &[Body], map: &OccupancyMap) -> f64 {
        let mut best = METRIC_CAP;
        for q in targets {
            for i in 0..SIGHT_SAMPLES {
                let p = drone + (q - drone) * (i as f64 / (SIGHT_SAMPLES - 1) as f64);
                best = best.min(map.distance_to_occupied(&p, METRIC_CAP));
                for b in obstacles {
                    best = best.min(b.distance(&p));
                }
            }
        }
        best
    }

    #[test]
    fn safety_examples() {
        let obstacle = Body::new(Vector3::new(1.0, 0.0, 0.0), Ellipsoid::sphere(0.07).unwrap());
        let chi = safety_metric(&Vector3::zeros(), 0.15, &[obstacle], &[], &empty());
        assert!((chi - 0.78).abs() < 1e-9);
        let touching = Body::new(Vector3::new(0.22, 0.0, 0.0), Ellipsoid::sphere(0.07).unwrap());
        let chi = safety_metric(&Vector3::zeros(), 0.15, &[touching], &[], &empty());
        assert!(chi.abs() < 1e-9);
        let chi = safety_metric(&Vector3::zeros(), 0.15, &[], &[], &empty());
        assert_eq!(chi, METRIC_CAP);
    }

    #[test]
    fn visibility_examples() {
        let map = empty();
        let a = Vector3::new(-2.0, 0.0, 0.0);
        let b = Vector3::new(2.0, 0.0, 0.0);
        assert_eq!(visibility_metric(&a, &[b], &[], &map), METRIC_CAP);

        let mid = Body::new(Vector3::zeros(), Ellipsoid::sphere(0.3).unwrap());
        assert!((visibility_metric(&a, &[b], &[mid], &map) + 0.3).abs() < 1e-9);

        let offset = Body::new(Vector3::new(0.0, 1.0, 0.0), Ellipsoid::sphere(0.5).unwrap());
        assert!((visibility_metric(&a, &[b], &[offset], &map) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pruned_visibility_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let boxes = [Aabb::new(Vector3::new(0.5, -0.5, -0.5), Vector3::new(0.8, 0.5, 0.5)).unwrap()];
        let map = OccupancyMap::from_boxes(
            0.1,
            Vector3::repeat(-5.0),
            Aabb::new(Vector3::repeat(-5.0), Vector3::repeat(5.0)).unwrap(),
            &boxes,
        )
        .unwrap();
        for _ in 0..200 {
            let mut v = || Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
            let drone = v();
            let targets = [v(), v()];
            let obstacles: Vec<Body> = (0..4)
                .map(|_| Body::new(v(), Ellipsoid::new(0.2, 0.3, 0.25).unwrap()))
                .collect();
            let fast = visibility_metric(&drone, &targets, &obstacles, &map);
            let slow = brute_visibility(&drone, &targets, &obstacles, &map);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }
}
