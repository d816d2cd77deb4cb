use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DroneState, SamplingShell};
use crate::bernstein::Curve3;

/// Terminal points on the spherical shell around `anchor`. Radius,
/// elevation and azimuth are drawn in that order per sample.
pub fn sample_shooting_terminals(anchor: &Vector3<f64>, shell: &SamplingShell, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |[lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
    (0..n)
        .map(|_| {
            let r = draw(shell.radius);
            let psi = draw(shell.elevation);
            let phi = draw(shell.azimuth);
            anchor + spherical_offset(r, psi, phi)
        })
        .collect()
}

pub fn spherical_offset(r: f64, elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(r * ce * ca, r * ce * sa, r * se)
}

/// Minimum-jerk quintic from the full drone state to `xf`, with velocity and
/// acceleration left free at the end.
pub fn build_minjerk(s: &DroneState, xf: &Vector3<f64>, horizon: f64) -> Curve3 {
    let t = horizon;
    let x0 = s.position;
    let v = s.velocity;
    let a = s.acceleration;
    let pts = [
        x0,
        x0 + v * (t / 5.0),
        x0 + v * (2.0 * t / 5.0) + a * (t * t / 20.0),
        x0 * (5.0 / 6.0) + xf * (1.0 / 6.0) + v * (13.0 * t / 30.0) + a * (t * t / 15.0),
        x0 * 0.5 + xf * 0.5 + v * (3.0 * t / 10.0) + a * (t * t / 20.0),
        *xf,
    ];
    Curve3::from_control_points(&pts, horizon).expect("finite control points")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_start_control_points() {
        let p = Vector3::new(1.2, -0.6, 0.3);
        let c = build_minjerk(&DroneState::at_rest(Vector3::zeros()), &p, 1.0);
        let want = [Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), p / 6.0, p / 2.0, p];
        for (i, w) in want.iter().enumerate() {
            assert!((c.control_point(i) - w).norm() < 1e-15);
        }
    }

    #[test]
    fn boundary_conditions() {
        let s = DroneState {
            position: Vector3::new(0.5, 1.0, 1.5),
            velocity: Vector3::new(-0.4, 0.9, 0.1),
            acceleration: Vector3::new(1.5, -2.0, 0.3),
        };
        let xf = Vector3::new(2.0, 2.0, 1.0);
        let c = build_minjerk(&s, &xf, 1.3);
        let v = c.derivative();
        let a = v.derivative();
        assert!((c.start() - s.position).norm() < 1e-12);
        assert!((v.start() - s.velocity).norm() < 1e-9);
        assert!((a.start() - s.acceleration).norm() < 1e-9);
        assert!((c.end() - xf).norm() < 1e-12);
        // free end: jerk and snap vanish at t = T
        let j = a.derivative();
        assert!(j.end().norm() < 1e-9);
        assert!(j.derivative().end().norm() < 1e-9);
    }

    #[test]
    fn degenerate_shell_repeats() {
        let shell = SamplingShell::new([0.8, 0.8], [0.2, 0.2], [1.0, 1.0]).unwrap();
        let anchor = Vector3::new(1.0, 2.0, 3.0);
        let pts = sample_shooting_terminals(&anchor, &shell, 20, 5);
        let want = anchor + spherical_offset(0.8, 0.2, 1.0);
        assert!(pts.iter().all(|p| *p == want));
    }

    #[test]
    fn samples_lie_in_radius_band() {
        let shell = SamplingShell::new([0.5, 1.1], [0.0, 0.5], [0.0, std::f64::consts::TAU]).unwrap();
        let anchor = Vector3::new(-1.0, 0.0, 1.0);
        for p in sample_shooting_terminals(&anchor, &shell, 5000, 11) {
            let r = (p - anchor).norm();
            assert!((0.5 - 1e-12..=1.1 + 1e-12).contains(&r));
        }
    }
}
