//! Signed distance from a point to the surface of an axis-aligned ellipsoid.
//!
//! The closest point satisfies `x_i = e_i^2 y_i / (t + e_i^2)` for a scalar
//! multiplier `t`; substituting into the surface equation gives a monotone
//! one-variable equation. Working in the first octant with the axes sorted
//! descending, the root is bracketed and found with safeguarded Newton.
//! Points on coordinate planes need separate handling because the
//! multiplier equation degenerates there.

use nalgebra::Vector3;

use super::Ellipsoid;

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    /// Distance to the surface, negative inside.
    pub distance: f64,
    /// Closest surface point in world coordinates.
    pub closest: Vector3<f64>,
    /// False when Newton did not converge and the golden-section fallback ran.
    pub converged: bool,
}

pub fn point_ellipsoid_distance(p: &Vector3<f64>, center: &Vector3<f64>, e: &Ellipsoid) -> f64 {
    point_ellipsoid_distance_flagged(p, center, e).distance
}

pub fn point_ellipsoid_distance_flagged(
    p: &Vector3<f64>,
    center: &Vector3<f64>,
    e: &Ellipsoid,
) -> DistanceSample {
    let d = p - center;
    let r = e.semi_axes();
    let dims = if e.is_planar() { 2 } else { 3 };

    // sort axes descending
    let mut order = [0usize, 1, 2];
    order[..dims].sort_by(|&a, &b| r[b].total_cmp(&r[a]));
    let axes: Vec<f64> = order[..dims].iter().map(|&k| r[k]).collect();
    let y: Vec<f64> = order[..dims].iter().map(|&k| d[k].abs()).collect();

    let mut converged = true;
    let x = if dims == 3 {
        closest_3d([axes[0], axes[1], axes[2]], [y[0], y[1], y[2]], &mut converged).to_vec()
    } else {
        closest_2d([axes[0], axes[1]], [y[0], y[1]], &mut converged).to_vec()
    };

    let mut closest = *p;
    let mut dist2 = 0.0;
    let mut level = 0.0;
    for (slot, &k) in order[..dims].iter().enumerate() {
        closest[k] = center[k] + x[slot].copysign(d[k]);
        dist2 += (x[slot] - y[slot]).powi(2);
        level += (y[slot] / axes[slot]).powi(2);
    }
    let dist = dist2.sqrt();
    DistanceSample {
        distance: if level < 1.0 { -dist } else { dist },
        closest,
        converged,
    }
}

/// Root of `sum_i (r_i z_i / (s + r_i))^2 - 1` where the last `r` is 1.
fn multiplier_root<const N: usize>(r: [f64; N], z: [f64; N], g: f64, converged: &mut bool) -> f64 {
    let value = |s: f64| -> f64 {
        (0..N).map(|i| (r[i] * z[i] / (s + r[i])).powi(2)).sum::<f64>() - 1.0
    };
    let slope = |s: f64| -> f64 {
        -2.0 * (0..N)
            .map(|i| (r[i] * z[i]).powi(2) / (s + r[i]).powi(3))
            .sum::<f64>()
    };
    let mut lo = z[N - 1] - 1.0;
    let mut hi = if g < 0.0 {
        0.0
    } else {
        (0..N).map(|i| (r[i] * z[i]).powi(2)).sum::<f64>().sqrt() - 1.0
    };
    let mut s = lo;
    for _ in 0..MAX_ITERATIONS {
        let f = value(s);
        if f == 0.0 {
            return s;
        }
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let df = slope(s);
        let mut next = s - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= TOLERANCE * 1e-3 * (1.0 + s.abs()) || hi - lo <= f64::EPSILON * (1.0 + s.abs()) {
            return next;
        }
        s = next;
    }
    *converged = false;
    golden_section(lo, hi, |s| value(s).abs())
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    for _ in 0..200 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    0.5 * (a + b)
}

/// Closest point for `e0 >= e1`, `y >= 0`.
fn closest_2d(e: [f64; 2], y: [f64; 2], converged: &mut bool) -> [f64; 2] {
    if y[1] > 0.0 {
        if y[0] > 0.0 {
            let z = [y[0] / e[0], y[1] / e[1]];
            let g = z[0] * z[0] + z[1] * z[1] - 1.0;
            if g == 0.0 {
                return y;
            }
            let r0 = (e[0] / e[1]).powi(2);
            let s = multiplier_root([r0, 1.0], z, g, converged);
            [r0 * y[0] / (s + r0), y[1] / (s + 1.0)]
        } else {
            [0.0, e[1]]
        }
    } else {
        let numer = e[0] * y[0];
        let denom = e[0] * e[0] - e[1] * e[1];
        if numer < denom {
            let xde = numer / denom;
            [e[0] * xde, e[1] * (1.0 - xde * xde).max(0.0).sqrt()]
        } else {
            [e[0], 0.0]
        }
    }
}

/// Closest point for `e0 >= e1 >= e2`, `y >= 0`.
fn closest_3d(e: [f64; 3], y: [f64; 3], converged: &mut bool) -> [f64; 3] {
    if y[2] > 0.0 {
        if y[1] > 0.0 {
            if y[0] > 0.0 {
                let z = [y[0] / e[0], y[1] / e[1], y[2] / e[2]];
                let g = z.iter().map(|v| v * v).sum::<f64>() - 1.0;
                if g == 0.0 {
                    return y;
                }
                let r = [(e[0] / e[2]).powi(2), (e[1] / e[2]).powi(2), 1.0];
                let s = multiplier_root(r, z, g, converged);
                [
                    r[0] * y[0] / (s + r[0]),
                    r[1] * y[1] / (s + r[1]),
                    y[2] / (s + 1.0),
                ]
            } else {
                let [x1, x2] = closest_2d([e[1], e[2]], [y[1], y[2]], converged);
                [0.0, x1, x2]
            }
        } else if y[0] > 0.0 {
            let [x0, x2] = closest_2d([e[0], e[2]], [y[0], y[2]], converged);
            [x0, 0.0, x2]
        } else {
            [0.0, 0.0, e[2]]
        }
    } else {
        let denom0 = e[0] * e[0] - e[2] * e[2];
        let denom1 = e[1] * e[1] - e[2] * e[2];
        let numer0 = e[0] * y[0];
        let numer1 = e[1] * y[1];
        if numer0 < denom0 && numer1 < denom1 {
            let xde0 = numer0 / denom0;
            let xde1 = numer1 / denom1;
            let discr = 1.0 - xde0 * xde0 - xde1 * xde1;
            if discr > 0.0 {
                return [e[0] * xde0, e[1] * xde1, e[2] * discr.sqrt()];
            }
        }
        let [x0, x1] = closest_2d([e[0], e[1]], [y[0], y[1]], converged);
        [x0, x1, 0.0]
    }
}
