//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls back into the Bernstein arithmetic under test.

#![allow(dead_code)]

use chaser_core::bernstein::{Curve3, PolySegment};
use nalgebra::Vector3;

fn choose(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Direct sum of the basis functions at `t`.
pub fn bern_eval(coeffs: &[f64], horizon: f64, t: f64) -> f64 {
    let n = coeffs.len() - 1;
    let s = t / horizon;
    let mut rest = [1.0; 64];
    for k in 1..=n {
        rest[k] = rest[k - 1] * (1.0 - s);
    }
    let mut lead = 1.0;
    let mut binom = 1.0;
    let mut total = 0.0;
    for (i, c) in coeffs.iter().enumerate() {
        total += c * binom * lead * rest[n - i];
        lead *= s;
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    total
}

/// Derivative of the direct sum, differentiating each basis function.
pub fn bern_deriv_eval(coeffs: &[f64], horizon: f64, t: f64) -> f64 {
    let n = coeffs.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let s = t / horizon;
    let mut total = 0.0;
    for (i, c) in coeffs.iter().enumerate() {
        let left = if i > 0 { i as f64 * s.powi(i as i32 - 1) * (1.0 - s).powi((n - i) as i32) } else { 0.0 };
        let right = if i < n {
            (n - i) as f64 * s.powi(i as i32) * (1.0 - s).powi((n - i) as i32 - 1)
        } else {
            0.0
        };
        total += c * choose(n, i) * (left - right);
    }
    total / horizon
}

pub fn poly_eval(p: &PolySegment, t: f64) -> f64 {
    bern_eval(p.coeffs(), p.horizon(), t)
}

/// Composite Simpson rule with `panels` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels + panels % 2;
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Simpson weights for `panels + 1` equally spaced samples on `[0, horizon]`.
pub fn simpson_weights(horizon: f64, panels: usize) -> Vec<f64> {
    let h = horizon / panels as f64;
    (0..=panels)
        .map(|i| {
            let w = if i == 0 || i == panels {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// A curve converted to power form in real time, for exact derivatives.
#[derive(Debug, Clone)]
pub struct PowerCurve {
    /// `axes[k][j]` multiplies `t^j`.
    axes: [Vec<f64>; 3],
}

impl PowerCurve {
    pub fn new(c: &Curve3) -> Self {
        let axes = [0, 1, 2].map(|k| to_power(c.axes()[k].coeffs(), c.horizon()));
        Self { axes }
    }

    fn eval_axis(a: &[f64], t: f64, order: usize) -> f64 {
        let mut total = 0.0;
        for (j, c) in a.iter().enumerate().skip(order) {
            let falling: f64 = (0..order).map(|m| (j - m) as f64).product();
            total += c * falling * t.powi((j - order) as i32);
        }
        total
    }

    /// Value (order 0) or derivative of the given order at `t`.
    pub fn at(&self, t: f64, order: usize) -> Vector3<f64> {
        Vector3::new(
            Self::eval_axis(&self.axes[0], t, order),
            Self::eval_axis(&self.axes[1], t, order),
            Self::eval_axis(&self.axes[2], t, order),
        )
    }
}

/// Power coefficients of a Bernstein polynomial in `t`, from the
/// expansion `B_{i,n}(s) = sum_k C(n,k) C(k,i) (-1)^(k-i) s^k`.
pub fn to_power(b: &[f64], horizon: f64) -> Vec<f64> {
    let n = b.len() - 1;
    (0..=n)
        .map(|k| {
            let mut sum = 0.0;
            for (i, bi) in b.iter().enumerate().take(k + 1) {
                let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * choose(k, i) * bi;
            }
            choose(n, k) * sum / horizon.powi(k as i32)
        })
        .collect()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + d * s - p).norm()
}

/// Grid of `n + 1` times spanning `[0, horizon]`.
pub fn time_grid(horizon: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| horizon * i as f64 / n as f64)
}
