//! Bernstein-basis polynomials on `[0, T]` and the coefficient-level
//! certificates built on them.
//!
//! A [`PolySegment`] stores the Bernstein coefficients of a scalar polynomial
//! of degree `n` on the interval `[0, T]`:
//!
//! ```text
//! p(t) = sum_i c_i * C(n, i) * (t/T)^i * (1 - t/T)^(n - i)
//! ```
//!
//! Three properties make the representation useful for fast feasibility
//! checks:
//!
//! * nonnegative coefficients imply a nonnegative polynomial,
//! * the product of two Bernstein polynomials is again one (degrees add),
//! * the polynomial stays within the convex hull of its coefficients.
//!
//! Certificates are conservative: [`Certificate::Proved`] guarantees the
//! continuous-time property, [`Certificate::Unknown`] carries no information.
//!
//! Degree alignment is explicit. Binary operations that need equal degrees
//! fail with [`BernsteinError::DegreeMismatch`] instead of elevating silently.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Absolute tolerance on coefficients used by every certificate.
pub const CERT_EPS: f64 = 1e-12;

/// Inline storage for coefficients. Degree 23 products stay on the stack.
pub type Coeffs = SmallVec<[f64; 24]>;

const TABLE_DEGREE: usize = 48;

const fn pascal() -> [[f64; TABLE_DEGREE + 1]; TABLE_DEGREE + 1] {
    let mut ints = [[0u64; TABLE_DEGREE + 1]; TABLE_DEGREE + 1];
    let mut out = [[0.0f64; TABLE_DEGREE + 1]; TABLE_DEGREE + 1];
    let mut n = 0;
    while n <= TABLE_DEGREE {
        ints[n][0] = 1;
        ints[n][n] = 1;
        let mut k = 1;
        while k < n {
            ints[n][k] = ints[n - 1][k - 1] + ints[n - 1][k];
            k += 1;
        }
        let mut k = 0;
        while k <= n {
            out[n][k] = ints[n][k] as f64;
            k += 1;
        }
        n += 1;
    }
    out
}

static BINOMIAL: [[f64; TABLE_DEGREE + 1]; TABLE_DEGREE + 1] = pascal();

/// Binomial coefficient `C(n, k)` as a float. Table lookup up to `n = 48`.
#[inline]
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= TABLE_DEGREE {
        return BINOMIAL[n][k];
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BernsteinError {
    #[error("polynomial needs at least one coefficient")]
    Empty,
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("coefficient {index} is not finite")]
    NonFinite { index: usize },
    #[error("time {t} outside [0, {horizon}]")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("split time {s} must lie strictly inside (0, {horizon})")]
    SplitOutOfRange { s: f64, horizon: f64 },
    #[error("horizon mismatch: {left} vs {right}")]
    HorizonMismatch { left: f64, right: f64 },
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("cannot elevate degree {degree} down to {target}")]
    ElevationBelowDegree { degree: usize, target: usize },
    #[error("weight {0} is negative")]
    NegativeWeight(f64),
    #[error("empty range: lower bound {lo} exceeds upper bound {hi}")]
    InvalidRange { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, BernsteinError>;

/// Outcome of a conservative coefficient test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Certificate {
    Proved,
    Unknown,
}

impl Certificate {
    pub fn is_proved(self) -> bool {
        matches!(self, Certificate::Proved)
    }

    pub fn and(self, other: Certificate) -> Certificate {
        if self.is_proved() && other.is_proved() {
            Certificate::Proved
        } else {
            Certificate::Unknown
        }
    }

    pub fn from_bool(proved: bool) -> Certificate {
        if proved {
            Certificate::Proved
        } else {
            Certificate::Unknown
        }
    }
}

/// Scalar Bernstein polynomial on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolySegmentRepr", into = "PolySegmentRepr")]
pub struct PolySegment {
    coeffs: Coeffs,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct PolySegmentRepr {
    horizon: f64,
    coeffs: Vec<f64>,
}

impl TryFrom<PolySegmentRepr> for PolySegment {
    type Error = BernsteinError;

    fn try_from(repr: PolySegmentRepr) -> Result<Self> {
        PolySegment::new(&repr.coeffs, repr.horizon)
    }
}

impl From<PolySegment> for PolySegmentRepr {
    fn from(p: PolySegment) -> Self {
        PolySegmentRepr {
            horizon: p.horizon,
            coeffs: p.coeffs.to_vec(),
        }
    }
}

fn check_horizon(horizon: f64) -> Result<f64> {
    if horizon.is_finite() && horizon > 0.0 {
        // canonical form: -0.0 and friends never reach here, plain value is kept
        Ok(horizon)
    } else {
        Err(BernsteinError::InvalidHorizon(horizon))
    }
}

impl PolySegment {
    pub fn new(coeffs: &[f64], horizon: f64) -> Result<Self> {
        Self::from_coeffs(Coeffs::from_slice(coeffs), horizon)
    }

    pub fn from_coeffs(coeffs: Coeffs, horizon: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(BernsteinError::Empty);
        }
        let horizon = check_horizon(horizon)?;
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(BernsteinError::NonFinite { index });
        }
        Ok(Self { coeffs, horizon })
    }

    /// Internal constructor for results of operations on valid inputs.
    #[inline]
    pub(crate) fn raw(coeffs: Coeffs, horizon: f64) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs, horizon }
    }

    pub fn constant(value: f64, degree: usize, horizon: f64) -> Result<Self> {
        Self::from_coeffs(smallvec::smallvec![value; degree + 1], horizon)
    }

    pub fn zero(degree: usize, horizon: f64) -> Result<Self> {
        Self::constant(0.0, degree, horizon)
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn min_coeff(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value at `t` via de Casteljau's recurrence.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(BernsteinError::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.value_at(t))
    }

    /// Like [`evaluate`](Self::evaluate) with `t` clamped into the domain.
    pub fn value_at(&self, t: f64) -> f64 {
        let u = (t / self.horizon).clamp(0.0, 1.0);
        if u == 0.0 {
            return self.coeffs[0];
        }
        if u == 1.0 {
            return self.coeffs[self.degree()];
        }
        let mut work = self.coeffs.clone();
        let n = work.len();
        for level in 1..n {
            for i in 0..n - level {
                work[i] = (1.0 - u) * work[i] + u * work[i + 1];
            }
        }
        work[0]
    }

    /// Time derivative; degree drops by one. A constant maps to the zero
    /// polynomial of degree 0.
    pub fn derivative(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return Self::raw(smallvec::smallvec![0.0], self.horizon);
        }
        let scale = n as f64 / self.horizon;
        let coeffs = self
            .coeffs
            .windows(2)
            .map(|w| scale * (w[1] - w[0]))
            .collect();
        Self::raw(coeffs, self.horizon)
    }

    /// Degree elevation to `target`, function unchanged.
    pub fn elevate(&self, target: usize) -> Result<Self> {
        let n = self.degree();
        if target < n {
            return Err(BernsteinError::ElevationBelowDegree { degree: n, target });
        }
        let mut coeffs = self.coeffs.clone();
        for m in n..target {
            // one step m -> m + 1
            let mut next = Coeffs::with_capacity(m + 2);
            next.push(coeffs[0]);
            let denom = (m + 1) as f64;
            for i in 1..=m {
                let ratio = i as f64 / denom;
                next.push(ratio * coeffs[i - 1] + (1.0 - ratio) * coeffs[i]);
            }
            next.push(coeffs[m]);
            coeffs = next;
        }
        Ok(Self::raw(coeffs, self.horizon))
    }

    fn same_horizon(&self, other: &Self) -> Result<()> {
        if self.horizon == other.horizon {
            Ok(())
        } else {
            Err(BernsteinError::HorizonMismatch {
                left: self.horizon,
                right: other.horizon,
            })
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        self.same_horizon(other)?;
        if self.degree() == other.degree() {
            Ok(())
        } else {
            Err(BernsteinError::DegreeMismatch {
                left: self.degree(),
                right: other.degree(),
            })
        }
    }

    /// Product of two polynomials of any degrees on the same horizon.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.same_horizon(other)?;
        let n = self.degree();
        let m = other.degree();
        let mut out: Coeffs = smallvec::smallvec![0.0; n + m + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            let wa = a * binomial(n, i);
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += wa * b * binomial(m, j);
            }
        }
        for (k, c) in out.iter_mut().enumerate() {
            *c /= binomial(n + m, k);
        }
        Ok(Self::raw(out, self.horizon))
    }

    /// Splits at `s` into pieces on `[0, s]` and `[0, T - s]`.
    pub fn split_at(&self, s: f64) -> Result<(Self, Self)> {
        if !(s > 0.0 && s < self.horizon) {
            return Err(BernsteinError::SplitOutOfRange {
                s,
                horizon: self.horizon,
            });
        }
        let u = s / self.horizon;
        let n = self.degree();
        let mut work = self.coeffs.clone();
        let mut left = Coeffs::with_capacity(n + 1);
        let mut right: Coeffs = smallvec::smallvec![0.0; n + 1];
        left.push(work[0]);
        right[n] = work[n];
        for level in 1..=n {
            for i in 0..=n - level {
                work[i] = (1.0 - u) * work[i] + u * work[i + 1];
            }
            left.push(work[0]);
            right[n - level] = work[n - level];
        }
        Ok((
            Self::raw(left, s),
            Self::raw(right, self.horizon - s),
        ))
    }

    /// Integral over `[0, T]`: `T / (n + 1) * sum(coeffs)`.
    pub fn definite_integral(&self) -> f64 {
        self.horizon / (self.degree() + 1) as f64 * self.coeffs.iter().sum::<f64>()
    }

    /// Proved iff every coefficient is at least `-CERT_EPS`.
    pub fn prove_nonnegative(&self) -> Certificate {
        Certificate::from_bool(self.coeffs.iter().all(|&c| c >= -CERT_EPS))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self::raw(coeffs, self.horizon))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self::raw(coeffs, self.horizon))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::raw(self.coeffs.iter().map(|c| k * c).collect(), self.horizon)
    }

    /// Adds a constant. Constants have every Bernstein coefficient equal, so
    /// this shifts each coefficient.
    pub fn offset(&self, c: f64) -> Self {
        Self::raw(self.coeffs.iter().map(|a| a + c).collect(), self.horizon)
    }

    /// `k * self + offset` without an intermediate.
    pub fn affine(&self, k: f64, offset: f64) -> Self {
        Self::raw(
            self.coeffs.iter().map(|a| k * a + offset).collect(),
            self.horizon,
        )
    }
}

/// Certifies `lo <= num(t) / den(t) <= hi` on the whole interval.
///
/// Proved iff `den`, `hi * den - num` and `num - lo * den` all have
/// nonnegative coefficients. The caller aligns degrees.
pub fn rational_range_check(
    num: &PolySegment,
    den: &PolySegment,
    lo: f64,
    hi: f64,
) -> Result<Certificate> {
    if lo > hi {
        return Err(BernsteinError::InvalidRange { lo, hi });
    }
    num.same_shape(den)?;
    let proved = den
        .coeffs
        .iter()
        .zip(&num.coeffs)
        .all(|(&d, &n)| d >= -CERT_EPS && hi * d - n >= -CERT_EPS && n - lo * d >= -CERT_EPS);
    Ok(Certificate::from_bool(proved))
}

/// Three scalar Bernstein polynomials sharing degree and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Curve3Repr", into = "Curve3Repr")]
pub struct Curve3 {
    axes: [PolySegment; 3],
}

#[derive(Serialize, Deserialize)]
struct Curve3Repr {
    horizon: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl TryFrom<Curve3Repr> for Curve3 {
    type Error = BernsteinError;

    fn try_from(r: Curve3Repr) -> Result<Self> {
        Curve3::new(
            PolySegment::new(&r.x, r.horizon)?,
            PolySegment::new(&r.y, r.horizon)?,
            PolySegment::new(&r.z, r.horizon)?,
        )
    }
}

impl From<Curve3> for Curve3Repr {
    fn from(c: Curve3) -> Self {
        let [x, y, z] = c.axes;
        Curve3Repr {
            horizon: x.horizon,
            x: x.coeffs.to_vec(),
            y: y.coeffs.to_vec(),
            z: z.coeffs.to_vec(),
        }
    }
}

impl Curve3 {
    pub fn new(x: PolySegment, y: PolySegment, z: PolySegment) -> Result<Self> {
        x.same_shape(&y)?;
        x.same_shape(&z)?;
        Ok(Self { axes: [x, y, z] })
    }

    #[inline]
    pub(crate) fn raw(axes: [PolySegment; 3]) -> Self {
        Self { axes }
    }

    /// Builds a curve from control points.
    pub fn from_control_points(points: &[Vector3<f64>], horizon: f64) -> Result<Self> {
        let mut axes: [Coeffs; 3] = Default::default();
        for p in points {
            for k in 0..3 {
                axes[k].push(p[k]);
            }
        }
        let [x, y, z] = axes;
        Self::new(
            PolySegment::from_coeffs(x, horizon)?,
            PolySegment::from_coeffs(y, horizon)?,
            PolySegment::from_coeffs(z, horizon)?,
        )
    }

    /// The constant curve at `p`.
    pub fn stationary(p: Vector3<f64>, degree: usize, horizon: f64) -> Result<Self> {
        Self::from_control_points(&vec![p; degree + 1], horizon)
    }

    /// Straight line from `p` with constant velocity `v`, as a degree-1 curve.
    pub fn linear(p: Vector3<f64>, v: Vector3<f64>, horizon: f64) -> Result<Self> {
        Self::from_control_points(&[p, p + v * horizon], horizon)
    }

    #[inline]
    pub fn x(&self) -> &PolySegment {
        &self.axes[0]
    }
    #[inline]
    pub fn y(&self) -> &PolySegment {
        &self.axes[1]
    }
    #[inline]
    pub fn z(&self) -> &PolySegment {
        &self.axes[2]
    }
    #[inline]
    pub fn axes(&self) -> &[PolySegment; 3] {
        &self.axes
    }
    #[inline]
    pub fn degree(&self) -> usize {
        self.axes[0].degree()
    }
    #[inline]
    pub fn horizon(&self) -> f64 {
        self.axes[0].horizon
    }

    #[inline]
    pub fn control_point(&self, i: usize) -> Vector3<f64> {
        Vector3::new(
            self.axes[0].coeffs[i],
            self.axes[1].coeffs[i],
            self.axes[2].coeffs[i],
        )
    }

    pub fn control_points(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        (0..=self.degree()).map(move |i| self.control_point(i))
    }

    pub fn start(&self) -> Vector3<f64> {
        self.control_point(0)
    }

    pub fn end(&self) -> Vector3<f64> {
        self.control_point(self.degree())
    }

    pub fn evaluate(&self, t: f64) -> Result<Vector3<f64>> {
        Ok(Vector3::new(
            self.axes[0].evaluate(t)?,
            self.axes[1].evaluate(t)?,
            self.axes[2].evaluate(t)?,
        ))
    }

    /// Value with `t` clamped into the domain.
    pub fn value_at(&self, t: f64) -> Vector3<f64> {
        Vector3::new(
            self.axes[0].value_at(t),
            self.axes[1].value_at(t),
            self.axes[2].value_at(t),
        )
    }

    pub fn derivative(&self) -> Self {
        Self::raw(self.axes.each_ref().map(PolySegment::derivative))
    }

    pub fn elevate(&self, target: usize) -> Result<Self> {
        if target == self.degree() {
            return Ok(self.clone());
        }
        Ok(Self::raw([
            self.axes[0].elevate(target)?,
            self.axes[1].elevate(target)?,
            self.axes[2].elevate(target)?,
        ]))
    }

    pub fn split_at(&self, s: f64) -> Result<(Self, Self)> {
        let (x0, x1) = self.axes[0].split_at(s)?;
        let (y0, y1) = self.axes[1].split_at(s)?;
        let (z0, z1) = self.axes[2].split_at(s)?;
        Ok((Self::raw([x0, y0, z0]), Self::raw([x1, y1, z1])))
    }

    /// Splits at increasing interior times, returning one piece per interval.
    pub fn split_many(&self, times: &[f64]) -> Result<Vec<Self>> {
        let mut pieces = Vec::with_capacity(times.len() + 1);
        let mut rest = self.clone();
        let mut consumed = 0.0;
        for &t in times {
            let (left, right) = rest.split_at(t - consumed)?;
            pieces.push(left);
            consumed = t;
            rest = right;
        }
        pieces.push(rest);
        Ok(pieces)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self::raw([
            self.axes[0].add(&other.axes[0])?,
            self.axes[1].add(&other.axes[1])?,
            self.axes[2].add(&other.axes[2])?,
        ]))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self::raw([
            self.axes[0].sub(&other.axes[0])?,
            self.axes[1].sub(&other.axes[1])?,
            self.axes[2].sub(&other.axes[2])?,
        ]))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::raw(self.axes.each_ref().map(|a| a.scale(k)))
    }

    pub fn translate(&self, d: Vector3<f64>) -> Self {
        Self::raw([
            self.axes[0].offset(d.x),
            self.axes[1].offset(d.y),
            self.axes[2].offset(d.z),
        ])
    }

    /// `w_x a_x^2 + w_y a_y^2 + w_z a_z^2`, degree `2n`.
    pub fn weighted_sqnorm(&self, w: [f64; 3]) -> Result<PolySegment> {
        self.weighted_inner(self, w)
    }

    /// `sum_k w_k a_k(t) b_k(t)`. The two curves may differ in degree; the
    /// result has degree `deg(a) + deg(b)`.
    pub fn weighted_inner(&self, other: &Self, w: [f64; 3]) -> Result<PolySegment> {
        if let Some(&bad) = w.iter().find(|&&wk| wk < 0.0 || wk.is_nan()) {
            return Err(BernsteinError::NegativeWeight(bad));
        }
        let n = self.degree();
        let m = other.degree();
        self.axes[0].same_horizon(&other.axes[0])?;
        let mut out: Coeffs = smallvec::smallvec![0.0; n + m + 1];
        for k in 0..3 {
            if w[k] == 0.0 {
                continue;
            }
            let a = &self.axes[k].coeffs;
            let b = &other.axes[k].coeffs;
            for i in 0..=n {
                let wa = w[k] * a[i] * binomial(n, i);
                for j in 0..=m {
                    out[i + j] += wa * b[j] * binomial(m, j);
                }
            }
        }
        for (k, c) in out.iter_mut().enumerate() {
            *c /= binomial(n + m, k);
        }
        Ok(PolySegment::raw(out, self.horizon()))
    }
}

/// Free-function spelling of [`Curve3::weighted_sqnorm`].
pub fn weighted_sqnorm(curve: &Curve3, w: [f64; 3]) -> Result<PolySegment> {
    curve.weighted_sqnorm(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(c: &[f64], t: f64) -> PolySegment {
        PolySegment::new(c, t).unwrap()
    }

    /// Monomial-free oracle: direct basis sum with independently computed
    /// binomials.
    fn basis_sum(c: &[f64], horizon: f64, t: f64) -> f64 {
        let n = c.len() - 1;
        let u = t / horizon;
        let mut binom = 1.0;
        let mut acc = 0.0;
        for (i, ci) in c.iter().enumerate() {
            acc += ci * binom * u.powi(i as i32) * (1.0 - u).powi((n - i) as i32);
            binom = binom * (n - i) as f64 / (i + 1) as f64;
        }
        acc
    }

    #[test]
    fn binomial_table_matches_formula() {
        assert_eq!(binomial(24, 12), 2_704_156.0);
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(binomial(60, 1), 60.0);
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(seg(&[5.0], 1.0).evaluate(0.3).unwrap(), 5.0);
        assert!((seg(&[0.0, 1.0], 1.0).evaluate(0.25).unwrap() - 0.25).abs() < 1e-15);
        // t(1 - t) at 0.5, monomial oracle
        let v = seg(&[0.0, 0.5, 0.0], 1.0).evaluate(0.5).unwrap();
        assert!((v - 0.5 * (1.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn evaluate_rejects_out_of_domain() {
        let p = seg(&[1.0, 2.0], 2.0);
        assert!(matches!(
            p.evaluate(2.5),
            Err(BernsteinError::OutOfDomain { .. })
        ));
        assert!(p.evaluate(-1e-9).is_err());
        assert_eq!(p.evaluate(2.0).unwrap(), 2.0);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(PolySegment::new(&[], 1.0), Err(BernsteinError::Empty));
        assert!(matches!(
            PolySegment::new(&[1.0], 0.0),
            Err(BernsteinError::InvalidHorizon(_))
        ));
        assert!(matches!(
            PolySegment::new(&[1.0, f64::NAN], 1.0),
            Err(BernsteinError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(seg(&[0.0, 1.0], 1.0).derivative().coeffs(), &[1.0]);
        // d/dt t(1 - t) = 1 - 2t
        assert_eq!(seg(&[0.0, 0.5, 0.0], 1.0).derivative().coeffs(), &[1.0, -1.0]);
        assert_eq!(seg(&[3.0, 3.0, 3.0], 4.0).derivative().coeffs(), &[0.0, 0.0]);
        let d0 = seg(&[7.0], 1.0).derivative();
        assert_eq!(d0.degree(), 0);
        assert_eq!(d0.coeffs(), &[0.0]);
    }

    #[test]
    fn elevate_examples() {
        let e = seg(&[0.0, 1.0], 1.0).elevate(2).unwrap();
        assert_eq!(e.coeffs(), &[0.0, 0.5, 1.0]);
        for t in (0..=100).map(|i| i as f64 / 100.0) {
            assert!((e.value_at(t) - t).abs() < 1e-14);
        }
        assert_eq!(seg(&[2.5], 1.0).elevate(4).unwrap().coeffs(), &[2.5; 5]);
        let p = seg(&[0.0, 0.5, 0.0], 1.0);
        assert_eq!(p.elevate(2).unwrap(), p);
        assert!(matches!(
            p.elevate(1),
            Err(BernsteinError::ElevationBelowDegree { .. })
        ));
    }

    #[test]
    fn multiply_examples() {
        let a = seg(&[0.0, 1.0], 1.0);
        let b = seg(&[1.0, 0.0], 1.0);
        assert_eq!(a.multiply(&b).unwrap().coeffs(), &[0.0, 0.5, 0.0]);
        assert_eq!(a.multiply(&a).unwrap().coeffs(), &[0.0, 0.0, 1.0]);
        let one = seg(&[1.0, 1.0], 1.0);
        let q = seg(&[1.0, -2.0, 4.0], 1.0);
        let prod = one.multiply(&q).unwrap();
        let elevated = q.elevate(3).unwrap();
        for (x, y) in prod.coeffs().iter().zip(elevated.coeffs()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(matches!(
            a.multiply(&seg(&[1.0], 2.0)),
            Err(BernsteinError::HorizonMismatch { .. })
        ));
    }

    #[test]
    fn split_examples() {
        let (l, r) = seg(&[0.0, 1.0], 1.0).split_at(0.5).unwrap();
        assert_eq!(l.coeffs(), &[0.0, 0.5]);
        assert_eq!(r.coeffs(), &[0.5, 1.0]);
        assert_eq!(l.horizon(), 0.5);
        assert_eq!(r.horizon(), 0.5);
        let (l, r) = seg(&[2.0, 2.0, 2.0], 3.0).split_at(1.0).unwrap();
        assert!(l.coeffs().iter().chain(r.coeffs()).all(|&c| (c - 2.0).abs() < 1e-15));
        let p = seg(&[1.0, -3.0, 2.0, 5.0], 2.0);
        let (l, r) = p.split_at(0.7).unwrap();
        for i in 0..=100 {
            let t = 0.7 * i as f64 / 100.0;
            assert!((l.value_at(t) - p.value_at(t)).abs() < 1e-12);
            let t2 = 1.3 * i as f64 / 100.0;
            assert!((r.value_at(t2) - p.value_at(0.7 + t2)).abs() < 1e-12);
        }
        assert!(p.split_at(0.0).is_err());
        assert!(p.split_at(2.0).is_err());
    }

    #[test]
    fn integral_examples() {
        let i = seg(&[0.0, 0.5, 0.0], 1.0).definite_integral();
        assert!((i - 1.0 / 6.0).abs() < 1e-15);
        assert!((seg(&[3.0], 2.5).definite_integral() - 7.5).abs() < 1e-15);
        assert!((seg(&[0.0, 1.0], 2.0).definite_integral() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonnegativity_examples() {
        assert_eq!(seg(&[0.1, 0.2, 0.0], 1.0).prove_nonnegative(), Certificate::Proved);
        let p = seg(&[1.0, -0.5, 1.0], 1.0);
        assert_eq!(p.prove_nonnegative(), Certificate::Unknown);
        // actual minimum is 1 - 3t + 3t^2 at t = 1/2 -> 0.25 > 0
        let min = (0..=1000)
            .map(|i| basis_sum(p.coeffs(), 1.0, i as f64 / 1000.0))
            .fold(f64::INFINITY, f64::min);
        assert!((min - 0.25).abs() < 1e-9);
        let q = seg(&[-1.0, 0.0, 0.0], 1.0);
        assert_eq!(q.prove_nonnegative(), Certificate::Unknown);
        assert_eq!(q.evaluate(0.0).unwrap(), -1.0);
        assert_eq!(seg(&[-1e-13, 1.0], 1.0).prove_nonnegative(), Certificate::Proved);
    }

    #[test]
    fn weighted_sqnorm_examples() {
        let c = Curve3::new(seg(&[0.0, 1.0], 1.0), seg(&[0.0, 0.0], 1.0), seg(&[0.0, 0.0], 1.0))
            .unwrap();
        assert_eq!(c.weighted_sqnorm([1.0, 1.0, 1.0]).unwrap().coeffs(), &[0.0, 0.0, 1.0]);
        let z = c.weighted_sqnorm([0.0, 0.0, 0.0]).unwrap();
        assert!(z.coeffs().iter().all(|&v| v == 0.0));
        let k = Curve3::stationary(Vector3::new(2.0, 3.0, 4.0), 2, 1.0).unwrap();
        let s = k.weighted_sqnorm([1.0, 1.0, 0.0]).unwrap();
        assert!(s.coeffs().iter().all(|&v| (v - 13.0).abs() < 1e-12));
        assert!(matches!(
            c.weighted_sqnorm([1.0, -1.0, 0.0]),
            Err(BernsteinError::NegativeWeight(_))
        ));
    }

    #[test]
    fn rational_range_examples() {
        let num = seg(&[0.0, 1.0], 1.0);
        let den = seg(&[2.0, 2.0], 1.0);
        assert_eq!(
            rational_range_check(&num, &den, -1.0, 1.0).unwrap(),
            Certificate::Proved
        );
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let r = num.value_at(t) / den.value_at(t);
            assert!((0.0..=0.5).contains(&r));
        }
        let pos = seg(&[1.0, 3.0, 2.0], 1.0);
        assert_eq!(
            rational_range_check(&pos, &pos, 1.0, 1.0).unwrap(),
            Certificate::Proved
        );
        let bad_den = seg(&[1.0, -0.1, 1.0], 1.0);
        let n3 = seg(&[0.0, 0.0, 0.0], 1.0);
        assert_eq!(
            rational_range_check(&n3, &bad_den, -1.0, 1.0).unwrap(),
            Certificate::Unknown
        );
        assert!(matches!(
            rational_range_check(&num, &den, 1.0, -1.0),
            Err(BernsteinError::InvalidRange { .. })
        ));
        assert!(matches!(
            rational_range_check(&pos, &den, -1.0, 1.0),
            Err(BernsteinError::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn curve_split_many_matches_evaluation() {
        let c = Curve3::from_control_points(
            &[
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 2.0, 0.0),
                Vector3::new(3.0, -1.0, 1.0),
                Vector3::new(4.0, 0.0, 2.0),
            ],
            2.0,
        )
        .unwrap();
        let pieces = c.split_many(&[0.5, 1.2]).unwrap();
        assert_eq!(pieces.len(), 3);
        assert!((pieces[0].horizon() - 0.5).abs() < 1e-15);
        assert!((pieces[1].horizon() - 0.7).abs() < 1e-12);
        assert!((pieces[2].horizon() - 0.8).abs() < 1e-12);
        assert!((pieces[1].end() - c.value_at(1.2)).norm() < 1e-12);
        assert!((pieces[2].value_at(0.3) - c.value_at(1.5)).norm() < 1e-12);
    }

    #[test]
    fn serde_roundtrip_preserves_bits() {
        let c = Curve3::from_control_points(
            &[Vector3::new(0.1, 0.2, 0.3), Vector3::new(1.0 / 3.0, 2.0, 1e-17)],
            0.7,
        )
        .unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: Curve3 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"horizon":1.0,"x":[1.0],"y":[1.0,2.0],"z":[1.0]}"#;
        assert!(serde_json::from_str::<Curve3>(bad).is_err());
    }
}
