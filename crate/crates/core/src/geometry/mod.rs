//! Ellipsoids, polytopes, occupancy maps and the containment certificates
//! used by the collision and visibility checks.

mod distance;
mod occupancy;

pub use distance::{point_ellipsoid_distance, point_ellipsoid_distance_flagged, DistanceSample};
pub use occupancy::{generate_corridor, generate_corridor_around, CorridorConfig, OccupancyMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{Certificate, Curve3, CERT_EPS};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid ellipsoid semi-axes {0:?}")]
    InvalidEllipsoid([f64; 3]),
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("invalid box: min {min:?} max {max:?}")]
    InvalidBox { min: [f64; 3], max: [f64; 3] },
    #[error("point {0:?} lies outside the map bounds")]
    OutOfBounds([f64; 3]),
    #[error("invalid occupancy map: {0}")]
    InvalidMap(String),
    #[error("map file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid corridor sequence: {0}")]
    InvalidCorridor(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Axis-aligned ellipsoid given by its semi-axes. The z axis may be
/// infinite, which models a vertical cylinder for planar scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    semi_axes: Vector3<f64>,
}

impl Ellipsoid {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Result<Self> {
        let ok_finite = |r: f64| r.is_finite() && r > 0.0;
        if ok_finite(rx) && ok_finite(ry) && (ok_finite(rz) || rz == f64::INFINITY) {
            Ok(Self {
                semi_axes: Vector3::new(rx, ry, rz),
            })
        } else {
            Err(GeometryError::InvalidEllipsoid([rx, ry, rz]))
        }
    }

    pub fn from_array(r: [f64; 3]) -> Result<Self> {
        Self::new(r[0], r[1], r[2])
    }

    pub fn sphere(r: f64) -> Result<Self> {
        Self::new(r, r, r)
    }

    /// Vertical cylinder with elliptic cross-section.
    pub fn cylinder(rx: f64, ry: f64) -> Result<Self> {
        Self::new(rx, ry, f64::INFINITY)
    }

    pub fn semi_axes(&self) -> Vector3<f64> {
        self.semi_axes
    }

    /// True when the z axis is infinite.
    pub fn is_planar(&self) -> bool {
        self.semi_axes.z.is_infinite()
    }

    /// Grows every finite axis by `margin`.
    pub fn inflated(&self, margin: f64) -> Self {
        let r = self.semi_axes;
        Self {
            semi_axes: Vector3::new(r.x + margin, r.y + margin, r.z + margin),
        }
    }

    pub fn max_finite_axis(&self) -> f64 {
        self.semi_axes
            .iter()
            .copied()
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn min_axis(&self) -> f64 {
        self.semi_axes.min()
    }

    /// Support function `max_{x in E} a . x` of the origin-centered ellipsoid.
    /// With an infinite z axis the z term is dropped when `a_z = 0`, and the
    /// support is infinite otherwise.
    pub fn support(&self, a: &Vector3<f64>) -> f64 {
        let r = self.semi_axes;
        let z_term = if r.z.is_infinite() {
            if a.z == 0.0 {
                0.0
            } else {
                return f64::INFINITY;
            }
        } else {
            (a.z * r.z).powi(2)
        };
        ((a.x * r.x).powi(2) + (a.y * r.y).powi(2) + z_term).sqrt()
    }

    /// Diagonal of `diag(r^-2)`; infinite axes get weight zero.
    pub fn shape_weights(&self) -> [f64; 3] {
        let r = self.semi_axes;
        [r.x.powi(-2), r.y.powi(-2), r.z.powi(-2)]
    }

    /// Diagonal of the Minkowski collision model `diag((r_a + r_b)^-2)`.
    pub fn collision_weights(&self, other: &Ellipsoid) -> [f64; 3] {
        let s = self.semi_axes + other.semi_axes;
        [s.x.powi(-2), s.y.powi(-2), s.z.powi(-2)]
    }

    /// `||p - center||^2` in the shape metric; `<= 1` means inside.
    pub fn shape_norm2(&self, p: &Vector3<f64>, center: &Vector3<f64>) -> f64 {
        let w = self.shape_weights();
        let d = p - center;
        w[0] * d.x * d.x + w[1] * d.y * d.y + w[2] * d.z * d.z
    }
}

/// An ellipsoid whose center follows a curve over the planning horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingObstacle {
    pub curve: Curve3,
    pub shape: Ellipsoid,
}

impl MovingObstacle {
    pub fn new(curve: Curve3, shape: Ellipsoid) -> Self {
        Self { curve, shape }
    }

    /// Constant-velocity forecast over `horizon`.
    pub fn constant_velocity(p: Vector3<f64>, v: Vector3<f64>, shape: Ellipsoid, horizon: f64) -> Self {
        Self {
            curve: Curve3::linear(p, v, horizon).expect("finite state and positive horizon"),
            shape,
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        if (0..3).all(|k| min[k].is_finite() && max[k].is_finite() && min[k] <= max[k]) {
            Ok(Self { min, max })
        } else {
            Err(GeometryError::InvalidBox {
                min: min.into(),
                max: max.into(),
            })
        }
    }

    pub fn around(points: &[Vector3<f64>]) -> Self {
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self { min, max }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    /// Unit outward normal.
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Halfspace {
    #[inline]
    pub fn slack(&self, p: &Vector3<f64>) -> f64 {
        self.offset - self.normal.dot(p)
    }
}

/// Convex polytope `{x : a_i . x <= b_i}` with a strictly interior witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct Polytope {
    halfspaces: Vec<Halfspace>,
    witness: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    halfspaces: Vec<Halfspace>,
    witness: Vector3<f64>,
}

impl TryFrom<PolytopeRepr> for Polytope {
    type Error = GeometryError;
    fn try_from(r: PolytopeRepr) -> Result<Self> {
        Polytope::new(r.halfspaces, r.witness)
    }
}

impl From<Polytope> for PolytopeRepr {
    fn from(p: Polytope) -> Self {
        PolytopeRepr {
            halfspaces: p.halfspaces,
            witness: p.witness,
        }
    }
}

impl Polytope {
    pub fn new(halfspaces: Vec<Halfspace>, witness: Vector3<f64>) -> Result<Self> {
        if halfspaces.is_empty() {
            return Err(GeometryError::InvalidPolytope("no halfspaces".into()));
        }
        for h in &halfspaces {
            if (h.normal.norm() - 1.0).abs() > 1e-9 || !h.offset.is_finite() {
                return Err(GeometryError::InvalidPolytope(format!(
                    "halfspace {h:?} needs a unit normal and finite offset"
                )));
            }
            if h.slack(&witness) <= 0.0 {
                return Err(GeometryError::InvalidPolytope(format!(
                    "witness {witness:?} is not strictly inside {h:?}"
                )));
            }
        }
        Ok(Self {
            halfspaces,
            witness,
        })
    }

    /// Box with six axis-aligned halfspaces; needs `min < max` on each axis.
    pub fn from_box(b: &Aabb) -> Result<Self> {
        if (0..3).any(|k| b.min[k] >= b.max[k]) {
            return Err(GeometryError::InvalidBox {
                min: b.min.into(),
                max: b.max.into(),
            });
        }
        let mut hs = Vec::with_capacity(6);
        for k in 0..3 {
            let e = Vector3::ith(k, 1.0);
            hs.push(Halfspace {
                normal: -e,
                offset: -b.min[k],
            });
            hs.push(Halfspace {
                normal: e,
                offset: b.max[k],
            });
        }
        Self::new(hs, b.center())
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn witness(&self) -> Vector3<f64> {
        self.witness
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.slack(p) >= -tol)
    }

    /// Recovers the box when every normal is axis-aligned.
    pub fn as_box(&self) -> Option<Aabb> {
        let mut min = Vector3::repeat(f64::NEG_INFINITY);
        let mut max = Vector3::repeat(f64::INFINITY);
        for h in &self.halfspaces {
            let k = (0..3).find(|&k| h.normal[k].abs() == 1.0)?;
            if h.normal[k] > 0.0 {
                max[k] = max[k].min(h.offset);
            } else {
                min[k] = min[k].max(-h.offset);
            }
        }
        Aabb::new(min, max).ok()
    }
}

/// Certifies that the curve, swept with the optional inflation ellipsoid,
/// stays inside the polytope: every control point plus the inflation's
/// support along each normal must satisfy each halfspace.
///
/// For an ellipsoid with an infinite z axis, halfspaces whose normal is
/// purely vertical are skipped (planar containment); a tilted normal gives
/// infinite support and the check fails.
pub fn curve_in_polytope(c: &Curve3, inflate: Option<&Ellipsoid>, s: &Polytope) -> Certificate {
    for h in s.halfspaces() {
        let support = match inflate {
            None => 0.0,
            Some(e) => {
                if e.is_planar() && h.normal.x == 0.0 && h.normal.y == 0.0 {
                    continue;
                }
                e.support(&h.normal)
            }
        };
        if !support.is_finite() {
            return Certificate::Unknown;
        }
        let bound = h.offset - support + CERT_EPS;
        let [x, y, z] = c.axes();
        let (xs, ys, zs) = (x.coeffs(), y.coeffs(), z.coeffs());
        for i in 0..xs.len() {
            if h.normal.x * xs[i] + h.normal.y * ys[i] + h.normal.z * zs[i] > bound {
                return Certificate::Unknown;
            }
        }
    }
    Certificate::Proved
}

/// Time-split corridor chain: polytope `k` covers `[tau[k], tau[k + 1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorridorRepr", into = "CorridorRepr")]
pub struct CorridorSequence {
    tau: Vec<f64>,
    polytopes: Vec<Polytope>,
}

#[derive(Serialize, Deserialize)]
struct CorridorRepr {
    tau: Vec<f64>,
    polytopes: Vec<Polytope>,
}

impl TryFrom<CorridorRepr> for CorridorSequence {
    type Error = GeometryError;
    fn try_from(r: CorridorRepr) -> Result<Self> {
        CorridorSequence::new(r.tau, r.polytopes)
    }
}

impl From<CorridorSequence> for CorridorRepr {
    fn from(c: CorridorSequence) -> Self {
        CorridorRepr {
            tau: c.tau,
            polytopes: c.polytopes,
        }
    }
}

impl CorridorSequence {
    pub fn new(tau: Vec<f64>, polytopes: Vec<Polytope>) -> Result<Self> {
        if polytopes.is_empty() {
            return Err(GeometryError::InvalidCorridor("no polytopes".into()));
        }
        if tau.len() != polytopes.len() + 1 {
            return Err(GeometryError::InvalidCorridor(format!(
                "{} split times for {} polytopes",
                tau.len(),
                polytopes.len()
            )));
        }
        if tau[0] != 0.0 || tau.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GeometryError::InvalidCorridor(format!(
                "split times {tau:?} must start at 0 and increase strictly"
            )));
        }
        Ok(Self { tau, polytopes })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn polytopes(&self) -> &[Polytope] {
        &self.polytopes
    }

    /// Number of segments `M`.
    pub fn len(&self) -> usize {
        self.polytopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polytopes.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.tau.last().expect("nonempty")
    }

    /// Split times strictly inside the horizon.
    pub fn interior_times(&self) -> &[f64] {
        &self.tau[1..self.tau.len() - 1]
    }
}
