//! Voxel occupancy maps and greedy box corridors.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{Aabb, GeometryError, Polytope, Result};

/// Largest dense grid we are willing to allocate for the summed-volume table.
const MAX_GRID_CELLS: usize = 1 << 26;
const INDEX_TOL: f64 = 1e-9;

/// Static occupancy on a regular grid. Cell `(i, j, k)` covers the half-open
/// box `origin + [i, i+1) * resolution` (per axis).
///
/// Box queries run in constant time through a 3-D summed-volume table over the
/// cells covering `bounds`.
#[derive(Debug, Clone)]
pub struct OccupancyMap {
    resolution: f64,
    origin: Vector3<f64>,
    bounds: Aabb,
    /// First cell index covering `bounds` on each axis.
    lo: [i64; 3],
    dims: [usize; 3],
    occupied: Vec<[i64; 3]>,
    /// `(dims + 1)` per axis; empty when nothing is occupied.
    prefix: Vec<u32>,
}

impl PartialEq for OccupancyMap {
    fn eq(&self, other: &Self) -> bool {
        self.resolution == other.resolution
            && self.origin == other.origin
            && self.bounds == other.bounds
            && self.occupied == other.occupied
    }
}

impl OccupancyMap {
    pub fn new(
        resolution: f64,
        origin: Vector3<f64>,
        bounds: Aabb,
        cells: impl IntoIterator<Item = [i64; 3]>,
    ) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GeometryError::InvalidMap(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidMap("origin must be finite".into()));
        }
        let mut lo = [0i64; 3];
        let mut dims = [0usize; 3];
        for k in 0..3 {
            let a = ((bounds.min[k] - origin[k]) / resolution + INDEX_TOL).floor() as i64;
            let b = ((bounds.max[k] - origin[k]) / resolution - INDEX_TOL).ceil() as i64;
            lo[k] = a;
            dims[k] = (b - a).max(1) as usize;
        }
        let mut occupied: Vec<[i64; 3]> = cells.into_iter().collect();
        occupied.sort_unstable();
        occupied.dedup();
        for c in &occupied {
            if (0..3).any(|k| c[k] < lo[k] || c[k] >= lo[k] + dims[k] as i64) {
                return Err(GeometryError::InvalidMap(format!(
                    "occupied cell {c:?} lies outside the bounds"
                )));
            }
        }
        let mut map = Self {
            resolution,
            origin,
            bounds,
            lo,
            dims,
            occupied,
            prefix: Vec::new(),
        };
        map.build_prefix()?;
        Ok(map)
    }

    /// Map with no occupied cells.
    pub fn empty(resolution: f64, bounds: Aabb) -> Result<Self> {
        Self::new(resolution, bounds.min, bounds, std::iter::empty())
    }

    /// Marks every cell that overlaps one of the boxes (touching faces do not
    /// count).
    pub fn from_boxes(resolution: f64, origin: Vector3<f64>, bounds: Aabb, boxes: &[Aabb]) -> Result<Self> {
        let probe = Self::new(resolution, origin, bounds, std::iter::empty())?;
        let mut cells = Vec::new();
        for b in boxes {
            let (a, z) = probe.index_range(&b.min, &b.max);
            for i in a[0]..=z[0] {
                for j in a[1]..=z[1] {
                    for k in a[2]..=z[2] {
                        cells.push([i, j, k]);
                    }
                }
            }
        }
        Self::new(resolution, origin, bounds, cells)
    }

    /// Voxelizes a point cloud; points outside the bounds are ignored.
    pub fn from_points(resolution: f64, origin: Vector3<f64>, bounds: Aabb, points: &[Vector3<f64>]) -> Result<Self> {
        let probe = Self::new(resolution, origin, bounds, std::iter::empty())?;
        let cells: Vec<[i64; 3]> = points
            .iter()
            .filter(|p| bounds.contains(p))
            .map(|p| probe.cell_of(p))
            .filter(|c| probe.in_grid(c))
            .collect();
        Self::new(resolution, origin, bounds, cells)
    }

    /// Reads a point cloud with one `x y z` triple per line; blank lines and
    /// lines starting with `#` are skipped.
    pub fn load_points(path: &Path, resolution: f64, origin: Vector3<f64>, bounds: Aabb) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = parse_floats::<3>(line, n + 1)?;
            points.push(Vector3::from(v));
        }
        Self::from_points(resolution, origin, bounds, &points)
    }

    /// Parses the text map format:
    ///
    /// ```text
    /// # comment
    /// resolution 0.1
    /// origin 0 0 0
    /// bounds -3 -3 0 3 3 2
    /// cells
    /// 4 5 0
    /// 4 6 0
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut resolution = None;
        let mut origin = None;
        let mut bounds = None;
        let mut cells = Vec::new();
        let mut in_cells = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = n + 1;
            if in_cells {
                let mut c = [0i64; 3];
                let mut parts = line.split_whitespace();
                for slot in &mut c {
                    let tok = parts.next().ok_or_else(|| parse_err(line_no, "expected three cell indices"))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| parse_err(line_no, &format!("bad cell index {tok:?}")))?;
                }
                if parts.next().is_some() {
                    return Err(parse_err(line_no, "expected three cell indices"));
                }
                cells.push(c);
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            match key {
                "resolution" => resolution = Some(parse_floats::<1>(rest, line_no)?[0]),
                "origin" => origin = Some(Vector3::from(parse_floats::<3>(rest, line_no)?)),
                "bounds" => {
                    let v = parse_floats::<6>(rest, line_no)?;
                    bounds = Some(
                        Aabb::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
                            .map_err(|e| parse_err(line_no, &e.to_string()))?,
                    );
                }
                "cells" => in_cells = true,
                other => return Err(parse_err(line_no, &format!("unknown key {other:?}"))),
            }
        }
        let resolution = resolution.ok_or_else(|| GeometryError::InvalidMap("missing resolution".into()))?;
        let origin = origin.ok_or_else(|| GeometryError::InvalidMap("missing origin".into()))?;
        let bounds = bounds.ok_or_else(|| GeometryError::InvalidMap("missing bounds".into()))?;
        Self::new(resolution, origin, bounds, cells)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`OccupancyMap::parse`]; floats use shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = self.origin;
        let (a, b) = (self.bounds.min, self.bounds.max);
        let _ = writeln!(s, "resolution {:?}", self.resolution);
        let _ = writeln!(s, "origin {:?} {:?} {:?}", o.x, o.y, o.z);
        let _ = writeln!(s, "bounds {:?} {:?} {:?} {:?} {:?} {:?}", a.x, a.y, a.z, b.x, b.y, b.z);
        let _ = writeln!(s, "cells");
        for c in &self.occupied {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        s
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn occupied(&self) -> &[[i64; 3]] {
        &self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn cell_of(&self, p: &Vector3<f64>) -> [i64; 3] {
        let mut c = [0i64; 3];
        for k in 0..3 {
            c[k] = ((p[k] - self.origin[k]) / self.resolution).floor() as i64;
        }
        c
    }

    pub fn cell_box(&self, c: [i64; 3]) -> Aabb {
        let min = Vector3::new(
            self.origin.x + c[0] as f64 * self.resolution,
            self.origin.y + c[1] as f64 * self.resolution,
            self.origin.z + c[2] as f64 * self.resolution,
        );
        Aabb {
            min,
            max: min + Vector3::repeat(self.resolution),
        }
    }

    pub fn is_cell_occupied(&self, c: [i64; 3]) -> bool {
        self.occupied.binary_search(&c).is_ok()
    }

    pub fn point_occupied(&self, p: &Vector3<f64>) -> bool {
        self.is_cell_occupied(self.cell_of(p))
    }

    /// True when any occupied cell overlaps the box `[lo, hi]` with positive
    /// volume. A box that is flat along an axis probes the cell containing
    /// that coordinate.
    pub fn box_occupied(&self, lo: &Vector3<f64>, hi: &Vector3<f64>) -> bool {
        if self.prefix.is_empty() {
            return false;
        }
        let (mut a, mut b) = self.index_range(lo, hi);
        for k in 0..3 {
            a[k] = a[k].max(self.lo[k]);
            b[k] = b[k].min(self.lo[k] + self.dims[k] as i64 - 1);
            if a[k] > b[k] {
                return false;
            }
        }
        self.count(a, b) > 0
    }

    /// Distance from `p` to the nearest occupied cell, capped at `cap`.
    /// Inside a cell the result is minus the distance to that cell's
    /// boundary, which bounds the penetration depth from below.
    pub fn distance_to_occupied(&self, p: &Vector3<f64>, cap: f64) -> f64 {
        if self.occupied.is_empty() {
            return cap;
        }
        let c = self.cell_of(p);
        if self.is_cell_occupied(c) {
            let b = self.cell_box(c);
            let depth = (0..3)
                .map(|k| (p[k] - b.min[k]).min(b.max[k] - p[k]))
                .fold(f64::INFINITY, f64::min);
            return -depth;
        }
        // grow a cube of cells until it hits occupancy
        let r = self.resolution;
        let mut w = 1i64;
        let max_w = self.dims.iter().copied().max().unwrap_or(1) as i64 + 1;
        loop {
            let lo = Vector3::new(
                self.origin.x + (c[0] - w) as f64 * r,
                self.origin.y + (c[1] - w) as f64 * r,
                self.origin.z + (c[2] - w) as f64 * r,
            );
            let hi = lo + Vector3::repeat((2 * w + 1) as f64 * r);
            if self.box_occupied(&lo, &hi) {
                break;
            }
            if w > max_w || w as f64 * r >= cap {
                return cap;
            }
            w *= 2;
        }
        // every cell within the found cube is at most this far; scan cells
        // whose box can be closer
        let reach = ((w as f64 + 1.0) * 3f64.sqrt()).ceil() as i64 + 1;
        let mut best = f64::INFINITY;
        if self.occupied.len() as i64 <= (2 * reach + 1).pow(3) {
            for &o in &self.occupied {
                best = best.min(box_distance(p, &self.cell_box(o)));
            }
        } else {
            for i in c[0] - reach..=c[0] + reach {
                for j in c[1] - reach..=c[1] + reach {
                    for k in c[2] - reach..=c[2] + reach {
                        if self.is_cell_occupied([i, j, k]) {
                            best = best.min(box_distance(p, &self.cell_box([i, j, k])));
                        }
                    }
                }
            }
        }
        best.min(cap)
    }

    fn in_grid(&self, c: &[i64; 3]) -> bool {
        (0..3).all(|k| c[k] >= self.lo[k] && c[k] < self.lo[k] + self.dims[k] as i64)
    }

    /// Inclusive cell index range overlapped by the box.
    fn index_range(&self, lo: &Vector3<f64>, hi: &Vector3<f64>) -> ([i64; 3], [i64; 3]) {
        let mut a = [0i64; 3];
        let mut b = [0i64; 3];
        for k in 0..3 {
            let u = (lo[k] - self.origin[k]) / self.resolution;
            let v = (hi[k] - self.origin[k]) / self.resolution;
            a[k] = (u + INDEX_TOL).floor() as i64;
            b[k] = ((v - INDEX_TOL).ceil() as i64 - 1).max(a[k]);
        }
        (a, b)
    }

    fn stride(&self) -> (usize, usize) {
        let ny = self.dims[1] + 1;
        let nz = self.dims[2] + 1;
        (ny * nz, nz)
    }

    fn build_prefix(&mut self) -> Result<()> {
        if self.occupied.is_empty() {
            return Ok(());
        }
        let total = (self.dims[0] + 1) * (self.dims[1] + 1) * (self.dims[2] + 1);
        if total > MAX_GRID_CELLS {
            return Err(GeometryError::InvalidMap(format!(
                "grid of {:?} cells is too large; use a coarser resolution",
                self.dims
            )));
        }
        let (sx, sy) = self.stride();
        let mut p = vec![0u32; total];
        for c in &self.occupied {
            let i = (c[0] - self.lo[0]) as usize + 1;
            let j = (c[1] - self.lo[1]) as usize + 1;
            let k = (c[2] - self.lo[2]) as usize + 1;
            p[i * sx + j * sy + k] = 1;
        }
        for i in 1..=self.dims[0] {
            for j in 1..=self.dims[1] {
                for k in 1..=self.dims[2] {
                    let at = |a: usize, b: usize, c: usize| p[a * sx + b * sy + c] as i64;
                    let v = at(i, j, k) + at(i - 1, j, k) + at(i, j - 1, k) + at(i, j, k - 1)
                        - at(i - 1, j - 1, k)
                        - at(i - 1, j, k - 1)
                        - at(i, j - 1, k - 1)
                        + at(i - 1, j - 1, k - 1);
                    p[i * sx + j * sy + k] = v as u32;
                }
            }
        }
        self.prefix = p;
        Ok(())
    }

    /// Number of occupied cells in the inclusive index range (grid-clamped).
    fn count(&self, a: [i64; 3], b: [i64; 3]) -> i64 {
        let (sx, sy) = self.stride();
        let lo: Vec<usize> = (0..3).map(|k| (a[k] - self.lo[k]) as usize).collect();
        let hi: Vec<usize> = (0..3).map(|k| (b[k] - self.lo[k]) as usize + 1).collect();
        let at = |i: usize, j: usize, k: usize| self.prefix[i * sx + j * sy + k] as i64;
        at(hi[0], hi[1], hi[2]) - at(lo[0], hi[1], hi[2]) - at(hi[0], lo[1], hi[2]) - at(hi[0], hi[1], lo[2])
            + at(lo[0], lo[1], hi[2])
            + at(lo[0], hi[1], lo[2])
            + at(hi[0], lo[1], lo[2])
            - at(lo[0], lo[1], lo[2])
    }
}

fn box_distance(p: &Vector3<f64>, b: &Aabb) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let e = (b.min[k] - p[k]).max(p[k] - b.max[k]).max(0.0);
        d2 += e * e;
    }
    d2.sqrt()
}

fn parse_err(line: usize, message: &str) -> GeometryError {
    GeometryError::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_floats<const N: usize>(s: &str, line: usize) -> Result<[f64; N]> {
    let mut out = [0.0f64; N];
    let mut parts = s.split_whitespace();
    for slot in &mut out {
        let tok = parts
            .next()
            .ok_or_else(|| parse_err(line, &format!("expected {N} numbers")))?;
        *slot = tok
            .parse()
            .map_err(|_| parse_err(line, &format!("bad number {tok:?}")))?;
        if !slot.is_finite() {
            return Err(parse_err(line, &format!("non-finite number {tok:?}")));
        }
    }
    if parts.next().is_some() {
        return Err(parse_err(line, &format!("expected {N} numbers")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorConfig {
    /// Largest growth of each face beyond the seed bounding box.
    pub max_half_extent: f64,
    /// Extra clearance kept from occupied cells.
    pub margin: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            max_half_extent: 2.0,
            margin: 0.0,
        }
    }
}

/// Free box around the segment `[p0, pf]`; see [`generate_corridor_around`].
pub fn generate_corridor(
    p0: &Vector3<f64>,
    pf: &Vector3<f64>,
    map: &OccupancyMap,
    cfg: &CorridorConfig,
) -> Result<Option<Polytope>> {
    generate_corridor_around(&[*p0, *pf], map, cfg)
}

/// Grows the bounding box of `seeds` one map cell at a time, cycling through
/// the faces -x, +x, -y, +y, -z, +z. A face stops for good at its first
/// blocked step, at the map bounds, or after `max_half_extent`.
///
/// Returns `Ok(None)` when the seed box itself touches occupancy or the
/// result has no interior.
pub fn generate_corridor_around(
    seeds: &[Vector3<f64>],
    map: &OccupancyMap,
    cfg: &CorridorConfig,
) -> Result<Option<Polytope>> {
    let bounds = map.bounds();
    for p in seeds {
        let inside = (0..3).all(|k| p[k] >= bounds.min[k] - INDEX_TOL && p[k] <= bounds.max[k] + INDEX_TOL);
        if !inside || !p.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::OutOfBounds((*p).into()));
        }
    }
    let seed = Aabb::around(seeds);
    let mut cur = Aabb {
        min: seed.min.sup(&bounds.min),
        max: seed.max.inf(&bounds.max),
    };
    let m = Vector3::repeat(cfg.margin.max(0.0));
    let blocked = |lo: &Vector3<f64>, hi: &Vector3<f64>| map.box_occupied(&(lo - m), &(hi + m));
    if blocked(&cur.min, &cur.max) {
        return Ok(None);
    }
    let ext = cfg.max_half_extent.max(0.0);
    let lim_lo = (seed.min - Vector3::repeat(ext)).sup(&bounds.min);
    let lim_hi = (seed.max + Vector3::repeat(ext)).inf(&bounds.max);
    let step = map.resolution();
    let mut locked = [false; 6];
    while !locked.iter().all(|&l| l) {
        for face in 0..6 {
            if locked[face] {
                continue;
            }
            let k = face / 2;
            let upper = face % 2 == 1;
            let (mut lo, mut hi) = (cur.min, cur.max);
            if upper {
                lo[k] = cur.max[k];
                hi[k] = (cur.max[k] + step).min(lim_hi[k]);
            } else {
                hi[k] = cur.min[k];
                lo[k] = (cur.min[k] - step).max(lim_lo[k]);
            }
            if hi[k] - lo[k] <= 0.0 || blocked(&lo, &hi) {
                locked[face] = true;
                continue;
            }
            if upper {
                cur.max[k] = hi[k];
                locked[face] = hi[k] >= lim_hi[k];
            } else {
                cur.min[k] = lo[k];
                locked[face] = lo[k] <= lim_lo[k];
            }
        }
    }
    if (0..3).any(|k| cur.max[k] - cur.min[k] <= 0.0) {
        return Ok(None);
    }
    Ok(Some(Polytope::from_box(&cur)?))
}
