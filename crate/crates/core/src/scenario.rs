//! Scenario files: a TOML description of the arena, the moving bodies and
//! every planner setting, plus `key=value` overrides and validation rules.
//!
//! Overrides are applied to the parsed document before it is converted into
//! a [`Scenario`], and validation runs last, so an override can both fix and
//! break a file.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, CorridorConfig, Ellipsoid, OccupancyMap};
use crate::planner::{CheckKind, CostWeights, PlannerLimits, PlannerParams, SamplingShell};
use crate::predictor::PredictorParams;

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem tied to the dotted name of the field at fault.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Mode {
    /// Everything moves in the plane `z = plane_z`; bodies are vertical
    /// cylinders.
    #[serde(rename = "2d")]
    Planar,
    #[serde(rename = "3d")]
    #[default]
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    #[default]
    RandomWaypoint,
    Waypoints,
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub resolution: f64,
    /// Text map, relative to the scenario file.
    pub file: Option<PathBuf>,
    /// Point cloud (`x y z` per line), relative to the scenario file.
    pub cloud: Option<PathBuf>,
    pub boxes: Vec<BoxConfig>,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.1,
            file: None,
            cloud: None,
            boxes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub horizon: f64,
    pub replan_period: f64,
    pub dt: f64,
    pub duration: f64,
    /// Every body stops this long before the end.
    pub freeze_before_end: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            replan_period: 0.1,
            dt: 0.01,
            duration: 30.0,
            freeze_before_end: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBody {
    pub start: [f64; 3],
    #[serde(default)]
    pub waypoints: Vec<[f64; 3]>,
    #[serde(default)]
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleConfig {
    /// Randomly placed wandering obstacles.
    pub count: usize,
    pub semi_axes: [f64; 3],
    pub max_speed: f64,
    /// Each leg's speed is drawn from `[min_speed_fraction, 1] * max_speed`.
    pub min_speed_fraction: f64,
    /// Speed change limit of wanderers; they ease into and out of each leg.
    pub accel: f64,
    pub motion: Motion,
    pub scripted: Vec<ScriptedBody>,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        Self {
            count: 0,
            semi_axes: [0.07; 3],
            max_speed: 1.0,
            min_speed_fraction: 0.5,
            accel: 2.0,
            motion: Motion::RandomWaypoint,
            scripted: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub count: usize,
    pub semi_axes: [f64; 3],
    pub max_speed: f64,
    pub min_speed_fraction: f64,
    pub accel: f64,
    pub motion: Motion,
    /// Group center at the start; random when unset.
    pub start: Option<[f64; 3]>,
    /// Route of the group center for `motion = "waypoints"`.
    pub waypoints: Vec<[f64; 3]>,
    /// Radius of the circle the targets sit on around the group center.
    pub formation_radius: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            count: 1,
            semi_axes: [0.1; 3],
            max_speed: 0.8,
            min_speed_fraction: 0.5,
            accel: 2.0,
            motion: Motion::RandomWaypoint,
            start: None,
            waypoints: Vec::new(),
            formation_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroneConfig {
    pub radius: f64,
    /// Start position; by default `d_des` away from the target group.
    pub start: Option<[f64; 3]>,
}

impl Default for DroneConfig {
    fn default() -> Self {
        Self {
            radius: 0.1,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub samples: usize,
    /// Horizontal velocity uncertainty, m/s.
    pub kappa: f64,
    /// Vertical velocity uncertainty, m/s (ignored in 2d mode).
    pub kappa_z: f64,
    pub corridor_half_extent: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            samples: 300,
            kappa: 0.3,
            kappa_z: 0.1,
            corridor_half_extent: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub samples: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Defaults to the middle of the sampling radius range.
    pub d_des: Option<f64>,
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
    pub fov_deg: f64,
    pub w_a: f64,
    pub w_j: f64,
    pub obstacle_margin: f64,
    pub corridor_half_extent: f64,
    /// Sampling radius range; defaults to `[d_min + 0.1, d_max - 0.1]`.
    pub radius: Option<[f64; 2]>,
    /// Elevation range in degrees; forced to zero in 2d mode.
    pub elevation_deg: [f64; 2],
    pub azimuth_deg: [f64; 2],
    pub check_order: Option<Vec<CheckKind>>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            d_min: 0.4,
            d_max: 1.2,
            d_des: None,
            v_max: 3.0,
            a_max: 8.0,
            yaw_rate_max: 3.0,
            fov_deg: 100.0,
            w_a: 0.01,
            w_j: 0.001,
            obstacle_margin: 0.03,
            corridor_half_extent: 2.0,
            radius: None,
            elevation_deg: [0.0, 30.0],
            azimuth_deg: [0.0, 360.0],
            check_order: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    /// Flight height in 2d mode.
    #[serde(default = "default_plane_z")]
    pub plane_z: f64,
    pub bounds: Bounds,
    #[serde(default)]
    pub map: Option<MapConfig>,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default)]
    pub obstacles: ObstacleConfig,
    #[serde(default)]
    pub targets: TargetConfig,
    #[serde(default)]
    pub drone: DroneConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    /// Directory that relative map paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_plane_z() -> f64 {
    1.0
}

/// Result of one validation rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleCheck {
    pub rule: &'static str,
    pub field: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<RuleCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<ConfigError> {
        self.checks
            .iter()
            .find(|c| !c.passed)
            .map(|c| ConfigError::new(c.field.clone(), format!("{} ({})", c.detail, c.rule)))
    }

    fn rule(&mut self, rule: &'static str, field: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(RuleCheck {
            rule,
            field: field.to_string(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Sets `path` (dot separated) in a TOML document. The value is read as a
/// TOML value when possible and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new(assignment, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::new(assignment, "override key is empty"));
    }
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(key, format!("{part} is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Scenario {
    /// Parses a document and applies overrides; does not validate.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("scenario", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let scenario: Scenario = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::new("scenario", e.message().to_string()))?;
        Ok(scenario)
    }

    /// Reads, overrides and validates a scenario file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("scenario", format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text, overrides)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        if let Some(err) = s.validate().first_failure() {
            return Err(err);
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn is_planar(&self) -> bool {
        self.mode == Mode::Planar
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: Vector3::from(self.bounds.min),
            max: Vector3::from(self.bounds.max),
        }
    }

    fn shape(&self, axes: [f64; 3]) -> Result<Ellipsoid, ConfigError> {
        let z = if self.is_planar() { f64::INFINITY } else { axes[2] };
        Ellipsoid::new(axes[0], axes[1], z).map_err(|e| ConfigError::new("semi_axes", e.to_string()))
    }

    pub fn target_shape(&self) -> Result<Ellipsoid, ConfigError> {
        self.shape(self.targets.semi_axes).map_err(|e| ConfigError::new("targets.semi_axes", e.message))
    }

    pub fn obstacle_shape(&self) -> Result<Ellipsoid, ConfigError> {
        self.shape(self.obstacles.semi_axes).map_err(|e| ConfigError::new("obstacles.semi_axes", e.message))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// The static map: the bounds with any file, point cloud and boxes
    /// merged onto the grid of the first source.
    pub fn build_map(&self) -> Result<OccupancyMap, ConfigError> {
        let bounds = self.bounds();
        let Some(m) = &self.map else {
            return OccupancyMap::empty(0.1, bounds).map_err(|e| ConfigError::new("bounds", e.to_string()));
        };
        let err = |field: &str| {
            let field = field.to_string();
            move |e: crate::geometry::GeometryError| ConfigError::new(field.clone(), e.to_string())
        };
        let mut base = match &m.file {
            Some(f) => OccupancyMap::load(&self.resolve(f)).map_err(err("map.file"))?,
            None => OccupancyMap::empty(m.resolution, bounds).map_err(err("map.resolution"))?,
        };
        if base.bounds() != &bounds {
            base = OccupancyMap::new(base.resolution(), base.origin(), bounds, base.occupied().iter().copied())
                .map_err(err("map.file"))?;
        }
        let mut cells: Vec<[i64; 3]> = base.occupied().to_vec();
        if let Some(c) = &m.cloud {
            let cloud = OccupancyMap::load_points(&self.resolve(c), base.resolution(), base.origin(), bounds)
                .map_err(err("map.cloud"))?;
            cells.extend_from_slice(cloud.occupied());
        }
        let boxes = m
            .boxes
            .iter()
            .map(|b| Aabb::new(Vector3::from(b.min), Vector3::from(b.max)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err("map.boxes"))?;
        let from_boxes =
            OccupancyMap::from_boxes(base.resolution(), base.origin(), bounds, &boxes).map_err(err("map.boxes"))?;
        cells.extend_from_slice(from_boxes.occupied());
        OccupancyMap::new(base.resolution(), base.origin(), bounds, cells).map_err(err("map"))
    }

    pub fn sampling_shell(&self) -> SamplingShell {
        let p = &self.planner;
        let mut shell = SamplingShell::for_band(p.d_min, p.d_max);
        if let Some(r) = p.radius {
            shell.radius = r;
        }
        shell.elevation = if self.is_planar() {
            [0.0, 0.0]
        } else {
            [p.elevation_deg[0].to_radians(), p.elevation_deg[1].to_radians()]
        };
        shell.azimuth = [p.azimuth_deg[0].to_radians(), p.azimuth_deg[1].to_radians()];
        shell
    }

    pub fn planner_params(&self) -> PlannerParams {
        let p = &self.planner;
        let shell = self.sampling_shell();
        PlannerParams {
            horizon: self.timing.horizon,
            samples: p.samples,
            shell,
            limits: PlannerLimits {
                d_min: p.d_min,
                d_max: p.d_max,
                v_max: p.v_max,
                a_max: p.a_max,
                yaw_rate_max: p.yaw_rate_max,
                fov: p.fov_deg.to_radians(),
                drone_radius: self.drone.radius,
            },
            weights: CostWeights {
                w_a: p.w_a,
                w_j: p.w_j,
                d_des: p.d_des.unwrap_or(0.5 * (shell.radius[0] + shell.radius[1])),
            },
            obstacle_margin: p.obstacle_margin,
            corridor: CorridorConfig {
                max_half_extent: p.corridor_half_extent,
                margin: 0.0,
            },
            check_order: p.check_order.clone().unwrap_or_else(|| CheckKind::ALL.to_vec()),
            reuse_min_remaining: self.timing.replan_period,
        }
    }

    pub fn predictor_params(&self) -> PredictorParams {
        PredictorParams {
            samples: self.predictor.samples,
            horizon: self.timing.horizon,
            corridor: CorridorConfig {
                max_half_extent: self.predictor.corridor_half_extent,
                margin: 0.0,
            },
        }
    }

    /// Vertical velocity uncertainty in effect (zero in 2d mode).
    pub fn kappa_z(&self) -> f64 {
        if self.is_planar() {
            0.0
        } else {
            self.predictor.kappa_z
        }
    }

    /// Runs every rule and reports each one.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.rule(
            "schema version",
            "schema",
            self.schema == SCHEMA_VERSION,
            format!("schema {} (supported: {SCHEMA_VERSION})", self.schema),
        );
        let b = &self.bounds;
        let bounds_ok = (0..3).all(|k| b.min[k].is_finite() && b.max[k].is_finite() && b.min[k] < b.max[k]);
        r.rule("bounds nonempty", "bounds", bounds_ok, format!("min {:?} max {:?}", b.min, b.max));
        if self.is_planar() {
            r.rule(
                "flight plane inside bounds",
                "plane_z",
                self.plane_z > b.min[2] && self.plane_z < b.max[2],
                format!("plane_z {}", self.plane_z),
            );
        }

        let t = &self.timing;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        r.rule("positive horizon", "timing.horizon", pos(t.horizon), format!("{}", t.horizon));
        r.rule("positive step", "timing.dt", pos(t.dt), format!("{}", t.dt));
        r.rule("positive duration", "timing.duration", pos(t.duration), format!("{}", t.duration));
        r.rule(
            "replan period within horizon",
            "timing.replan_period",
            pos(t.replan_period) && t.replan_period <= t.horizon && t.replan_period >= t.dt,
            format!("{} must lie in [dt, horizon]", t.replan_period),
        );
        r.rule(
            "freeze time within episode",
            "timing.freeze_before_end",
            t.freeze_before_end >= 0.0 && t.freeze_before_end <= t.duration,
            format!("{}", t.freeze_before_end),
        );

        let o = &self.obstacles;
        r.rule(
            "obstacle semi-axes positive",
            "obstacles.semi_axes",
            o.semi_axes.iter().all(|&a| pos(a)),
            format!("{:?}", o.semi_axes),
        );
        r.rule("obstacle speed nonnegative", "obstacles.max_speed", o.max_speed >= 0.0, format!("{}", o.max_speed));
        r.rule(
            "obstacle speed fraction in [0, 1]",
            "obstacles.min_speed_fraction",
            (0.0..=1.0).contains(&o.min_speed_fraction),
            format!("{}", o.min_speed_fraction),
        );
        r.rule("obstacle acceleration positive", "obstacles.accel", pos(o.accel), format!("{}", o.accel));
        for (i, s) in o.scripted.iter().enumerate() {
            r.rule(
                "scripted speed nonnegative",
                &format!("obstacles.scripted[{i}].speed"),
                s.speed >= 0.0,
                format!("{}", s.speed),
            );
        }

        let q = &self.targets;
        r.rule("at least one target", "targets.count", q.count >= 1, format!("{}", q.count));
        r.rule(
            "target semi-axes positive",
            "targets.semi_axes",
            q.semi_axes.iter().all(|&a| pos(a)),
            format!("{:?}", q.semi_axes),
        );
        r.rule("target speed nonnegative", "targets.max_speed", q.max_speed >= 0.0, format!("{}", q.max_speed));
        r.rule(
            "target speed fraction in [0, 1]",
            "targets.min_speed_fraction",
            (0.0..=1.0).contains(&q.min_speed_fraction),
            format!("{}", q.min_speed_fraction),
        );
        r.rule("target acceleration positive", "targets.accel", pos(q.accel), format!("{}", q.accel));
        r.rule(
            "scripted targets need a route",
            "targets.waypoints",
            q.motion != Motion::Waypoints || !q.waypoints.is_empty(),
            "waypoint motion without waypoints",
        );
        r.rule(
            "formation radius nonnegative",
            "targets.formation_radius",
            q.formation_radius >= 0.0,
            format!("{}", q.formation_radius),
        );
        if let Some(s) = q.start {
            r.rule("target start inside bounds", "targets.start", bounds_ok && self.bounds().contains(&Vector3::from(s)), format!("{s:?}"));
        }
        if let Some(s) = self.drone.start {
            r.rule("drone start inside bounds", "drone.start", bounds_ok && self.bounds().contains(&Vector3::from(s)), format!("{s:?}"));
        }
        r.rule("positive drone radius", "drone.radius", pos(self.drone.radius), format!("{}", self.drone.radius));

        let p = &self.planner;
        for (field, v) in [
            ("planner.d_min", p.d_min),
            ("planner.d_max", p.d_max),
            ("planner.v_max", p.v_max),
            ("planner.a_max", p.a_max),
            ("planner.yaw_rate_max", p.yaw_rate_max),
        ] {
            r.rule("planner limit positive", field, pos(v), format!("{v}"));
        }
        r.rule("at least one primitive", "planner.samples", p.samples >= 1, format!("{}", p.samples));
        r.rule(
            "distance band ordered",
            "planner.d_max",
            p.d_max >= p.d_min,
            format!("d_max {} below d_min {}", p.d_max, p.d_min),
        );
        let axis = if self.is_planar() {
            q.semi_axes[0].max(q.semi_axes[1])
        } else {
            q.semi_axes.iter().copied().fold(0.0, f64::max)
        };
        r.rule(
            "target clearance: d_min >= largest target semi-axis + drone radius",
            "planner.d_min",
            p.d_min >= axis + self.drone.radius,
            format!("d_min {} < {} + {}", p.d_min, axis, self.drone.radius),
        );
        r.rule(
            "field of view in (0, 180] degrees",
            "planner.fov_deg",
            p.fov_deg > 0.0 && p.fov_deg <= 180.0,
            format!("{}", p.fov_deg),
        );
        for (field, v) in [("planner.w_a", p.w_a), ("planner.w_j", p.w_j), ("planner.obstacle_margin", p.obstacle_margin)] {
            r.rule("nonnegative weight", field, v >= 0.0, format!("{v}"));
        }
        if let Some(d) = p.d_des {
            r.rule("nonnegative desired distance", "planner.d_des", d >= 0.0, format!("{d}"));
        }
        let shell = self.sampling_shell();
        r.rule(
            "sampling radius range",
            "planner.radius",
            shell.validate().is_ok(),
            format!("{:?}", shell.radius),
        );
        r.rule(
            "sampling angle ranges ordered",
            "planner.elevation_deg",
            p.elevation_deg[0] <= p.elevation_deg[1] && p.azimuth_deg[0] <= p.azimuth_deg[1],
            format!("elevation {:?} azimuth {:?}", p.elevation_deg, p.azimuth_deg),
        );
        if let Some(order) = &p.check_order {
            let mut sorted = order.clone();
            sorted.sort_by_key(|k| k.index());
            sorted.dedup();
            r.rule(
                "check order lists every check once",
                "planner.check_order",
                sorted.len() == 6 && order.len() == 6,
                format!("{order:?}"),
            );
        }
        r.rule(
            "positive corridor extent",
            "planner.corridor_half_extent",
            pos(p.corridor_half_extent),
            format!("{}", p.corridor_half_extent),
        );

        let pr = &self.predictor;
        r.rule("at least one prediction sample", "predictor.samples", pr.samples >= 1, format!("{}", pr.samples));
        r.rule(
            "nonnegative dispersion",
            "predictor.kappa",
            pr.kappa >= 0.0 && pr.kappa_z >= 0.0,
            format!("kappa {} kappa_z {}", pr.kappa, pr.kappa_z),
        );
        r.rule(
            "positive corridor extent",
            "predictor.corridor_half_extent",
            pos(pr.corridor_half_extent),
            format!("{}", pr.corridor_half_extent),
        );

        if let Some(m) = &self.map {
            r.rule("positive map resolution", "map.resolution", pos(m.resolution), format!("{}", m.resolution));
            if bounds_ok && pos(m.resolution) {
                match self.build_map() {
                    Ok(_) => r.rule("map loads", "map", true, "ok"),
                    Err(e) => r.rule("map loads", &e.field, false, e.message),
                }
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = 1
mode = "2d"
[bounds]
min = [-3.0, -3.0, 0.0]
max = [3.0, 3.0, 2.0]
"#;

    #[test]
    fn minimal_file_validates() {
        let s = Scenario::parse(MINIMAL, &[]).unwrap();
        let report = s.validate();
        assert!(report.passed(), "{:?}", report.first_failure());
        assert!(s.is_planar());
        assert!(s.target_shape().unwrap().is_planar());
        assert_eq!(s.sampling_shell().elevation, [0.0, 0.0]);
        assert!((s.planner_params().weights.d_des - 0.8).abs() < 1e-12);
    }

    #[test]
    fn overrides_apply_before_validation() {
        let s = Scenario::parse(MINIMAL, &["planner.d_min=-0.5".into()]).unwrap();
        let err = s.validate().first_failure().unwrap();
        assert_eq!(err.field, "planner.d_min");
        let s = Scenario::parse(MINIMAL, &["obstacles.count=7".into(), "name=wide open".into()]).unwrap();
        assert_eq!(s.obstacles.count, 7);
        assert_eq!(s.name, "wide open");
    }

    #[test]
    fn rule_failures_name_fields() {
        let zero_fov = Scenario::parse(MINIMAL, &["planner.fov_deg=0".into()]).unwrap();
        let e = zero_fov.validate().first_failure().unwrap();
        assert_eq!(e.field, "planner.fov_deg");
        assert!(e.message.contains("field of view"));
        let tight = Scenario::parse(MINIMAL, &["planner.d_min=0.15".into()]).unwrap();
        let e = tight.validate().first_failure().unwrap();
        assert_eq!(e.field, "planner.d_min");
        assert!(e.message.contains("target clearance"));
        let bad_key = Scenario::parse(MINIMAL, &["planner.d_mn=0.5".into()]).unwrap_err();
        assert!(bad_key.message.contains("d_mn"));
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::parse(MINIMAL, &["obstacles.count=3".into()]).unwrap();
        let back = Scenario::parse(&s.to_toml(), &[]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn boxes_build_map() {
        let text = format!("{MINIMAL}\n[map]\nresolution = 0.1\nboxes = [{{ min = [0.0, 0.0, 0.0], max = [0.2, 0.2, 2.0] }}]\n");
        let s = Scenario::parse(&text, &[]).unwrap();
        let m = s.build_map().unwrap();
        assert!(m.point_occupied(&Vector3::new(0.1, 0.1, 1.0)));
        assert!(!m.point_occupied(&Vector3::new(0.3, 0.1, 1.0)));
    }
}
