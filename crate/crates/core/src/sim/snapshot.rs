//! The world at the start of a scenario, for one-shot predict and plan runs.

use nalgebra::Vector3;

use super::derive_seed;
use super::world::World;
use crate::bernstein::Curve3;
use crate::exec::Workers;
use crate::geometry::{Ellipsoid, MovingObstacle, OccupancyMap};
use crate::planner::{plan, ChasePlan, DroneState, PlanInput, TrackedTarget};
use crate::predictor::{build_ncvm, predict, PredictionError, TargetPrediction, TargetState};
use crate::scenario::{ConfigError, Scenario};

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub drone: DroneState,
    pub targets: Vec<TargetState>,
    pub target_shape: Ellipsoid,
    pub obstacles: Vec<MovingObstacle>,
    pub map: OccupancyMap,
    pub seed: u64,
}

impl Snapshot {
    /// Places the scenario's bodies and takes their initial states.
    pub fn initial(scenario: &Scenario) -> Result<Self, ConfigError> {
        if let Some(e) = scenario.validate().first_failure() {
            return Err(e);
        }
        let world = World::new(scenario, scenario.build_map()?)?;
        let horizon = scenario.timing.horizon;
        let targets = world
            .targets()
            .iter()
            .map(|q| {
                TargetState::with_dispersion(q.position, q.velocity, scenario.predictor.kappa, scenario.kappa_z(), horizon)
                    .map_err(|e| ConfigError::new("predictor.kappa", e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let obstacles = world
            .obstacles()
            .iter()
            .map(|o| MovingObstacle::constant_velocity(o.position, o.velocity, world.obstacle_shape(), horizon))
            .collect();
        Ok(Self {
            drone: DroneState::at_rest(world.drone_start()),
            targets,
            target_shape: world.target_shape(),
            obstacles,
            map: world.map().clone(),
            seed: scenario.seed,
        })
    }

    pub fn predict(&self, scenario: &Scenario, workers: &Workers) -> Vec<Result<TargetPrediction, PredictionError>> {
        let params = scenario.predictor_params();
        self.targets
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let seed = derive_seed(self.seed, 4, i as u64);
                predict(s, &self.target_shape, &self.map, &self.obstacles, &params, seed, workers)
            })
            .collect()
    }

    /// Forecast curves, with a constant-velocity guess where prediction failed.
    pub fn forecasts(&self, scenario: &Scenario, predictions: &[Result<TargetPrediction, PredictionError>]) -> Vec<Curve3> {
        let horizon = scenario.timing.horizon;
        let b = self.map.bounds();
        self.targets
            .iter()
            .zip(predictions)
            .map(|(s, p)| match p {
                Ok(p) => p.curve.clone(),
                Err(_) => {
                    let end: Vector3<f64> = s.mean_terminal(horizon).sup(&b.min).inf(&b.max);
                    build_ncvm(s, &end, horizon)
                }
            })
            .collect()
    }

    pub fn plan(&self, scenario: &Scenario, forecasts: &[Curve3], workers: &Workers) -> ChasePlan {
        let tracked: Vec<TrackedTarget> = forecasts
            .iter()
            .map(|c| TrackedTarget {
                curve: c.clone(),
                shape: self.target_shape,
            })
            .collect();
        let input = PlanInput {
            drone: self.drone,
            targets: &tracked,
            obstacles: &self.obstacles,
            map: &self.map,
        };
        plan(&input, &scenario.planner_params(), derive_seed(self.seed, 5, 0), workers, None)
    }
}
