use nalgebra::Vector3;

use super::PlanError;
use crate::bernstein::Curve3;
use crate::geometry::{curve_in_polytope, generate_corridor_around, CorridorConfig, CorridorSequence, OccupancyMap};

/// Shortest piece of the horizon the bisection may produce.
const FLOOR_FRACTION: f64 = 0.05;
const MAX_ROUNDS: usize = 64;

/// Target curve restricted to `[a, b]`, re-timed to start at zero.
fn window(c: &Curve3, a: f64, b: f64) -> Curve3 {
    let t = c.horizon();
    let tail = if a > 0.0 { c.split_at(a).expect("interior split").1 } else { c.clone() };
    if b < t {
        tail.split_at(b - a).expect("interior split").0
    } else {
        tail
    }
}

/// Corridor chain in which the drone and the line of sight to the target stay
/// in free space.
///
/// The first box must hold the drone position and the start of the target
/// curve; if it cannot hold the whole curve, the end time is bisected toward
/// the last split until it fits. The remainder of the target curve then seeds
/// the next box. Boxes are seeded with the control points of the target
/// piece, so a successful box always contains that piece.
pub fn build_visible_safe_corridor(
    x_c0: &Vector3<f64>,
    target: &Curve3,
    map: &OccupancyMap,
    cfg: &CorridorConfig,
) -> Result<CorridorSequence, PlanError> {
    let horizon = target.horizon();
    let floor = FLOOR_FRACTION * horizon;
    let mut tau = vec![0.0];
    let mut polytopes = Vec::new();
    let mut start: Vec<Vector3<f64>> = vec![*x_c0];
    let mut t_i = 0.0;
    let mut t_f = horizon;
    for _ in 0..MAX_ROUNDS {
        let piece = window(target, t_i, t_f);
        let mut seeds = start.clone();
        seeds.extend(piece.control_points());
        let found = generate_corridor_around(&seeds, map, cfg)?;
        match found {
            Some(s) if curve_in_polytope(&piece, None, &s).is_proved() => {
                tau.push(t_f);
                polytopes.push(s);
                if t_f >= horizon {
                    return Ok(CorridorSequence::new(tau, polytopes)?);
                }
                start = vec![piece.end()];
                t_i = t_f;
                t_f = horizon;
            }
            _ => {
                t_f = 0.5 * (t_f + t_i);
                if t_f - t_i < floor {
                    return Err(PlanError::CorridorFloor { time: t_i });
                }
            }
        }
    }
    Err(PlanError::CorridorFloor { time: t_i })
}
