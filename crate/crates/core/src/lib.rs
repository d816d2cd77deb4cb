//! Sample-check-select chase planning for a camera drone following moving
//! targets among static and dynamic obstacles.
//!
//! Every trajectory is a Bernstein polynomial, so safety, visibility and
//! dynamic limits are certified from control points alone.

pub mod bernstein;
pub mod geometry;
pub mod exec;
pub mod predictor;
pub mod planner;
pub mod scenario;
pub mod sim;
