//! Numerical baselines for checking the closed-form solvers.
//!
//! Nothing here uses the structural results: projected gradient works on the
//! raw matrix variables, and the sampling checks only need feasibility.

pub mod grid;
pub mod objective;
pub mod pg;
pub mod projection;
pub mod sampling;

pub use grid::grid_waterfill;
pub use objective::{gradient_check, LogDet, Objective, SensorModel, SensorMutualInfo, SensorNegSumMse, UplinkSumRate};
pub use pg::{projected_gradient, projected_gradient_restarts, OracleReport, PgOptions};
pub use projection::Projector;
pub use sampling::{pareto_dominance_check, random_feasible};
