//! Sensor trajectory planning for reduced-order linear models.
//!
//! A field `x_t` in `R^n` is approximated by `x_t = Psi z_t` with diagonal dynamics
//! `z_{t+1} = Lambda z_t + w_t`. Sensors move on the state grid under a speed limit
//! and repeat a closed cycle; the planner picks the cycle greedily so the stacked
//! observability matrix is well conditioned, and a Kalman filter uses the schedule to
//! track the state.

pub mod error;
pub mod geometry;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod observability;
pub mod planner;
pub mod scenarios;

pub use error::{Error, Result};
pub use geometry::{Geometry, GeometryKind, MotionConstraint};
pub use kalman::{
    dare_iterate, dare_trace_bounds, kf_step, kf_update, lift_system, run_filter, DareBounds, DareSolution,
    KfRun, KfState, LiftedSystem, Measurements,
};
pub use model::{
    fit_dmd, simulate, spectral_truncate, Block, FullModel, NoiseSpec, PairMarker, RealBlockModel, ReducedModel,
    SnapshotMatrix, Truncation,
};
pub use observability::{assemble, condition_number, is_observable, ObservabilityMatrix, RankReport, Trajectory};
pub use planner::{
    candidate_set, motion_violations, multiscale_refine, multiscale_refine_with_report, plan, plan_with_report, random_trajectory, selection_score,
    PlanConfig, PlanOutcome, PlanRecord, ScoreMode,
};
