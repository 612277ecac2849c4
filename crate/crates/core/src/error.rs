use std::io;

use thiserror::Error;

use crate::observability::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not diagonalizable to working precision (eigenvector condition {condition:.3e}, residual {residual:.3e})")]
    NotDiagonalizable { condition: f64, residual: f64 },

    #[error("data rank is degenerate: requested rank {requested}, achievable rank {achievable}")]
    DegenerateRank { requested: usize, achievable: usize },

    #[error("inconsistent conjugate-pair structure: {0}")]
    Structure(String),

    #[error("no feasible location for sensor {sensor} at step {step}")]
    Infeasible {
        sensor: usize,
        step: usize,
        partial: Option<Box<Trajectory>>,
    },

    #[error("multiscale waypoint unreachable for sensor {sensor} between fine steps {from_step} and {to_step}")]
    WaypointUnreachable {
        sensor: usize,
        from_step: usize,
        to_step: usize,
    },

    #[error("innovation covariance is numerically singular at step {step} (condition {condition:.3e})")]
    Conditioning { step: usize, condition: f64 },

    #[error("pair (A, C) is neither observable nor stable")]
    Unobservable,

    #[error("Riccati iteration did not converge after {iterations} iterations (last relative change {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("solution blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }
}
