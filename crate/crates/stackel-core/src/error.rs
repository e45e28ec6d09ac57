use crate::linalg::Vector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error{}: {msg}", follower.map(|i| format!(" (follower {i})")).unwrap_or_default())]
    Config { follower: Option<usize>, msg: String },

    #[error("infeasible point: constraint {constraint} violated by {violation:.3e}")]
    Infeasible { constraint: usize, violation: f64 },

    #[error("feasible set is empty")]
    EmptySet,

    #[error("iteration limit reached in {context}: residual {residual:.3e}")]
    MaxIterations { context: &'static str, best: Vector, residual: f64 },

    #[error("linear objective is unbounded along ray {ray:?}")]
    Unbounded { ray: Vec<f64> },

    #[error("point is not a variational equilibrium: VI residual {residual:.3e}")]
    NotEquilibrium { residual: f64 },

    #[error("point is not a KKT point: stationarity residual {residual:.3e}")]
    NotKkt { residual: f64 },

    #[error("multiplier sign violation at inequality {index}: {value:.3e}")]
    SignViolation { index: usize, value: f64 },

    #[error("inner equilibrium solve did not converge at leader iteration {iteration}")]
    InnerNotConverged { iteration: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}, field `{field}`: {msg}")]
    Parse { line: usize, field: String, msg: String },

    #[error("incompatible instance file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config { follower: None, msg: msg.into() }
    }

    pub fn follower(i: usize, msg: impl Into<String>) -> Self {
        Error::Config { follower: Some(i), msg: msg.into() }
    }
}
