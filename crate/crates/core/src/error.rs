use thiserror::Error;

/// Errors produced by the model, the solvers and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("control sample {name} = {value} outside [0, {bound}]")]
    InvalidControl {
        name: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("invalid control signal: {0}")]
    InvalidSignal(String),

    #[error("state left the simplex at node {node} (t = {time}): sum = {sum}, min = {min}")]
    SimplexDrift {
        node: usize,
        time: f64,
        sum: f64,
        min: f64,
    },

    #[error("adjoint diverged at node {node} (t = {time}): |lambda| = {magnitude}")]
    AdjointDivergence {
        node: usize,
        time: f64,
        magnitude: f64,
    },

    #[error("time grids do not match")]
    GridMismatch,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
