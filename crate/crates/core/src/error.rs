use thiserror::Error;

use crate::simulator::SimulationResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource profile is nonpositive at every node")]
    NoPositiveResource,

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("admissibility violated: {0}")]
    Admissibility(String),

    #[error("expansion is degenerate: lambda'(0) = 0")]
    DegenerateExpansion,

    #[error("target lies on the subcritical side (s = {s})")]
    Subcritical { s: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("newton iteration stalled at residual {residual:e}")]
    NewtonStalled { residual: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no purely imaginary crossing: |d*| = {d_star} > 1")]
    NoHopf { d_star: f64 },

    #[error("non-finite right-hand side at t = {t}")]
    NonFinite { t: f64 },

    #[error("solution blew up at t = {t}")]
    Blowup {
        t: f64,
        partial: Box<SimulationResult>,
    },

    #[error("invalid bracket: {0}")]
    InvalidBracket(String),

    #[error("config: {0}")]
    Config(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::GridMismatch
            | Error::NoPositiveResource
            | Error::Subcritical { .. }
            | Error::InvalidBracket(_) => 2,
            _ => 3,
        }
    }
}
