//! Numerics for a two-species Lotka-Volterra competition model with
//! memory-based (delayed) self-advection on an interval with zero Dirichlet
//! boundary values.
//!
//! Modules, bottom up: [`grid`] (operators and quadrature), [`eigen`]
//! (weighted principal eigenpairs), [`steady`] (coexistence steady states),
//! [`bifurcation`] (region geometry and Hopf data), [`simulator`] (delayed
//! method-of-lines integration), [`experiments`] (preset suites) and
//! [`cli`] (configuration, file output, command line).

pub mod bifurcation;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod linalg;
pub mod output;
pub mod simulator;
pub mod steady;

pub use error::{Error, Result};
