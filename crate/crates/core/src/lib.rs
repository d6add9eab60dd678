//! Kinetic wealth-exchange models: infinite-population density operators for
//! Immediate Exchange, the Directed Random Market and their mixture, Laplace
//! transform diagnostics, closed-form analytics of the mixed model, and a
//! finite-population agent simulator.

pub mod acceptance;
pub mod dist;
pub mod error;
pub mod laplace;
pub mod mixed;
pub mod operators;
pub mod sim;

pub use dist::{Density, EmpiricalSample, GammaParams, Grid};
pub use error::{Error, Result};
pub use laplace::SGrid;
pub use operators::{iterate, IterationTrace, ModelKind, Operators};
