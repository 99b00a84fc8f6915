//! Numerical tools for the linear relaxation Boltzmann equation on the flat
//! torus: geometric control of the jump rate, explicit Doeblin rate
//! certificates, a deterministic phase-space solver and a particle
//! simulator, and total-variation diagnostics.

pub mod certificate;
pub mod control;
pub mod error;
pub mod geometry;
pub mod initial;
pub mod measures;
pub mod particles;
pub mod problem;
pub mod solver;
pub mod velocity;

pub use error::{Error, Result};
pub use initial::InitialData;
pub use problem::{Kernel, ScatterProblem};
