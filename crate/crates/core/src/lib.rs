//! Gradient-flow samplers: particle dynamics, Gaussian moment-closure flows,
//! a gridded Fisher–Rao flow, and the diagnostics used to score them.

pub mod diagnostics;
pub mod error;
pub mod fisher_rao_grid;
pub mod gaussian_flows;
pub mod harness;
pub mod linalg;
pub mod particle_flows;
pub mod quadrature;
pub mod targets;

pub use error::{Error, Result};
