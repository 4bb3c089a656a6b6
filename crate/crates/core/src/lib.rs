//! Simulation and verification of measure solutions for backward stochastic
//! differential equations with quadratic-growth generators.
//!
//! The crate covers three layers:
//!
//! * closed-form solution families of the quadratic BSDE driven by Brownian
//!   hitting times and by the log transform of an exponential martingale,
//! * Monte Carlo verification of the measure-solution property through
//!   stochastic-exponential expectations and the quadratic-variation
//!   explosion criterion,
//! * a constructive iteration that builds a measure solution by alternating
//!   conditional-expectation projection, martingale-representation extraction
//!   of the control and a Girsanov re-tilt.

pub mod closedform;
pub mod error;
pub mod export;
pub mod generators;
pub mod iterate;
pub mod paths;
pub mod regression;
pub mod scenario;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
