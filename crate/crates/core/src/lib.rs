//! Successive convexification guidance for 6-DoF powered descent, with
//! learned warm starts.

pub mod bench;
pub mod conic;
pub mod dataset;
pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod problem;
pub mod rotation;
pub mod scvx;
pub mod warmstart;

pub use error::{Error, Result};
