//! Closed-form multipoint Expected Improvement with analytic gradients,
//! batch optimization, the BUCB baseline and a regret benchmark harness.

pub mod batchopt;
pub mod bench;
pub mod bucb;
pub mod error;
pub mod gp;
pub mod mvn;
pub mod qei;
pub mod rng;

pub use error::{Error, Result};
