//! Key-rate analysis for quantum key distribution with an untrusted source.
//!
//! The crate follows a pulse from an untrusted source through Alice's
//! photon-number analyzer to Bob's detector. [`estimator`] bounds how many
//! encoded pulses are untagged, [`bounds`] turns that into bounds on gains and
//! output photon-number probabilities, [`keyrate`] assembles secure rates,
//! [`experiment`] models the link, and [`optimizer`] searches the free
//! parameters. [`montecarlo`] checks the statistical claims by simulation.

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod keyrate;
pub mod model;
pub mod montecarlo;
pub mod optimizer;
pub mod photonstats;

pub use error::{Condition, Error, Result};
