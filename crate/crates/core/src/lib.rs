//! Monte Carlo laboratory for the Bernoulli sieve.
//!
//! The crate simulates the sieve exactly, samples the limit processes of its
//! empty-box count `L_n`, and compares the two with classical goodness-of-fit
//! machinery.

pub mod error;
pub mod experiment;
pub mod factor_models;
pub mod limits;
pub mod numeric;
pub mod poissonized;
pub mod rng;
pub mod sieve;
pub mod stats;

pub use error::{Error, Result};
