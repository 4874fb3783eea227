//! Neural wiretap coding with cooperative jamming helpers.
//!
//! The crate layers a seeded universal-hash security stage over learned
//! multi-user reliability codes for the Gaussian wiretap channel, and
//! measures both decoding error and leakage to the eavesdropper.

pub mod channel;
pub mod error;
pub mod evaluation;
pub mod gf2;
pub mod io;
pub mod leakage;
pub mod nn;
pub mod reliability;
pub mod rng;
pub mod security;

pub use error::{Error, Result};
