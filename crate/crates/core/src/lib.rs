//! Squash operators for threshold-detector quantum key distribution.
//!
//! The crate builds the squash channel that maps an N-photon symmetric state of
//! a single optical mode onto a qubit, machine-checks the identities that make
//! it a faithful stand-in for a pair of threshold detectors, and simulates
//! BB84 and BBM92 with multi-photon adversarial sources.
//!
//! Modules, bottom-up:
//!
//! - [`symfock`]: symmetric-subspace bases and lifted single-photon gates
//! - [`squash`]: the squash Kraus family and its verification
//! - [`povm`]: threshold-detector measurements and photon-number blocks
//! - [`protocol`]: Monte Carlo and exact protocol runs, error and key rates
//! - [`cli`]: the `squashkit` command line

pub mod error;
pub mod linalg;
pub mod random;
pub mod symfock;

pub use error::{Error, Result};
pub mod squash;
pub mod povm;
pub mod protocol;
pub mod cli;
