//! Link-level simulation of an OFDM system with three receivers: least
//! squares and LMMSE pilot-based channel estimation, and a fully connected
//! neural network that maps received pilot and data blocks straight to bits.
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod channel;
pub mod config;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod neuralnet;
pub mod receiver;
pub mod report;
pub mod rng;
pub mod selftest;
pub mod signal;

pub use error::{Error, Result};
