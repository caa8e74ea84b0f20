//! Multi-pulse time-hopping impulse radio: waveform-level simulation and
//! closed-form spectral and bit-error analysis.
//!
//! Times are in seconds and frequencies in hertz throughout the library; the
//! command-line front end converts to nanoseconds and gigahertz at its edges.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod error;
pub mod link;
pub mod montecarlo;
pub mod pulses;
pub mod rng;
pub mod signal;
pub mod special;
pub mod spectral;
pub mod transceiver;

pub use error::{Error, Result};
