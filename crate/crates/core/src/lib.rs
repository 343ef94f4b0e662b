//! Fourier phase retrieval from non-oversampled magnitudes.
//!
//! The crate provides the measurement model, classical alternating-projection
//! solvers (HIO, RAAR, error reduction), a small dense-network stack trained
//! with hand-written backpropagation, the cascaded reconstruction network
//! built on top of it, and the registration-aware evaluation protocol.

pub mod cascade;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod measurement;
pub mod nn;
pub mod numerics;
pub mod solvers;

pub use error::{Error, Result};
pub use numerics::{ComplexField, Image, Magnitude, Phase};
