//! Simulator for quantum-logic binary subspace measurements of a hyperfine
//! logic ion through a co-trapped readout ion.

pub mod atomic;
pub mod dynamics;
pub mod error;
pub mod measurement;
pub mod montecarlo;
pub mod protocol;
pub mod validation;

pub use error::{Error, Result};
