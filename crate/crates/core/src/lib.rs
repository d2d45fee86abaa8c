//! Exemplar-based reconstruction of audio from low-dimensional feature
//! sequences.

pub mod dsp;
pub mod error;
pub mod features;
pub mod index;
pub mod eval;
pub mod io;
pub mod synth;

pub use error::{Error, Result};
