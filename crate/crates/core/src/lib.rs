pub mod cli;
pub mod coherence;
pub mod error;
mod fft;
pub mod grid;
pub mod hom;
mod quad;
pub mod simkit;
pub mod spdc;
pub mod tagproc;

pub use error::{Error, Result};
