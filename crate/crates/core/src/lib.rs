pub mod cli;
pub mod error;
pub mod gamma;
pub mod gaussian;
pub mod harness;
pub mod hilbert;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod rotation;
pub mod shift;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
