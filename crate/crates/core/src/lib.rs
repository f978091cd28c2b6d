pub mod diagnostics;
pub mod error;
pub mod gcl;
pub mod genmodel;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{NicaError, Result};
