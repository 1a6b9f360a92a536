pub mod assembly;
pub mod coeff;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod lod;
pub mod metrics;
pub mod sparsela;

pub use error::{Error, Result};
