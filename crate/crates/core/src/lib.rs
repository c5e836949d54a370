pub mod bench;
pub mod bessel;
pub mod error;
pub mod geometry;
pub mod hps;
pub mod linalg;
pub mod pde;
pub mod solver;
pub mod spectral;

pub use error::{HpsError, Result};
