pub mod cli;
pub mod complex;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod operators;
pub mod oracles;
pub mod spectral;

pub use error::{Error, Result};
