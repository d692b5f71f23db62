pub mod cli;
pub mod enhanced;
pub mod error;
pub mod grr;
pub mod holder;
pub mod kernel;
pub mod quadrature;
pub mod rate_lab;
pub mod sampling;

pub use error::{Error, Result};
