pub mod analytic;
pub mod cli;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod oed;
pub mod optimizer;
pub mod quadrature;
pub mod sensitivity;
pub mod solver;

pub use error::{Error, Result};
