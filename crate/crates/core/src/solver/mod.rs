//! Constrained state solves and the two inverse problems built on them.

pub mod inverse;
pub mod minimize;
pub mod saddle;

pub use inverse::{ecfm_inverse, standard_inverse, InverseResult, ParameterBounds};
pub use minimize::{minimize_box, Evaluation, MinimizeOptions, MinimizeReport};
pub use saddle::{saddle_rhs, solve_constrained, solve_with_measurement, DataVector, SaddleOperator, SaddleSolution};
