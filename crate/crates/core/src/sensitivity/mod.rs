//! First to third order derivatives of the constrained solution, the eigenvalue
//! gradient of the E-criterion, and a finite-difference harness to check them.

pub mod cascade;
pub mod eigen;
pub mod fd;
pub mod state;

pub use cascade::{
    cascade_residuals, solve_sensitivity_cascade, CascadeResiduals, SolutionDerivatives, SystemDerivatives,
};
pub use eigen::{min_eigenvalue_gradient, DEFAULT_GAP_TOLERANCE};
pub use fd::{central_difference, finite_difference_check, relative_error, FdReport};
pub use state::state_sensitivity;
pub use crate::linalg::EigenPair;
