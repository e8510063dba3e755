//! Linear finite elements on [0, 1] for parameterized two-point boundary value problems.

pub mod measurement;
pub mod mesh;
pub mod system;

pub use measurement::{ConstraintForceColumns, ExperimentDesign, MeasurementOperator};
pub use mesh::{Mesh1D, NodeSide};
pub use system::{build_case_system, true_nodal_solution, AffineParameterizedSystem, AssembledSystem};
