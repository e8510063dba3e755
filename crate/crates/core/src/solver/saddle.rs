//! The constrained state problem: find the state `theta` and impulse forces `lambda` with
//!
//! ```text
//! K(eps) theta = F(eps) + M^T lambda,    M theta = V
//! ```
//!
//! assembled as the symmetric saddle system `D y = Q` with
//! `D = [[-K, M^T], [M, 0]]`, `y = [theta; lambda]`, `Q = [-F; V]` on the free DOFs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{AffineParameterizedSystem, ExperimentDesign, MeasurementOperator, NodeSide};
use crate::linalg::FactoredMatrix;

/// Relative residual above which a saddle solve is reported as failed.
const RESIDUAL_LIMIT: f64 = 1e-8;

/// Measurement values, optionally with the derivative of each value with respect to its
/// own measurement position (data produced by interpolating a reference field moves
/// with the design; recorded data does not).
#[derive(Debug, Clone, PartialEq)]
pub struct DataVector {
    values: DVector<f64>,
    slopes: Option<DVector<f64>>,
}

impl DataVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values: DVector::from_vec(values), slopes: None }
    }

    pub fn with_slopes(values: DVector<f64>, slopes: DVector<f64>) -> Result<Self> {
        if values.len() != slopes.len() {
            return Err(Error::Dimension("data values and slopes differ in length".into()));
        }
        Ok(Self { values, slopes: Some(slopes) })
    }

    /// Interpolate a nodal field at the measurement positions.
    pub fn from_field(measurement: &MeasurementOperator, field: &DVector<f64>) -> Result<Self> {
        if field.len() != measurement.matrix().ncols() {
            return Err(Error::Dimension(format!(
                "field has {} nodes, measurement operator expects {}",
                field.len(),
                measurement.matrix().ncols()
            )));
        }
        Self::with_slopes(measurement.matrix() * field, measurement.slopes() * field)
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn slopes(&self) -> Option<&DVector<f64>> {
        self.slopes.as_ref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    /// State on all mesh nodes.
    pub theta: DVector<f64>,
    pub lambda: DVector<f64>,
    /// `0.5 |lambda|^2`
    pub objective: f64,
    /// Stacked unknown `[theta_free; lambda]`.
    pub y: DVector<f64>,
    /// Relative residuals of the equilibrium and the measurement block.
    pub residuals: (f64, f64),
}

/// Factored saddle matrix for one parameter value and one design.
#[derive(Debug, Clone)]
pub struct SaddleOperator {
    d: DMatrix<f64>,
    factored: FactoredMatrix,
    n_free: usize,
    c: usize,
}

fn free_columns(system: &AffineParameterizedSystem, m: &DMatrix<f64>) -> DMatrix<f64> {
    m.select_columns(system.free_dofs())
}

impl SaddleOperator {
    pub fn assemble(
        system: &AffineParameterizedSystem,
        eps: &[f64],
        measurement: &MeasurementOperator,
    ) -> Result<Self> {
        check_measurement(system, measurement)?;
        let k = system.assemble(eps)?.k;
        let m = free_columns(system, measurement.matrix());
        let (n_free, c) = (k.nrows(), m.nrows());
        let mut d = DMatrix::zeros(n_free + c, n_free + c);
        d.view_mut((0, 0), (n_free, n_free)).copy_from(&(-k));
        d.view_mut((0, n_free), (n_free, c)).copy_from(&m.transpose());
        d.view_mut((n_free, 0), (c, n_free)).copy_from(&m);
        let factored = FactoredMatrix::new(d.clone()).map_err(|e| match e {
            Error::DegenerateDesign(msg) => Error::DegenerateDesign(format!(
                "saddle matrix is singular ({msg}); measurements coincide or sit on a Dirichlet node"
            )),
            other => other,
        })?;
        Ok(Self { d, factored, n_free, c })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn factored(&self) -> &FactoredMatrix {
        &self.factored
    }

    pub fn free_count(&self) -> usize {
        self.n_free
    }

    pub fn measurement_count(&self) -> usize {
        self.c
    }

    pub fn solve(&self, system: &AffineParameterizedSystem, q: &DVector<f64>) -> Result<SaddleSolution> {
        let y = self.factored.solve(q)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite saddle solution".into()));
        }
        let theta_free = y.rows(0, self.n_free).into_owned();
        let lambda = y.rows(self.n_free, self.c).into_owned();
        let r = &self.d * &y - q;
        // normwise backward error per block: a datum at a node where the field
        // vanishes has no meaningful componentwise scale
        let y_norm = y.amax();
        let scale = |range: std::ops::Range<usize>| {
            let rows = self.d.rows(range.start, range.len());
            let d_norm = rows.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
            (d_norm * y_norm + q.rows(range.start, range.len()).amax()).max(f64::MIN_POSITIVE)
        };
        let r1 = r.rows(0, self.n_free).amax() / scale(0..self.n_free);
        let r2 = if self.c == 0 { 0.0 } else { r.rows(self.n_free, self.c).amax() / scale(self.n_free..self.n_free + self.c) };
        if r1 > RESIDUAL_LIMIT || r2 > RESIDUAL_LIMIT {
            return Err(Error::Solver(format!("saddle residuals too large: {r1:e}, {r2:e}")));
        }
        Ok(SaddleSolution {
            theta: system.expand(&theta_free),
            objective: 0.5 * lambda.norm_squared(),
            lambda,
            y,
            residuals: (r1, r2),
        })
    }
}

fn check_measurement(system: &AffineParameterizedSystem, measurement: &MeasurementOperator) -> Result<()> {
    if measurement.matrix().ncols() != system.mesh().node_count() {
        return Err(Error::Dimension("measurement operator and system use different meshes".into()));
    }
    Ok(())
}

/// Right-hand side `[-F_f; V - M_d u_d]`.
pub fn saddle_rhs(
    system: &AffineParameterizedSystem,
    eps: &[f64],
    measurement: &MeasurementOperator,
    data: &DataVector,
) -> Result<DVector<f64>> {
    check_measurement(system, measurement)?;
    let c = measurement.measurement_count();
    if data.len() != c {
        return Err(Error::Dimension(format!("{} data values for {c} measurements", data.len())));
    }
    let f = system.reduced_load(eps)?;
    let lifted_data = data.values() - measurement.matrix() * system.dirichlet_field();
    let n_free = f.len();
    let mut q = DVector::zeros(n_free + c);
    q.rows_mut(0, n_free).copy_from(&(-f));
    q.rows_mut(n_free, c).copy_from(&lifted_data);
    Ok(q)
}

/// Solve the constrained state problem at `eps` for a design and its data.
pub fn solve_constrained(
    system: &AffineParameterizedSystem,
    eps: &[f64],
    design: &ExperimentDesign,
    data: &DataVector,
) -> Result<SaddleSolution> {
    let measurement = MeasurementOperator::new(design, system.mesh(), NodeSide::Right)?;
    solve_with_measurement(system, eps, &measurement, data)
}

pub fn solve_with_measurement(
    system: &AffineParameterizedSystem,
    eps: &[f64],
    measurement: &MeasurementOperator,
    data: &DataVector,
) -> Result<SaddleSolution> {
    let q = saddle_rhs(system, eps, measurement, data)?;
    SaddleOperator::assemble(system, eps, measurement)?.solve(system, &q)
}
