use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::mesh::{Mesh1D, NodeSide};

/// Measurement positions with per-position box bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    positions: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    min_separation: f64,
}

impl ExperimentDesign {
    pub fn new(positions: Vec<f64>, bounds: Vec<(f64, f64)>, min_separation: f64) -> Result<Self> {
        let design = Self { positions, bounds, min_separation };
        design.validate()?;
        Ok(design)
    }

    /// Design on `mesh` with the default bounds `[h, 1]` (`h` the width of the element
    /// touching the Dirichlet node) and the default separation of one element width.
    pub fn for_mesh(positions: Vec<f64>, mesh: &Mesh1D) -> Result<Self> {
        let bounds = vec![Self::default_bounds(mesh); positions.len()];
        Self::new(positions, bounds, mesh.min_element_width())
    }

    pub fn default_bounds(mesh: &Mesh1D) -> (f64, f64) {
        (mesh.nodes()[1], 1.0)
    }

    /// Bounds `[0, 1]` and no separation requirement. Coincident positions are allowed,
    /// which is useful for studying rank deficiency.
    pub fn unchecked(positions: Vec<f64>) -> Result<Self> {
        let bounds = vec![(0.0, 1.0); positions.len()];
        Self::new(positions, bounds, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.positions.len() {
            return Err(Error::InvalidDesign(format!(
                "{} positions but {} bounds",
                self.positions.len(),
                self.bounds.len()
            )));
        }
        if !(self.min_separation >= 0.0 && self.min_separation.is_finite()) {
            return Err(Error::InvalidDesign("minimum separation must be a finite non-negative number".into()));
        }
        for (i, (&x, &(lo, hi))) in self.positions.iter().zip(&self.bounds).enumerate() {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidDesign(format!("bounds [{lo}, {hi}] of position {i} are not inside [0, 1]")));
            }
            if !(lo <= x && x <= hi) {
                return Err(Error::InvalidDesign(format!("position {i} = {x} lies outside [{lo}, {hi}]")));
            }
        }
        if self.min_separation > 0.0 {
            for i in 0..self.positions.len() {
                for j in i + 1..self.positions.len() {
                    let gap = (self.positions[i] - self.positions[j]).abs();
                    // a little slack so that neighbouring nodes count as separated
                    if gap < self.min_separation * (1.0 - 1e-9) {
                        return Err(Error::InvalidDesign(format!(
                            "positions {i} and {j} are {gap:e} apart, closer than {:e}",
                            self.min_separation
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn min_separation(&self) -> f64 {
        self.min_separation
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same bounds and separation with new positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        Self::new(positions, self.bounds.clone(), self.min_separation)
    }

    /// Same bounds, separation not enforced. Used for finite-difference stencils and
    /// optimizer trial points that are only evaluated, never reported.
    pub fn moved_to(&self, positions: Vec<f64>) -> Result<Self> {
        Self::new(positions, self.bounds.clone(), 0.0)
    }
}

/// Interpolation of nodal values at the measurement positions (`C x nodes`), and its
/// derivative with respect to each position.
///
/// Shape-function slopes jump at nodes. A position on an interior node takes the slope
/// of the element selected by `side`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    matrix: DMatrix<f64>,
    slopes: DMatrix<f64>,
}

impl MeasurementOperator {
    pub fn new(design: &ExperimentDesign, mesh: &Mesh1D, side: NodeSide) -> Result<Self> {
        design.validate()?;
        let c = design.len();
        let n = mesh.node_count();
        let mut matrix = DMatrix::zeros(c, n);
        let mut slopes = DMatrix::zeros(c, n);
        for (i, &x) in design.positions().iter().enumerate() {
            let (e, t) = mesh.locate(x, side)?;
            let h = mesh.element_width(e);
            matrix[(i, e)] = 1.0 - t;
            matrix[(i, e + 1)] = t;
            slopes[(i, e)] = -1.0 / h;
            slopes[(i, e + 1)] = 1.0 / h;
        }
        Ok(Self { matrix, slopes })
    }

    /// Rows are `f_j(beta_i)` over all mesh nodes.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Rows are `d f_j(beta_i) / d beta_i`.
    pub fn slopes(&self) -> &DMatrix<f64> {
        &self.slopes
    }

    pub fn measurement_count(&self) -> usize {
        self.matrix.nrows()
    }

    /// `dM/dbeta_i`: only row `i` is nonzero.
    pub fn partial(&self, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.matrix.nrows(), self.matrix.ncols());
        m.set_row(i, &self.slopes.row(i));
        m
    }
}

/// Consistent nodal loads of unit impulses at the measurement positions (`nodes x C`).
/// With linear elements this is exactly the transpose of the measurement operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintForceColumns {
    gamma: DMatrix<f64>,
}

impl ConstraintForceColumns {
    pub fn new(design: &ExperimentDesign, mesh: &Mesh1D, side: NodeSide) -> Result<Self> {
        Ok(Self::from_measurement(&MeasurementOperator::new(design, mesh, side)?))
    }

    pub fn from_measurement(m: &MeasurementOperator) -> Self {
        Self { gamma: m.matrix().transpose() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }
}
