use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenpair, spectral_scale, EigenPair};

pub const DEFAULT_GAP_TOLERANCE: f64 = 1e-8;

/// Gradient of the smallest eigenvalue of `J(beta)`: `q^T (dJ/dbeta_K) q` per control.
///
/// Only defined for a simple smallest eigenvalue. A relative gap below `gap_tolerance`
/// returns [`Error::DegenerateEigenvalue`].
pub fn min_eigenvalue_gradient(
    j: &DMatrix<f64>,
    dj_dbeta: &[DMatrix<f64>],
    gap_tolerance: f64,
) -> Result<(EigenPair, Vec<f64>)> {
    let pair = min_eigenpair(j)?;
    if dj_dbeta.iter().any(|d| d.shape() != j.shape()) {
        return Err(Error::Dimension("matrix derivative shape differs from J".into()));
    }
    if j.nrows() > 1 {
        let scale = spectral_scale(j);
        let relative_gap = if scale > 0.0 { pair.gap / scale } else { 0.0 };
        if !(relative_gap >= gap_tolerance) {
            return Err(Error::DegenerateEigenvalue { mu: pair.mu, relative_gap });
        }
    }
    let grad = dj_dbeta.iter().map(|d| pair.q.dot(&(d * &pair.q))).collect();
    Ok((pair, grad))
}
