use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::error::{Error, Result};

/// Pivot ratios below this mark a matrix as singular.
pub const SINGULARITY_TOLERANCE: f64 = 1e-12;

/// LU factorization of a square matrix, built once and reused for many right-hand sides.
#[derive(Debug, Clone)]
pub struct FactoredMatrix {
    lu: LU<f64, Dyn, Dyn>,
    dim: usize,
}

impl FactoredMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!("{} x {} matrix is not square", matrix.nrows(), matrix.ncols())));
        }
        let dim = matrix.nrows();
        let lu = matrix.lu();
        let diag = lu.u().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
        if dim > 0 && !(lo > SINGULARITY_TOLERANCE * hi) {
            return Err(Error::DegenerateDesign(format!("matrix is singular (pivot ratio {:e})", lo / hi)));
        }
        Ok(Self { lu, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::Dimension(format!("right-hand side has length {}, expected {}", rhs.len(), self.dim)));
        }
        self.lu.solve(rhs).ok_or_else(|| Error::Solver("LU back-substitution failed".into()))
    }
}

/// Smallest eigenvalue of a symmetric matrix with its unit eigenvector and the distance
/// to the next eigenvalue (infinite for 1 x 1 matrices).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub mu: f64,
    pub q: DVector<f64>,
    pub gap: f64,
}

pub fn min_eigenpair(j: &DMatrix<f64>) -> Result<EigenPair> {
    if !j.is_square() || j.nrows() == 0 {
        return Err(Error::Dimension(format!("need a non-empty square matrix, got {} x {}", j.nrows(), j.ncols())));
    }
    let sym = (j + j.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu = eig.eigenvalues[order[0]];
    let gap = order.get(1).map_or(f64::INFINITY, |&i| eig.eigenvalues[i] - mu);
    let mut q = eig.eigenvectors.column(order[0]).into_owned();
    q /= q.norm();
    // fix the sign so that results are reproducible
    let pivot = q.iamax();
    if q[pivot] < 0.0 {
        q = -q;
    }
    Ok(EigenPair { mu, q, gap })
}

/// Largest eigenvalue magnitude, used to make eigenvalue gaps relative.
pub fn spectral_scale(j: &DMatrix<f64>) -> f64 {
    let sym = (j + j.transpose()) * 0.5;
    sym.symmetric_eigenvalues().amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(FactoredMatrix::new(m), Err(Error::DegenerateDesign(_))));
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let f = FactoredMatrix::new(m).unwrap();
        let x = f.solve(&DVector::from_vec(vec![3.0, 5.0])).unwrap();
        assert_eq!(x.as_slice(), &[5.0, 3.0]);
    }

    #[test]
    fn eigenpair_of_diagonal() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = min_eigenpair(&j).unwrap();
        assert_eq!(e.mu, 1.0);
        assert_eq!(e.gap, 1.0);
        assert_eq!(e.q.as_slice(), &[0.0, 1.0, 0.0]);
        let one = min_eigenpair(&DMatrix::from_element(1, 1, -2.0)).unwrap();
        assert_eq!(one.gap, f64::INFINITY);
        assert_eq!(one.mu, -2.0);
    }
}
