use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative step used by the central-difference helpers.
pub const DEFAULT_RELATIVE_STEP: f64 = 1e-5;

/// Step for differencing at `x`: `relative_step * max(|x|, 1)`.
pub fn scaled_step(x: f64, relative_step: f64) -> f64 {
    relative_step * x.abs().max(1.0)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h` of a vector-valued function.
pub fn central_difference<F>(f: F, x: f64, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<DVector<f64>>,
{
    let plus = f(x + h)?;
    let minus = f(x - h)?;
    if plus.len() != minus.len() {
        return Err(Error::Dimension("function output changed length inside the stencil".into()));
    }
    Ok((plus - minus) / (2.0 * h))
}

/// Comparison of an analytic Jacobian (`outputs x inputs`) with central differences.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub analytic: DMatrix<f64>,
    pub numeric: DMatrix<f64>,
    /// Error per input column, relative to
    /// `max(|analytic column|, |numeric column|, 1e-6 |f(point)|)` in the max norm.
    pub column_errors: Vec<f64>,
    pub max_relative_error: f64,
}

/// Relative max-norm distance between `a` and `b`, with `floor` guarding against
/// quantities that vanish exactly.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    let diff = (a - b).amax();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.amax().max(b.amax()).max(floor)
}

/// Check `jacobian` against central differences of `f` at `point`, with step
/// `relative_step * max(|x_i|, 1)` per input.
pub fn finite_difference_check<F>(
    f: F,
    jacobian: &DMatrix<f64>,
    point: &[f64],
    relative_step: f64,
) -> Result<FdReport>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let f0 = f(point)?;
    if jacobian.nrows() != f0.len() || jacobian.ncols() != point.len() {
        return Err(Error::Dimension(format!(
            "jacobian is {} x {}, function maps {} inputs to {} outputs",
            jacobian.nrows(),
            jacobian.ncols(),
            point.len(),
            f0.len()
        )));
    }
    let floor = 1e-6 * f0.amax();
    let mut numeric = DMatrix::zeros(f0.len(), point.len());
    let mut column_errors = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let h = scaled_step(point[i], relative_step);
        let column = central_difference(
            |xi| {
                let mut x = point.to_vec();
                x[i] = xi;
                f(&x)
            },
            point[i],
            h,
        )?;
        let analytic = jacobian.column(i).into_owned();
        column_errors.push(relative_error(&analytic, &column, floor));
        numeric.set_column(i, &column);
    }
    let max_relative_error = column_errors.iter().copied().fold(0.0, f64::max);
    Ok(FdReport { analytic: jacobian.clone(), numeric, column_errors, max_relative_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]);
        let f = |x: &[f64]| Ok(&a * DVector::from_column_slice(x));
        let report = finite_difference_check(f, &a, &[0.3, -1.2, 2.0], DEFAULT_RELATIVE_STEP).unwrap();
        assert!(report.max_relative_error < 1e-9, "{}", report.max_relative_error);
    }

    #[test]
    fn quadratic_first_derivative_is_exact() {
        let f = |x: &[f64]| Ok(DVector::from_vec(vec![x[0] * x[0] + 3.0 * x[0] * x[1]]));
        let (x, y) = (0.7, -0.4);
        let jac = DMatrix::from_row_slice(1, 2, &[2.0 * x + 3.0 * y, 3.0 * x]);
        let report = finite_difference_check(f, &jac, &[x, y], DEFAULT_RELATIVE_STEP).unwrap();
        assert!(report.max_relative_error < 1e-9, "{}", report.max_relative_error);
    }

    #[test]
    fn wrong_jacobian_is_reported() {
        let f = |x: &[f64]| Ok(DVector::from_vec(vec![x[0].sin()]));
        let jac = DMatrix::from_element(1, 1, 0.0);
        let report = finite_difference_check(f, &jac, &[0.5], DEFAULT_RELATIVE_STEP).unwrap();
        assert!((report.max_relative_error - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evaluation_failure_propagates() {
        let f = |x: &[f64]| {
            if x[0] > 1.0 {
                Err(Error::Domain("outside".into()))
            } else {
                Ok(DVector::from_element(1, x[0]))
            }
        };
        let jac = DMatrix::from_element(1, 1, 1.0);
        assert!(finite_difference_check(f, &jac, &[1.0], DEFAULT_RELATIVE_STEP).is_err());
    }
}
