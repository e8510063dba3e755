//! Two estimators of the model parameters from measurements:
//!
//! * ECFM: minimize `0.5 |lambda(eps)|^2`, the size of the impulse forces needed to pull
//!   the model state through the data. Its minimum measures how inconsistent the
//!   model is with the data.
//! * standard: minimize `0.5 |M theta(eps) - V|^2` over the unconstrained state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{AffineParameterizedSystem, ExperimentDesign, MeasurementOperator, NodeSide};
use crate::sensitivity::{solve_sensitivity_cascade, state_sensitivity, SystemDerivatives};
use crate::solver::minimize::{minimize_box, Evaluation, MinimizeOptions};
use crate::solver::saddle::{saddle_rhs, DataVector, SaddleOperator};

#[derive(Debug, Clone)]
pub struct InverseResult {
    pub eps: Vec<f64>,
    /// `0.5 |lambda|^2` for ECFM, `0.5 |M theta - V|^2` for the standard estimator.
    pub objective: f64,
    /// Constraint forces at the estimate (ECFM only).
    pub lambda: Option<DVector<f64>>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Box of admissible model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParameterBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l <= h && l.is_finite() && h.is_finite())) {
            return Err(Error::Domain(format!("invalid parameter bounds {lo:?} .. {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn scalar(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }
}

fn prepare(
    system: &AffineParameterizedSystem,
    design: &ExperimentDesign,
    data: &DataVector,
    eps0: &[f64],
    bounds: &ParameterBounds,
) -> Result<MeasurementOperator> {
    if design.is_empty() {
        return Err(Error::DegenerateProblem("no measurements: the objective is constant".into()));
    }
    if data.len() != design.len() {
        return Err(Error::Dimension(format!("{} data values for {} measurements", data.len(), design.len())));
    }
    let n = system.parameter_count();
    if eps0.len() != n || bounds.lo.len() != n {
        return Err(Error::Dimension(format!("the system has {n} model parameters")));
    }
    MeasurementOperator::new(design, system.mesh(), NodeSide::Right)
}

/// Value, gradient and full Hessian of `0.5 |lambda(eps)|^2`.
fn ecfm_evaluation(
    system: &AffineParameterizedSystem,
    measurement: &MeasurementOperator,
    data: &DataVector,
    partials: &SystemDerivatives,
    eps: &[f64],
) -> Result<(Evaluation, DVector<f64>)> {
    let operator = SaddleOperator::assemble(system, eps, measurement)?;
    let q = saddle_rhs(system, eps, measurement, data)?;
    let solution = operator.solve(system, &q)?;
    let derivs = solve_sensitivity_cascade(partials, operator.factored(), &solution.y)?;
    let (n_free, c) = (operator.free_count(), operator.measurement_count());
    let lam = |v: &DVector<f64>| v.rows(n_free, c).into_owned();
    let l = &solution.lambda;
    let l_eps: Vec<_> = derivs.y_eps.iter().map(lam).collect();
    let n = eps.len();
    let gradient = DVector::from_iterator(n, l_eps.iter().map(|la| l.dot(la)));
    let hessian = DMatrix::from_fn(n, n, |a, g| l_eps[a].dot(&l_eps[g]) + l.dot(&lam(&derivs.y_eps_eps[a][g])));
    Ok((Evaluation { value: solution.objective, gradient, hessian }, solution.lambda))
}

/// Minimize `0.5 |lambda(eps)|^2` over `bounds` starting from `eps0`.
pub fn ecfm_inverse(
    system: &AffineParameterizedSystem,
    design: &ExperimentDesign,
    data: &DataVector,
    eps0: &[f64],
    bounds: &ParameterBounds,
) -> Result<InverseResult> {
    let measurement = prepare(system, design, data, eps0, bounds)?;
    let partials = SystemDerivatives::for_saddle(system, &measurement, data, false)?;
    let report = minimize_box(
        |eps| ecfm_evaluation(system, &measurement, data, &partials, eps).map(|e| e.0),
        eps0,
        &bounds.lo,
        &bounds.hi,
        &MinimizeOptions::default(),
    )?;
    let (evaluation, lambda) = ecfm_evaluation(system, &measurement, data, &partials, &report.x)?;
    Ok(InverseResult {
        eps: report.x,
        objective: evaluation.value,
        lambda: Some(lambda),
        iterations: report.iterations,
        gradient_norm: report.gradient_norm,
    })
}

/// Value, gradient and Gauss-Newton Hessian of `0.5 |M theta(eps) - V|^2`.
fn standard_evaluation(
    system: &AffineParameterizedSystem,
    measurement: &MeasurementOperator,
    data: &DataVector,
    eps: &[f64],
) -> Result<Evaluation> {
    let assembled = system.assemble(eps)?;
    let theta = system.expand(&assembled.solve(&assembled.f));
    let residual = measurement.matrix() * &theta - data.values();
    let sens = state_sensitivity(system, &assembled, &theta)?;
    let columns: Vec<DVector<f64>> = sens.iter().map(|s| measurement.matrix() * s).collect();
    let jr = DMatrix::from_columns(&columns);
    Ok(Evaluation {
        value: 0.5 * residual.norm_squared(),
        gradient: jr.transpose() * &residual,
        hessian: jr.transpose() * &jr,
    })
}

/// Minimize `0.5 |M theta(eps) - V|^2` over `bounds` with Gauss-Newton steps.
pub fn standard_inverse(
    system: &AffineParameterizedSystem,
    design: &ExperimentDesign,
    data: &DataVector,
    eps0: &[f64],
    bounds: &ParameterBounds,
) -> Result<InverseResult> {
    let measurement = prepare(system, design, data, eps0, bounds)?;
    let report = minimize_box(
        |eps| standard_evaluation(system, &measurement, data, eps),
        eps0,
        &bounds.lo,
        &bounds.hi,
        &MinimizeOptions::default(),
    )?;
    Ok(InverseResult {
        eps: report.x,
        objective: report.value,
        lambda: None,
        iterations: report.iterations,
        gradient_norm: report.gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{CaseKind, ModelProblemSpec};
    use crate::fem::{build_case_system, Mesh1D};

    fn consistent(case: CaseKind, truth: f64, positions: Vec<f64>) -> (AffineParameterizedSystem, ExperimentDesign, DataVector) {
        let mesh = Mesh1D::uniform(20).unwrap();
        let spec = ModelProblemSpec::new(1.2, 0.9, 0.0).unwrap();
        let sys = build_case_system(case, &spec, &mesh).unwrap();
        let design = ExperimentDesign::for_mesh(positions, &mesh).unwrap();
        let m = MeasurementOperator::new(&design, &mesh, NodeSide::Right).unwrap();
        let values = m.matrix() * sys.forward_solve(&[truth]).unwrap();
        (sys, design, DataVector::new(values.as_slice().to_vec()))
    }

    #[test]
    fn both_estimators_recover_consistent_parameters() {
        for case in CaseKind::ALL {
            let (sys, design, data) = consistent(case, 1.7, vec![0.35, 0.8]);
            let bounds = ParameterBounds::scalar(0.5, 3.0).unwrap();
            let e = ecfm_inverse(&sys, &design, &data, &[0.6], &bounds).unwrap();
            let s = standard_inverse(&sys, &design, &data, &[2.9], &bounds).unwrap();
            assert!((e.eps[0] - 1.7).abs() < 1e-6, "{case:?} {e:?}");
            assert!((s.eps[0] - 1.7).abs() < 1e-6, "{case:?} {s:?}");
            assert!(e.objective < 1e-12 && s.objective < 1e-12);
        }
    }

    #[test]
    fn no_measurements_is_degenerate() {
        let (sys, _, _) = consistent(CaseKind::ParameterizedSource, 1.0, vec![0.5]);
        let empty = ExperimentDesign::for_mesh(vec![], sys.mesh()).unwrap();
        let bounds = ParameterBounds::scalar(0.0, 2.0).unwrap();
        let data = DataVector::new(vec![]);
        assert!(matches!(standard_inverse(&sys, &empty, &data, &[1.0], &bounds), Err(Error::DegenerateProblem(_))));
        assert!(matches!(ecfm_inverse(&sys, &empty, &data, &[1.0], &bounds), Err(Error::DegenerateProblem(_))));
    }

    #[test]
    fn estimate_can_sit_on_a_bound() {
        let (sys, design, data) = consistent(CaseKind::ParameterizedBC, 1.7, vec![0.5]);
        let bounds = ParameterBounds::scalar(0.0, 1.0).unwrap();
        let e = ecfm_inverse(&sys, &design, &data, &[0.2], &bounds).unwrap();
        assert_eq!(e.eps[0], 1.0);
        assert!(e.objective > 0.0);
    }
}
