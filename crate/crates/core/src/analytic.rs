//! Closed-form solutions of the model problem
//!
//! ```text
//! k u'' + b = 0 on (0, 1),   u(0) = 0,   k u'(1) = p
//! u(x) = -(b / 2k) x^2 + ((p + b) / k) x
//! ```
//!
//! and of its four single-parameter variants with one impulse constraint force at the
//! measurement position `beta`. For every variant the constraint force `lambda(eps, beta)`
//! follows from requiring the parameterized state to pass through the noiseless datum
//! `v(beta) = u(beta)`. It is affine in `eps`, so the curvature integrand
//! `(dlambda/deps)^2 + lambda d2lambda/deps2` reduces to `(dlambda/deps)^2` and does not
//! depend on the prior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::PriorSpec;

/// Constants of the data-generating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelProblemSpec {
    pub k: f64,
    pub b: f64,
    pub p: f64,
}

impl ModelProblemSpec {
    pub fn new(k: f64, b: f64, p: f64) -> Result<Self> {
        let spec = Self { k, b, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Domain(format!("stiffness k must be positive, got {}", self.k)));
        }
        if !(self.b.is_finite() && self.p.is_finite()) {
            return Err(Error::Domain("b and p must be finite".into()));
        }
        Ok(())
    }
}

/// Which part of the model problem the scalar parameter `eps` replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Traction at x = 1: `k w'(1) = eps`.
    #[serde(rename = "parameterized_bc")]
    ParameterizedBC,
    /// Distributed source: `k w'' + eps = 0`.
    ParameterizedSource,
    /// Stiffness: `eps w'' + b = 0`, `eps w'(1) = p`.
    ParameterizedMaterial,
    /// Distributed source with a wrongly assumed traction-free end, `k w'(1) = 0`.
    MisspecifiedSource,
}

impl CaseKind {
    pub const ALL: [CaseKind; 4] = [
        CaseKind::ParameterizedBC,
        CaseKind::ParameterizedSource,
        CaseKind::ParameterizedMaterial,
        CaseKind::MisspecifiedSource,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseKind::ParameterizedBC => "parameterized_bc",
            CaseKind::ParameterizedSource => "parameterized_source",
            CaseKind::ParameterizedMaterial => "parameterized_material",
            CaseKind::MisspecifiedSource => "misspecified_source",
        }
    }

    /// Parameter value at which the model reproduces the true system exactly.
    /// The mis-specified model has none unless `p = 0`, in which case `eps = b` works.
    pub fn consistent_parameter(self, spec: &ModelProblemSpec) -> Option<f64> {
        match self {
            CaseKind::ParameterizedBC => Some(spec.p),
            CaseKind::ParameterizedSource => Some(spec.b),
            CaseKind::ParameterizedMaterial => Some(spec.k),
            CaseKind::MisspecifiedSource => (spec.p == 0.0).then_some(spec.b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Fisher,
    Ecfm,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Fisher => "fisher",
            Criterion::Ecfm => "ecfm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEvaluation {
    pub lambda: f64,
    pub dlambda_deps: f64,
    pub d2lambda_deps2: f64,
    /// `(dlambda/deps)^2 + lambda d2lambda/deps2`
    pub objective_integrand: f64,
}

/// Maximizers of a design objective over [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum ArgmaxSet {
    /// The objective is constant: every position is optimal.
    WholeInterval,
    Points(Vec<f64>),
}

impl ArgmaxSet {
    pub fn contains(&self, beta: f64, tol: f64) -> bool {
        match self {
            ArgmaxSet::WholeInterval => (-tol..=1.0 + tol).contains(&beta),
            ArgmaxSet::Points(points) => points.iter().any(|x| (x - beta).abs() <= tol),
        }
    }

    /// Replace every maximizer at `0` with `beta_min`: the finite element path cannot
    /// measure on the Dirichlet node.
    pub fn clamp_below(&self, beta_min: f64) -> ArgmaxSet {
        match self {
            ArgmaxSet::WholeInterval => ArgmaxSet::WholeInterval,
            ArgmaxSet::Points(points) => {
                ArgmaxSet::Points(points.iter().map(|&x| x.max(beta_min)).collect())
            }
        }
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} = {x} lies outside [0, 1]")));
    }
    Ok(())
}

pub fn true_solution(spec: &ModelProblemSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    check_unit("x", x)?;
    Ok(displacement(spec, x))
}

fn displacement(spec: &ModelProblemSpec, x: f64) -> f64 {
    -spec.b / (2.0 * spec.k) * x * x + (spec.p + spec.b) / spec.k * x
}

/// du/dx of the true solution.
pub fn true_slope(spec: &ModelProblemSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    check_unit("x", x)?;
    Ok(-spec.b / spec.k * x + (spec.p + spec.b) / spec.k)
}

/// Noiseless measurement of the true system at `beta`.
pub fn data_at(spec: &ModelProblemSpec, beta: f64) -> Result<f64> {
    check_unit("beta", beta).and_then(|_| true_solution(spec, beta))
}

/// Constraint force and its `eps` derivatives for a single measurement at `beta`.
///
/// Every variant has the form `w(beta) = g(eps, beta) + lambda beta / c(eps)` with
/// `c = k` (or `eps` for the material case), so `lambda` is obtained by solving
/// `w(beta) = v(beta)` for it:
///
/// * boundary condition: `lambda = p - eps`
/// * source: `lambda = (beta/2)(eps - b) + b - eps`
/// * material: `lambda = (b beta/2 - p - b)(1 - eps/k)`
/// * mis-specified source: `lambda = (beta/2)(eps - b) + p + b - eps`
///
/// For the mis-specified model one sometimes sees the middle factor written
/// `(eps - beta)`; solving `w(beta) = v(beta)` gives `(eps - b)`. Both readings share
/// `dlambda/deps = beta/2 - 1`.
pub fn constraint_force(
    case: CaseKind,
    spec: &ModelProblemSpec,
    eps: f64,
    beta: f64,
) -> Result<OracleEvaluation> {
    spec.validate()?;
    check_unit("beta", beta)?;
    if !eps.is_finite() {
        return Err(Error::Domain("eps must be finite".into()));
    }
    let ModelProblemSpec { k, b, p } = *spec;
    let (lambda, slope) = match case {
        CaseKind::ParameterizedBC => (p - eps, -1.0),
        CaseKind::ParameterizedSource => (0.5 * beta * (eps - b) + b - eps, 0.5 * beta - 1.0),
        CaseKind::ParameterizedMaterial => {
            if eps <= 0.0 {
                return Err(Error::Domain(format!(
                    "material parameter must be positive, got {eps}"
                )));
            }
            let c = 0.5 * b * beta - p - b;
            (c * (1.0 - eps / k), -c / k)
        }
        CaseKind::MisspecifiedSource => {
            (0.5 * beta * (eps - b) + p + b - eps, 0.5 * beta - 1.0)
        }
    };
    Ok(OracleEvaluation {
        lambda,
        dlambda_deps: slope,
        d2lambda_deps2: 0.0,
        objective_integrand: slope * slope,
    })
}

/// Prior-averaged constraint-force curvature at `beta`. The integrand does not depend
/// on `eps`, so the prior only has to be well formed.
pub fn ecfm_design_objective(
    case: CaseKind,
    spec: &ModelProblemSpec,
    prior: &PriorSpec,
    beta: f64,
) -> Result<f64> {
    prior.scalar()?;
    spec.validate()?;
    check_unit("beta", beta)?;
    let ModelProblemSpec { k, b, p } = *spec;
    Ok(match case {
        CaseKind::ParameterizedBC => 1.0,
        CaseKind::ParameterizedSource | CaseKind::MisspecifiedSource => (0.5 * beta - 1.0).powi(2),
        CaseKind::ParameterizedMaterial => (p + b * (1.0 - 0.5 * beta)).powi(2) / (k * k),
    })
}

/// d/dbeta of [`ecfm_design_objective`].
pub fn ecfm_design_objective_slope(case: CaseKind, spec: &ModelProblemSpec, beta: f64) -> Result<f64> {
    spec.validate()?;
    check_unit("beta", beta)?;
    let ModelProblemSpec { k, b, p } = *spec;
    Ok(match case {
        CaseKind::ParameterizedBC => 0.0,
        CaseKind::ParameterizedSource | CaseKind::MisspecifiedSource => 0.5 * beta - 1.0,
        CaseKind::ParameterizedMaterial => -b * (p + b * (1.0 - 0.5 * beta)) / (k * k),
    })
}

/// `dw(beta)/deps` of the constraint-free prediction, with its `eps` dependence
/// factored as `shape(beta) * scale(eps)`.
fn prediction_sensitivity_shape(case: CaseKind, spec: &ModelProblemSpec, beta: f64) -> f64 {
    let ModelProblemSpec { k, b, p } = *spec;
    match case {
        CaseKind::ParameterizedBC => beta / k,
        CaseKind::ParameterizedSource | CaseKind::MisspecifiedSource => (beta - 0.5 * beta * beta) / k,
        // w = a(beta) / eps  =>  dw/deps = -a(beta) / eps^2
        CaseKind::ParameterizedMaterial => -((p + b) * beta - 0.5 * b * beta * beta),
    }
}

fn prediction_sensitivity_shape_slope(case: CaseKind, spec: &ModelProblemSpec, beta: f64) -> f64 {
    let ModelProblemSpec { k, b, p } = *spec;
    match case {
        CaseKind::ParameterizedBC => 1.0 / k,
        CaseKind::ParameterizedSource | CaseKind::MisspecifiedSource => (1.0 - beta) / k,
        CaseKind::ParameterizedMaterial => -((p + b) - b * beta),
    }
}

/// E[(eps-dependent factor of dw/deps)^2] under the prior.
fn sensitivity_scale(case: CaseKind, prior: &PriorSpec) -> Result<f64> {
    let marginal = prior.scalar()?;
    match case {
        CaseKind::ParameterizedMaterial => marginal.inverse_moment(4),
        _ => Ok(1.0),
    }
}

/// Prior-averaged squared sensitivity `E[(dw(beta)/deps)^2]` of the model prediction.
pub fn fisher_design_objective(
    case: CaseKind,
    spec: &ModelProblemSpec,
    prior: &PriorSpec,
    beta: f64,
) -> Result<f64> {
    spec.validate()?;
    check_unit("beta", beta)?;
    let shape = prediction_sensitivity_shape(case, spec, beta);
    Ok(shape * shape * sensitivity_scale(case, prior)?)
}

/// d/dbeta of [`fisher_design_objective`].
pub fn fisher_design_objective_slope(
    case: CaseKind,
    spec: &ModelProblemSpec,
    prior: &PriorSpec,
    beta: f64,
) -> Result<f64> {
    spec.validate()?;
    check_unit("beta", beta)?;
    let shape = prediction_sensitivity_shape(case, spec, beta);
    let slope = prediction_sensitivity_shape_slope(case, spec, beta);
    Ok(2.0 * shape * slope * sensitivity_scale(case, prior)?)
}

/// Critical point `beta* = 2(p/b + 1)` of the material-case objective (its minimum).
pub fn material_critical_point(spec: &ModelProblemSpec) -> Result<f64> {
    if spec.b == 0.0 {
        return Err(Error::DegenerateProblem(
            "b = 0 makes the material-case objective constant in beta".into(),
        ));
    }
    Ok(2.0 * (spec.p / spec.b + 1.0))
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Maximizers over [0, 1] of the chosen single-measurement design objective.
pub fn optimal_beta_analytic(
    case: CaseKind,
    spec: &ModelProblemSpec,
    criterion: Criterion,
) -> Result<ArgmaxSet> {
    spec.validate()?;
    match (criterion, case) {
        (Criterion::Ecfm, CaseKind::ParameterizedBC) => Ok(ArgmaxSet::WholeInterval),
        (Criterion::Ecfm, CaseKind::ParameterizedSource | CaseKind::MisspecifiedSource) => {
            Ok(ArgmaxSet::Points(vec![0.0]))
        }
        (Criterion::Ecfm, CaseKind::ParameterizedMaterial) => {
            // convex in beta, so the maximum sits at the endpoint farther from beta*
            let critical = material_critical_point(spec)?;
            if (critical - 0.5).abs() <= TIE_TOLERANCE * critical.abs().max(1.0) {
                Ok(ArgmaxSet::Points(vec![0.0, 1.0]))
            } else if critical > 0.5 {
                Ok(ArgmaxSet::Points(vec![0.0]))
            } else {
                Ok(ArgmaxSet::Points(vec![1.0]))
            }
        }
        (Criterion::Fisher, CaseKind::ParameterizedMaterial) => {
            // maximize a(beta)^2 with a = (p + b) beta - b beta^2 / 2
            let ModelProblemSpec { b, p, .. } = *spec;
            let a = |x: f64| (p + b) * x - 0.5 * b * x * x;
            if b == 0.0 && p == 0.0 {
                return Ok(ArgmaxSet::WholeInterval);
            }
            let mut candidates = vec![0.0, 1.0];
            if b != 0.0 {
                let vertex = (p + b) / b;
                if vertex > 0.0 && vertex < 1.0 {
                    candidates.push(vertex);
                }
            }
            let best = candidates.iter().map(|&x| a(x).powi(2)).fold(0.0, f64::max);
            let mut points: Vec<f64> = candidates
                .into_iter()
                .filter(|&x| best - a(x).powi(2) <= TIE_TOLERANCE * best.max(1.0))
                .collect();
            points.sort_by(f64::total_cmp);
            Ok(ArgmaxSet::Points(points))
        }
        // dw/deps is increasing on [0, 1] for the remaining models
        (Criterion::Fisher, _) => Ok(ArgmaxSet::Points(vec![1.0])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(k: f64, b: f64, p: f64) -> ModelProblemSpec {
        ModelProblemSpec::new(k, b, p).unwrap()
    }

    fn any_prior() -> PriorSpec {
        PriorSpec::uniform(0.5, 1.5).unwrap()
    }

    #[test]
    fn serde_names_match_display_names() {
        for case in CaseKind::ALL {
            assert_eq!(serde_json::to_string(&case).unwrap(), format!("\"{}\"", case.name()));
        }
    }

    #[test]
    fn true_solution_examples() {
        assert_eq!(true_solution(&spec(1.0, 0.0, 1.0), 0.5).unwrap(), 0.5);
        assert_eq!(true_solution(&spec(1.0, 2.0, 0.0), 1.0).unwrap(), 1.0);
        assert_eq!(true_solution(&spec(3.0, -2.0, 5.0), 0.0).unwrap(), 0.0);
        assert!(matches!(true_solution(&spec(1.0, 0.0, 1.0), 1.5), Err(Error::Domain(_))));
        assert!(ModelProblemSpec::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn data_examples() {
        assert_eq!(data_at(&spec(1.0, 0.0, 1.0), 1.0).unwrap(), 1.0);
        assert_eq!(data_at(&spec(2.0, 2.0, 0.0), 1.0).unwrap(), 0.5);
        assert_eq!(data_at(&spec(2.0, 2.0, 0.0), 0.0).unwrap(), 0.0);
        assert!(data_at(&spec(2.0, 2.0, 0.0), -0.1).is_err());
    }

    #[test]
    fn constraint_force_examples() {
        let bc = constraint_force(CaseKind::ParameterizedBC, &spec(1.0, 0.0, 2.0), 2.0, 0.7).unwrap();
        assert_eq!(bc.lambda, 0.0);
        let bc = constraint_force(CaseKind::ParameterizedBC, &spec(1.0, 0.0, 2.0), 0.5, 0.3).unwrap();
        assert_eq!(bc.lambda, 1.5);
        let src = constraint_force(CaseKind::ParameterizedSource, &spec(1.0, 1.0, 0.0), 1.0, 0.4).unwrap();
        assert_eq!(src.lambda, 0.0);
        let src = constraint_force(CaseKind::ParameterizedSource, &spec(1.0, 2.0, 0.0), 0.0, 1.0).unwrap();
        assert_eq!(src.lambda, 1.0);
        assert!(constraint_force(CaseKind::ParameterizedMaterial, &spec(1.0, 1.0, 1.0), 0.0, 0.5).is_err());
    }

    /// Solve w(beta) = v(beta) for lambda directly from the parameterized solutions
    /// w(x) = -(s/2c) x^2 + (lambda/c) min(x, beta) + ((t + s)/c) x.
    fn lambda_from_matching(case: CaseKind, sp: &ModelProblemSpec, eps: f64, beta: f64) -> f64 {
        let (c, s, t) = match case {
            CaseKind::ParameterizedBC => (sp.k, sp.b, eps),
            CaseKind::ParameterizedSource => (sp.k, eps, sp.p),
            CaseKind::ParameterizedMaterial => (eps, sp.b, sp.p),
            CaseKind::MisspecifiedSource => (sp.k, eps, 0.0),
        };
        let w0 = -s / (2.0 * c) * beta * beta + (t + s) / c * beta;
        (displacement(sp, beta) - w0) * c / beta
    }

    #[test]
    fn closed_forms_match_direct_matching() {
        let sp = spec(1.7, 0.8, -0.3);
        for case in CaseKind::ALL {
            for &eps in &[0.4, 1.1, 2.5] {
                for &beta in &[0.1, 0.5, 0.9, 1.0] {
                    let got = constraint_force(case, &sp, eps, beta).unwrap().lambda;
                    let want = lambda_from_matching(case, &sp, eps, beta);
                    assert!((got - want).abs() < 1e-12, "{case:?} eps={eps} beta={beta}");
                }
            }
        }
    }

    #[test]
    fn ecfm_objective_examples() {
        let s = spec(2.0, 3.0, -1.0);
        for beta in [0.0, 0.5, 1.0] {
            assert_eq!(ecfm_design_objective(CaseKind::ParameterizedBC, &s, &any_prior(), beta).unwrap(), 1.0);
        }
        assert_eq!(ecfm_design_objective(CaseKind::ParameterizedSource, &s, &any_prior(), 0.0).unwrap(), 1.0);
        assert_eq!(ecfm_design_objective(CaseKind::ParameterizedSource, &s, &any_prior(), 1.0).unwrap(), 0.25);
        assert_eq!(
            ecfm_design_objective(CaseKind::ParameterizedMaterial, &spec(1.0, 1.0, 1.0), &any_prior(), 0.0).unwrap(),
            4.0
        );
    }

    #[test]
    fn fisher_objective_examples() {
        let s = spec(1.0, 0.3, 0.7);
        assert_eq!(fisher_design_objective(CaseKind::ParameterizedBC, &s, &any_prior(), 1.0).unwrap(), 1.0);
        assert_eq!(fisher_design_objective(CaseKind::ParameterizedBC, &s, &any_prior(), 0.0).unwrap(), 0.0);
        assert_eq!(fisher_design_objective(CaseKind::ParameterizedSource, &s, &any_prior(), 1.0).unwrap(), 0.25);
        for case in CaseKind::ALL {
            assert_eq!(fisher_design_objective(case, &s, &any_prior(), 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn argmax_examples() {
        let s = spec(1.0, 1.0, 1.0);
        assert_eq!(
            optimal_beta_analytic(CaseKind::ParameterizedSource, &s, Criterion::Ecfm).unwrap(),
            ArgmaxSet::Points(vec![0.0])
        );
        assert_eq!(
            optimal_beta_analytic(CaseKind::ParameterizedMaterial, &s, Criterion::Ecfm).unwrap(),
            ArgmaxSet::Points(vec![0.0])
        );
        assert_eq!(
            optimal_beta_analytic(CaseKind::ParameterizedMaterial, &spec(1.0, 1.0, -1.0), Criterion::Ecfm).unwrap(),
            ArgmaxSet::Points(vec![1.0])
        );
        assert_eq!(
            optimal_beta_analytic(CaseKind::ParameterizedMaterial, &spec(1.0, 1.0, -0.75), Criterion::Ecfm).unwrap(),
            ArgmaxSet::Points(vec![0.0, 1.0])
        );
        assert_eq!(
            optimal_beta_analytic(CaseKind::ParameterizedBC, &s, Criterion::Fisher).unwrap(),
            ArgmaxSet::Points(vec![1.0])
        );
        assert_eq!(
            optimal_beta_analytic(CaseKind::ParameterizedBC, &s, Criterion::Ecfm).unwrap(),
            ArgmaxSet::WholeInterval
        );
        assert!(matches!(
            optimal_beta_analytic(CaseKind::ParameterizedMaterial, &spec(1.0, 0.0, 1.0), Criterion::Ecfm),
            Err(Error::DegenerateProblem(_))
        ));
    }

    #[test]
    fn slopes_match_central_differences() {
        let s = spec(1.3, 0.9, 0.4);
        let prior = PriorSpec::uniform(0.8, 1.6).unwrap();
        let h = 1e-6;
        for case in CaseKind::ALL {
            for beta in [0.2, 0.5, 0.8] {
                let fd = (ecfm_design_objective(case, &s, &prior, beta + h).unwrap()
                    - ecfm_design_objective(case, &s, &prior, beta - h).unwrap())
                    / (2.0 * h);
                assert!((fd - ecfm_design_objective_slope(case, &s, beta).unwrap()).abs() < 1e-8);
                let fd = (fisher_design_objective(case, &s, &prior, beta + h).unwrap()
                    - fisher_design_objective(case, &s, &prior, beta - h).unwrap())
                    / (2.0 * h);
                let slope = fisher_design_objective_slope(case, &s, &prior, beta).unwrap();
                assert!((fd - slope).abs() < 1e-7 * slope.abs().max(1.0), "{case:?} {beta}");
            }
        }
    }
}
