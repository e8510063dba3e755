//! Design criteria averaged over the prior.
//!
//! * Fisher: `J_inv = E[(M dtheta/deps)^T (M dtheta/deps)]` from the unconstrained state.
//! * ECFM: `J = E[d2(0.5 |lambda|^2)/deps2] = E[lambda_eps^T lambda_eps + lambda . lambda_eps_eps]`
//!   from the constrained state, with the data replaced by a reference field
//!   interpolated at the design.
//!
//! Both report the smallest eigenvalue (the E-criterion) and `dJ/dbeta` so that its
//! gradient follows from [`min_eigenvalue_gradient`]. The noise variance only rescales
//! `J_inv` and is left out.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::analytic::Criterion;
use crate::error::{Error, Result};
use crate::fem::{AffineParameterizedSystem, ExperimentDesign, MeasurementOperator, NodeSide};
use crate::linalg::EigenPair;
use crate::quadrature::{PriorSpec, QuadratureRule};
use crate::sensitivity::{min_eigenvalue_gradient, solve_sensitivity_cascade, state_sensitivity, SystemDerivatives};
use crate::sensitivity::DEFAULT_GAP_TOLERANCE;
use crate::solver::{saddle_rhs, DataVector, SaddleOperator};

/// Nodal field whose interpolation at the design stands in for the data when the ECFM
/// criterion is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceState {
    /// Prior-averaged forward solution.
    PriorMean,
    /// A given field on all mesh nodes, e.g. the true solution.
    Field(DVector<f64>),
}

/// Contribution of one quadrature node.
#[derive(Debug, Clone)]
pub struct NodeContribution {
    pub eps: Vec<f64>,
    pub weight: f64,
    pub integrand: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub j: DMatrix<f64>,
    /// Smallest eigenvalue of `j`, the E-criterion value.
    pub min_eig: f64,
    /// `dJ/dbeta_K` per measurement position.
    pub dj_dbeta: Vec<DMatrix<f64>>,
    pub diagnostics: Vec<NodeContribution>,
}

impl CriterionResult {
    fn new(j: DMatrix<f64>, dj_dbeta: Vec<DMatrix<f64>>, diagnostics: Vec<NodeContribution>) -> Self {
        let j = (&j + j.transpose()) * 0.5;
        let min_eig = if j.nrows() == 0 { f64::NAN } else { j.symmetric_eigenvalues().min() };
        Self { j, min_eig, dj_dbeta, diagnostics }
    }

    /// Gradient of `min_eig` with respect to the measurement positions.
    pub fn grad_beta(&self) -> Result<Vec<f64>> {
        self.eigen().map(|(_, g)| g)
    }

    pub fn eigen(&self) -> Result<(EigenPair, Vec<f64>)> {
        min_eigenvalue_gradient(&self.j, &self.dj_dbeta, DEFAULT_GAP_TOLERANCE)
    }
}

#[derive(Debug, Clone)]
struct NodeState {
    eps: Vec<f64>,
    weight: f64,
    /// Forward solution and its parameter sensitivities, on all nodes.
    theta: DVector<f64>,
    sens: Vec<DVector<f64>>,
}

/// A parameterized system together with a prior quadrature rule. Forward solutions and
/// their sensitivities at the quadrature nodes do not depend on the design and are
/// computed once.
#[derive(Debug, Clone)]
pub struct OedProblem {
    system: AffineParameterizedSystem,
    quadrature: QuadratureRule,
    nodes: Vec<NodeState>,
    prior_mean: DVector<f64>,
    side: NodeSide,
}

impl OedProblem {
    pub fn new(system: AffineParameterizedSystem, prior: &PriorSpec, nodes_per_dimension: usize) -> Result<Self> {
        if prior.dimension() != system.parameter_count() {
            return Err(Error::Dimension(format!(
                "prior has {} parameters, the system {}",
                prior.dimension(),
                system.parameter_count()
            )));
        }
        Self::with_rule(system, QuadratureRule::for_prior(prior, nodes_per_dimension)?)
    }

    pub fn with_rule(system: AffineParameterizedSystem, quadrature: QuadratureRule) -> Result<Self> {
        if quadrature.dimension() != system.parameter_count() {
            return Err(Error::Dimension("quadrature rule and system disagree on the parameter count".into()));
        }
        let nodes = quadrature
            .iter()
            .enumerate()
            .map(|(index, (eps, weight))| {
                let wrap = |source: Error| Error::InfeasibleNode { index, eps: eps.to_vec(), source: Box::new(source) };
                let assembled = system.assemble(eps).map_err(wrap)?;
                let theta = system.expand(&assembled.solve(&assembled.f));
                let sens = state_sensitivity(&system, &assembled, &theta).map_err(wrap)?;
                Ok(NodeState { eps: eps.to_vec(), weight, theta, sens })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prior_mean = DVector::zeros(system.mesh().node_count());
        for node in &nodes {
            prior_mean.axpy(node.weight, &node.theta, 1.0);
        }
        Ok(Self { system, quadrature, nodes, prior_mean, side: NodeSide::Right })
    }

    /// Which element supplies the position derivative at interior nodes.
    pub fn with_node_side(mut self, side: NodeSide) -> Self {
        self.side = side;
        self
    }

    pub fn system(&self) -> &AffineParameterizedSystem {
        &self.system
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    pub fn prior_mean_field(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn measurement(&self, design: &ExperimentDesign) -> Result<MeasurementOperator> {
        MeasurementOperator::new(design, self.system.mesh(), self.side)
    }

    /// Prior-averaged response at the design, `M(beta) E[theta(eps)]`.
    pub fn data_model(&self, design: &ExperimentDesign) -> Result<DataVector> {
        DataVector::from_field(&self.measurement(design)?, &self.prior_mean)
    }

    pub fn reference_data(&self, measurement: &MeasurementOperator, reference: &ReferenceState) -> Result<DataVector> {
        match reference {
            ReferenceState::PriorMean => DataVector::from_field(measurement, &self.prior_mean),
            ReferenceState::Field(field) => DataVector::from_field(measurement, field),
        }
    }

    pub fn criterion(
        &self,
        criterion: Criterion,
        design: &ExperimentDesign,
        reference: &ReferenceState,
    ) -> Result<CriterionResult> {
        match criterion {
            Criterion::Fisher => self.fisher_matrix(design),
            Criterion::Ecfm => self.ecfm_hessian(design, reference),
        }
    }

    pub fn fisher_matrix(&self, design: &ExperimentDesign) -> Result<CriterionResult> {
        let m = self.measurement(design)?;
        let n = self.system.parameter_count();
        let c = design.len();
        let mut j = DMatrix::zeros(n, n);
        let mut dj = vec![DMatrix::zeros(n, n); c];
        let mut diagnostics = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ms: Vec<DVector<f64>> = node.sens.iter().map(|s| m.matrix() * s).collect();
            let ds: Vec<DVector<f64>> = node.sens.iter().map(|s| m.slopes() * s).collect();
            let integrand = DMatrix::from_fn(n, n, |a, b| ms[a].dot(&ms[b]));
            j += &integrand * node.weight;
            for (k, djk) in dj.iter_mut().enumerate() {
                *djk += DMatrix::from_fn(n, n, |a, b| ds[a][k] * ms[b][k] + ms[a][k] * ds[b][k]) * node.weight;
            }
            diagnostics.push(NodeContribution { eps: node.eps.clone(), weight: node.weight, integrand });
        }
        Ok(CriterionResult::new(j, dj, diagnostics))
    }

    pub fn ecfm_hessian(&self, design: &ExperimentDesign, reference: &ReferenceState) -> Result<CriterionResult> {
        let m = self.measurement(design)?;
        let data = self.reference_data(&m, reference)?;
        let partials = SystemDerivatives::for_saddle(&self.system, &m, &data, true)?;
        let n = self.system.parameter_count();
        let c = design.len();
        let load_only = (0..n).all(|a| !self.system.stiffness_depends_on(a));
        // with K independent of eps one factorization serves every quadrature node
        let shared = if load_only {
            Some(SaddleOperator::assemble(&self.system, &self.nodes[0].eps, &m)?)
        } else {
            None
        };
        let per_node = self
            .nodes
            .par_iter()
            .map(|node| {
                let owned;
                let operator = match &shared {
                    Some(op) => op,
                    None => {
                        owned = SaddleOperator::assemble(&self.system, &node.eps, &m)?;
                        &owned
                    }
                };
                let q = saddle_rhs(&self.system, &node.eps, &m, &data)?;
                let solution = operator.solve(&self.system, &q)?;
                let s = solve_sensitivity_cascade(&partials, operator.factored(), &solution.y)?;
                let n_free = operator.free_count();
                let lam = |v: &DVector<f64>| v.rows(n_free, c).into_owned();
                let l = solution.lambda;
                let l_a: Vec<_> = s.y_eps.iter().map(lam).collect();
                let l_k: Vec<_> = s.y_beta.iter().map(lam).collect();
                let l_ag: Vec<Vec<_>> = s.y_eps_eps.iter().map(|r| r.iter().map(lam).collect()).collect();
                let l_ak: Vec<Vec<_>> = s.y_eps_beta.iter().map(|r| r.iter().map(lam).collect()).collect();
                let integrand = DMatrix::from_fn(n, n, |a, g| l_a[a].dot(&l_a[g]) + l.dot(&l_ag[a][g]));
                let dh: Vec<DMatrix<f64>> = (0..c)
                    .map(|k| {
                        DMatrix::from_fn(n, n, |a, g| {
                            l_ak[a][k].dot(&l_a[g])
                                + l_a[a].dot(&l_ak[g][k])
                                + l_k[k].dot(&l_ag[a][g])
                                + l.dot(&lam(&s.y_eps_eps_beta[a][g][k]))
                        })
                    })
                    .collect();
                Ok((integrand, dh))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut j = DMatrix::zeros(n, n);
        let mut dj = vec![DMatrix::zeros(n, n); c];
        let mut diagnostics = Vec::with_capacity(self.nodes.len());
        for (node, (integrand, dh)) in self.nodes.iter().zip(per_node) {
            j += &integrand * node.weight;
            for (djk, dhk) in dj.iter_mut().zip(&dh) {
                *djk += dhk * node.weight;
            }
            diagnostics.push(NodeContribution { eps: node.eps.clone(), weight: node.weight, integrand });
        }
        Ok(CriterionResult::new(j, dj, diagnostics))
    }
}

/// Prior-averaged Fisher matrix of a design.
pub fn fisher_matrix(
    system: &AffineParameterizedSystem,
    design: &ExperimentDesign,
    prior: &PriorSpec,
    quadrature_nodes: usize,
) -> Result<CriterionResult> {
    OedProblem::new(system.clone(), prior, quadrature_nodes)?.fisher_matrix(design)
}

/// Prior-averaged ECFM curvature matrix of a design, with the prior-mean data model.
pub fn ecfm_hessian(
    system: &AffineParameterizedSystem,
    design: &ExperimentDesign,
    prior: &PriorSpec,
    quadrature_nodes: usize,
) -> Result<CriterionResult> {
    OedProblem::new(system.clone(), prior, quadrature_nodes)?.ecfm_hessian(design, &ReferenceState::PriorMean)
}

/// Prior-averaged response at the design.
pub fn data_model(
    system: &AffineParameterizedSystem,
    design: &ExperimentDesign,
    prior: &PriorSpec,
    quadrature_nodes: usize,
) -> Result<DataVector> {
    OedProblem::new(system.clone(), prior, quadrature_nodes)?.data_model(design)
}
