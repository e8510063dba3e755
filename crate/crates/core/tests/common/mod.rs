//! Helpers shared by the integration tests: independent closed forms derived straight
//! from the ODE solutions, and randomized multi-parameter systems.
#![allow(dead_code)]

use ecfm_oed::analytic::{CaseKind, ModelProblemSpec};
use ecfm_oed::fem::system::{element_stiffness, end_load, unit_distributed_load, unit_stiffness};
use ecfm_oed::fem::{AffineParameterizedSystem, ExperimentDesign, MeasurementOperator, Mesh1D, NodeSide};
use ecfm_oed::sensitivity::{solve_sensitivity_cascade, SolutionDerivatives, SystemDerivatives};
use ecfm_oed::solver::{saddle_rhs, DataVector, SaddleOperator};
use ecfm_oed::Result;
use nalgebra::{DMatrix, DVector};

/// `u(x)` of `k u'' + b = 0`, `u(0) = 0`, `k u'(1) = p`.
pub fn bar(k: f64, b: f64, p: f64, x: f64) -> f64 {
    -b * x * x / (2.0 * k) + (p + b) * x / k
}

/// Prediction of the parameterized model of `case` at `x`.
pub fn model_prediction(case: CaseKind, spec: &ModelProblemSpec, eps: f64, x: f64) -> f64 {
    let ModelProblemSpec { k, b, p } = *spec;
    match case {
        CaseKind::ParameterizedBC => bar(k, b, eps, x),
        CaseKind::ParameterizedSource => bar(k, eps, p, x),
        CaseKind::ParameterizedMaterial => bar(eps, b, p, x),
        // traction-free end: k w'(1) = 0
        CaseKind::MisspecifiedSource => bar(k, eps, 0.0, x),
    }
}

fn model_stiffness(case: CaseKind, spec: &ModelProblemSpec, eps: f64) -> f64 {
    if case == CaseKind::ParameterizedMaterial {
        eps
    } else {
        spec.k
    }
}

/// Point force at `beta` that moves the model state onto the datum: the state changes
/// by `lambda G(x, beta)` with the Green's function `G(beta, beta) = beta / k_model`.
pub fn oracle_lambda(case: CaseKind, spec: &ModelProblemSpec, eps: f64, beta: f64) -> f64 {
    let v = bar(spec.k, spec.b, spec.p, beta);
    let w = model_prediction(case, spec, eps, beta);
    (v - w) * model_stiffness(case, spec, eps) / beta
}

/// `dlambda/deps`, exact for the affine forces of the four cases.
pub fn oracle_lambda_slope(case: CaseKind, spec: &ModelProblemSpec, beta: f64) -> f64 {
    let (e0, e1) = (0.75, 1.75);
    (oracle_lambda(case, spec, e1, beta) - oracle_lambda(case, spec, e0, beta)) / (e1 - e0)
}

/// `dw(beta)/deps` by a central difference of the model prediction.
pub fn oracle_prediction_slope(case: CaseKind, spec: &ModelProblemSpec, eps: f64, beta: f64) -> f64 {
    let h = 1e-6 * eps.abs().max(1.0);
    (model_prediction(case, spec, eps + h, beta) - model_prediction(case, spec, eps - h, beta)) / (2.0 * h)
}

/// Composite Simpson average of `f` over `[lo, hi]`.
pub fn simpson_mean(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / (hi - lo)
}

/// Three-parameter bar with a nonhomogeneous Dirichlet value: the stiffness of the
/// left half (`eps_0`), a distributed source (`eps_1`) and the end traction (`eps_2`).
pub fn three_parameter_system(elements: usize, u0: f64) -> AffineParameterizedSystem {
    let mesh = Mesh1D::uniform(elements).unwrap();
    let half = elements / 2;
    let k0 = element_stiffness(&mesh, |e| if e < half { 0.0 } else { 1.3 });
    let k_left = element_stiffness(&mesh, |e| if e < half { 1.0 } else { 0.0 });
    let n = mesh.node_count();
    let f0 = unit_distributed_load(&mesh) * 0.2;
    AffineParameterizedSystem::new(
        mesh.clone(),
        k0,
        vec![k_left, DMatrix::zeros(n, n), DMatrix::zeros(n, n)],
        f0,
        vec![DVector::zeros(n), unit_distributed_load(&mesh), end_load(&mesh)],
        vec![(0, u0)],
    )
    .unwrap()
}

/// Stiffness `eps_0` and source `eps_1` of a bar with traction `p`.
pub fn material_and_source_system(elements: usize, p: f64) -> AffineParameterizedSystem {
    let mesh = Mesh1D::uniform(elements).unwrap();
    let n = mesh.node_count();
    AffineParameterizedSystem::new(
        mesh.clone(),
        DMatrix::zeros(n, n),
        vec![unit_stiffness(&mesh), DMatrix::zeros(n, n)],
        end_load(&mesh) * p,
        vec![DVector::zeros(n), unit_distributed_load(&mesh)],
        vec![(0, 0.0)],
    )
    .unwrap()
}

/// Source and traction as two load parameters of a bar with stiffness `k`.
pub fn source_and_traction_system(elements: usize, k: f64) -> AffineParameterizedSystem {
    let mesh = Mesh1D::uniform(elements).unwrap();
    let n = mesh.node_count();
    AffineParameterizedSystem::new(
        mesh.clone(),
        unit_stiffness(&mesh) * k,
        vec![],
        DVector::zeros(n),
        vec![unit_distributed_load(&mesh), end_load(&mesh)],
        vec![(0, 0.0)],
    )
    .unwrap()
}

/// Saddle solution and its derivative cascade with data interpolated from `field`.
pub fn saddle_state(
    system: &AffineParameterizedSystem,
    field: &DVector<f64>,
    eps: &[f64],
    positions: &[f64],
) -> Result<(DVector<f64>, SolutionDerivatives, f64)> {
    let design = ExperimentDesign::unchecked(positions.to_vec())?;
    let m = MeasurementOperator::new(&design, system.mesh(), NodeSide::Right)?;
    let data = DataVector::from_field(&m, field)?;
    let op = SaddleOperator::assemble(system, eps, &m)?;
    let q = saddle_rhs(system, eps, &m, &data)?;
    let y = op.solve(system, &q)?.y;
    let partials = SystemDerivatives::for_saddle(system, &m, &data, true)?;
    let s = solve_sensitivity_cascade(&partials, op.factored(), &y)?;
    let residual = ecfm_oed::sensitivity::cascade_residuals(&partials, op.matrix(), &y, &s).max();
    Ok((y, s, residual))
}

/// A smooth reference field on the mesh nodes.
pub fn smooth_field(mesh: &Mesh1D, a: f64, b: f64) -> DVector<f64> {
    DVector::from_iterator(mesh.node_count(), mesh.nodes().iter().map(|&x| a * x + b * (3.0 * x).sin()))
}

/// Random off-node positions, one per element-aligned slot, separated by whole elements.
pub fn off_node_positions(mesh: &Mesh1D, count: usize, offsets: &[f64], first: usize) -> Vec<f64> {
    let e = mesh.element_count();
    (0..count)
        .map(|i| {
            let element = (first + i * (e / count.max(1)).max(2)) % e;
            let t = 0.15 + 0.7 * offsets[i % offsets.len()];
            let (a, b) = (mesh.nodes()[element], mesh.nodes()[element + 1]);
            a + t * (b - a)
        })
        .collect()
}
