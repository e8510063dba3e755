mod common;

use ecfm_oed::analytic::{CaseKind, ModelProblemSpec};
use ecfm_oed::fem::{build_case_system, ExperimentDesign, MeasurementOperator, Mesh1D, NodeSide};
use ecfm_oed::solver::{ecfm_inverse, solve_constrained, standard_inverse, DataVector, ParameterBounds};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consistent_data_gives_the_same_estimate(case in prop::sample::select(CaseKind::ALL.to_vec()), k in 0.5..2.0f64,
                                               b in 0.3..2.0f64, p in 0.3..2.0f64, truth in 0.5..2.0f64,
                                               offsets in prop::collection::vec(0.0..1.0f64, 1..4), start in 0.0..1.0f64) {
        let p = if case == CaseKind::MisspecifiedSource { 0.0 } else { p };
        let s = ModelProblemSpec::new(k, b, p).unwrap();
        let mesh = Mesh1D::uniform(16).unwrap();
        let system = build_case_system(case, &s, &mesh).unwrap();
        let design = ExperimentDesign::for_mesh(common::off_node_positions(&mesh, offsets.len(), &offsets, 2), &mesh).unwrap();
        let m = MeasurementOperator::new(&design, &mesh, NodeSide::Right).unwrap();
        let data = DataVector::from_field(&m, &system.forward_solve(&[truth]).unwrap()).unwrap();
        let bounds = ParameterBounds::scalar(0.2, 4.0).unwrap();
        let x0 = 0.2 + 3.8 * start;
        let e = ecfm_inverse(&system, &design, &data, &[x0], &bounds).unwrap();
        let st = standard_inverse(&system, &design, &data, &[x0], &bounds).unwrap();
        prop_assert!((e.eps[0] - truth).abs() < 1e-6);
        prop_assert!((e.eps[0] - st.eps[0]).abs() < 1e-6);
        prop_assert!(e.objective < 1e-12);
    }
}

fn misspecified_problem(positions: Vec<f64>) -> (ecfm_oed::fem::AffineParameterizedSystem, ExperimentDesign, DataVector) {
    let s = ModelProblemSpec::new(1.0, 1.0, 1.0).unwrap();
    let mesh = Mesh1D::uniform(32).unwrap();
    let system = build_case_system(CaseKind::MisspecifiedSource, &s, &mesh).unwrap();
    let data = positions.iter().map(|&x| common::bar(1.0, 1.0, 1.0, x)).collect();
    (system, ExperimentDesign::for_mesh(positions, &mesh).unwrap(), DataVector::new(data))
}

#[test]
fn misspecified_single_measurement_matches_the_datum() {
    // one datum at beta = 1: the source absorbs the missing traction, eps / 2 = 3 / 2
    let (system, design, data) = misspecified_problem(vec![1.0]);
    let bounds = ParameterBounds::scalar(-10.0, 10.0).unwrap();
    let scan = (0..=200_000)
        .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
        .min_by(|a, b| {
            let f = |e: f64| (common::model_prediction(CaseKind::MisspecifiedSource, &ModelProblemSpec::new(1.0, 1.0, 1.0).unwrap(), e, 1.0) - 1.5).abs();
            f(*a).total_cmp(&f(*b))
        })
        .unwrap();
    assert!((scan - 3.0).abs() < 1e-4, "{scan}");
    let e = ecfm_inverse(&system, &design, &data, &[0.0], &bounds).unwrap();
    let st = standard_inverse(&system, &design, &data, &[0.0], &bounds).unwrap();
    assert!((e.eps[0] - 3.0).abs() < 1e-8, "{}", e.eps[0]);
    assert!((st.eps[0] - 3.0).abs() < 1e-8, "{}", st.eps[0]);
}

#[test]
fn misspecified_two_measurements_leave_a_residual_force() {
    let (system, design, data) = misspecified_problem(vec![0.5, 1.0]);
    let bounds = ParameterBounds::scalar(-10.0, 10.0).unwrap();
    let e = ecfm_inverse(&system, &design, &data, &[1.0], &bounds).unwrap();
    assert!(e.objective > 1e-4, "{}", e.objective);
    // lambda is affine in eps, so half its squared norm is a parabola; three samples fix its vertex
    let g = |eps: f64| solve_constrained(&system, &[eps], &design, &data).unwrap().objective;
    let (f0, f1, f2) = (g(-1.0), g(0.0), g(1.0));
    let vertex = 0.5 * (f0 - f2) / (f0 - 2.0 * f1 + f2);
    assert!((e.eps[0] - vertex).abs() < 1e-8, "{} vs {vertex}", e.eps[0]);
    assert!(e.objective <= g(vertex) + 1e-14);
    let st = standard_inverse(&system, &design, &data, &[1.0], &bounds).unwrap();
    assert!(st.objective > 1e-6);
}

#[test]
fn bounds_are_respected() {
    let (system, design, data) = misspecified_problem(vec![1.0]);
    let bounds = ParameterBounds::scalar(-1.0, 2.0).unwrap();
    let e = ecfm_inverse(&system, &design, &data, &[0.0], &bounds).unwrap();
    assert_eq!(e.eps[0], 2.0);
    assert!(ParameterBounds::scalar(1.0, 0.0).is_err());
}
