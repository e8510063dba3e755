mod common;

use ecfm_oed::analytic::{CaseKind, ModelProblemSpec};
use ecfm_oed::fem::system::unit_stiffness;
use ecfm_oed::fem::{build_case_system, true_nodal_solution, ExperimentDesign, MeasurementOperator, Mesh1D, NodeSide};
use ecfm_oed::solver::{solve_constrained, DataVector};
use nalgebra::DVector;
use proptest::prelude::*;

/// Random mesh on [0, 1] with element widths in a 1:4 ratio band.
fn mesh() -> impl Strategy<Value = Mesh1D> {
    prop::collection::vec(1.0..4.0f64, 2..40).prop_map(|widths| {
        let total: f64 = widths.iter().sum();
        let mut nodes = vec![0.0];
        let mut acc = 0.0;
        for w in &widths[..widths.len() - 1] {
            acc += w / total;
            nodes.push(acc);
        }
        nodes.push(1.0);
        Mesh1D::new(nodes).unwrap()
    })
}

fn spec() -> impl Strategy<Value = ModelProblemSpec> {
    (0.3..3.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(k, b, p)| ModelProblemSpec::new(k, b, p).unwrap())
}

proptest! {
    #[test]
    fn stiffness_is_symmetric_and_singular_only_by_translation(mesh in mesh()) {
        let k = unit_stiffness(&mesh);
        prop_assert!((&k - k.transpose()).amax() < 1e-14 * k.amax());
        let ones = DVector::from_element(mesh.node_count(), 1.0);
        prop_assert!((&k * ones).amax() < 1e-10 * k.amax());
        // pinning one end leaves a positive definite block
        let free = k.view((1, 1), (mesh.element_count(), mesh.element_count())).into_owned();
        prop_assert!(free.cholesky().is_some());
    }

    #[test]
    fn nodal_values_are_exact(mesh in mesh(), s in spec()) {
        let u = true_nodal_solution(&s, &mesh).unwrap();
        for (x, v) in mesh.nodes().iter().zip(u.iter()) {
            prop_assert!((v - common::bar(s.k, s.b, s.p, *x)).abs() < 1e-10 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn case_systems_reproduce_the_truth(mesh in mesh(), s in spec(), case in prop::sample::select(CaseKind::ALL.to_vec())) {
        let system = build_case_system(case, &s, &mesh).unwrap();
        let eps = match case.consistent_parameter(&s) {
            Some(e) => e,
            None => return Ok(()),
        };
        let u = system.forward_solve(&[eps]).unwrap();
        let truth = true_nodal_solution(&s, &mesh).unwrap();
        prop_assert!((u - truth).amax() < 1e-10);
    }

    #[test]
    fn interpolation_is_a_partition_of_unity(mesh in mesh(), beta in 0.0..=1.0f64, right in any::<bool>()) {
        let side = if right { NodeSide::Right } else { NodeSide::Left };
        let design = ExperimentDesign::unchecked(vec![beta]).unwrap();
        let m = MeasurementOperator::new(&design, &mesh, side).unwrap();
        prop_assert!((m.matrix().row(0).sum() - 1.0).abs() < 1e-14);
        prop_assert!(m.slopes().row(0).sum().abs() < 1e-9 / mesh.min_element_width());
        // a linear field is reproduced anywhere, with its slope
        let field = DVector::from_iterator(mesh.node_count(), mesh.nodes().iter().map(|x| 2.0 - 3.0 * x));
        prop_assert!(((m.matrix() * &field)[0] - (2.0 - 3.0 * beta)).abs() < 1e-13);
        prop_assert!(((m.slopes() * &field)[0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn constrained_state_honours_the_data(s in spec(), elements in 12usize..40, eps in 0.3..2.0f64, offsets in prop::collection::vec(0.0..1.0f64, 1..4), case in prop::sample::select(CaseKind::ALL.to_vec())) {
        let mesh = Mesh1D::uniform(elements).unwrap();
        let system = build_case_system(case, &s, &mesh).unwrap();
        let beta = common::off_node_positions(&mesh, offsets.len(), &offsets, 1);
        let design = ExperimentDesign::for_mesh(beta.clone(), &mesh).unwrap();
        let data: Vec<f64> = beta.iter().map(|&x| common::bar(s.k, s.b, s.p, x)).collect();
        let sol = solve_constrained(&system, &[eps], &design, &DataVector::new(data.clone())).unwrap();
        let m = MeasurementOperator::new(&design, &mesh, NodeSide::Right).unwrap();
        let predicted = m.matrix() * &sol.theta;
        for (p, d) in predicted.iter().zip(&data) {
            prop_assert!((p - d).abs() < 1e-11 * (1.0 + d.abs()));
        }
        prop_assert!((sol.objective - 0.5 * sol.lambda.norm_squared()).abs() < 1e-15);
    }

    #[test]
    fn nodal_constraint_force_matches_the_green_function(s in spec(), elements in 2usize..64, node in 1usize..64, eps in 0.3..2.0f64, case in prop::sample::select(CaseKind::ALL.to_vec())) {
        let mesh = Mesh1D::uniform(elements).unwrap();
        let beta = mesh.nodes()[1 + node % elements];
        let system = build_case_system(case, &s, &mesh).unwrap();
        let design = ExperimentDesign::for_mesh(vec![beta], &mesh).unwrap();
        let data = DataVector::new(vec![common::bar(s.k, s.b, s.p, beta)]);
        let lambda = solve_constrained(&system, &[eps], &design, &data).unwrap().lambda[0];
        let oracle = common::oracle_lambda(case, &s, eps, beta);
        prop_assert!((lambda - oracle).abs() < 1e-9 * oracle.abs().max(1.0), "{lambda} vs {oracle}");
    }
}

#[test]
fn measuring_on_the_dirichlet_node_is_degenerate() {
    let mesh = Mesh1D::uniform(8).unwrap();
    let s = ModelProblemSpec::new(1.0, 1.0, 1.0).unwrap();
    let system = build_case_system(CaseKind::ParameterizedSource, &s, &mesh).unwrap();
    assert!(ExperimentDesign::for_mesh(vec![0.0], &mesh).is_err());
    let design = ExperimentDesign::unchecked(vec![0.0]).unwrap();
    let result = solve_constrained(&system, &[1.0], &design, &DataVector::new(vec![0.0]));
    assert!(matches!(result, Err(ecfm_oed::Error::DegenerateDesign(_))), "{result:?}");
}

#[test]
fn invalid_meshes_are_rejected() {
    assert!(Mesh1D::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    assert!(Mesh1D::new(vec![0.0, 0.7, 0.4, 1.0]).is_err());
    assert!(Mesh1D::new(vec![0.1, 1.0]).is_err());
    assert!(Mesh1D::uniform(0).is_err());
}
