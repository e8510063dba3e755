use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{AffineParameterizedSystem, AssembledSystem};

/// `dtheta/deps_a` of the unconstrained state, from `K S_a = F_a - K_a theta` on the
/// free DOFs. Returned on all nodes (zero on Dirichlet nodes).
pub fn state_sensitivity(
    system: &AffineParameterizedSystem,
    assembled: &AssembledSystem,
    theta: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if theta.len() != system.mesh().node_count() {
        return Err(Error::Dimension("state must be given on all nodes".into()));
    }
    let theta_free = system.restrict(theta);
    (0..system.parameter_count())
        .map(|a| {
            let rhs = system.load_term_free(a) - system.stiffness_term_free(a) * &theta_free;
            Ok(system.expand_homogeneous(&assembled.solve(&rhs)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{CaseKind, ModelProblemSpec};
    use crate::fem::{build_case_system, Mesh1D};

    #[test]
    fn matches_difference_quotient() {
        let mesh = Mesh1D::uniform(12).unwrap();
        let spec = ModelProblemSpec::new(1.5, 0.8, 0.3).unwrap();
        for case in CaseKind::ALL {
            let sys = build_case_system(case, &spec, &mesh).unwrap();
            let eps = 1.7;
            let theta = sys.forward_solve(&[eps]).unwrap();
            let s = state_sensitivity(&sys, &sys.assemble(&[eps]).unwrap(), &theta).unwrap();
            let h = 1e-5;
            let fd = (sys.forward_solve(&[eps + h]).unwrap() - sys.forward_solve(&[eps - h]).unwrap()) / (2.0 * h);
            assert!((&s[0] - fd).amax() < 1e-8, "{case:?}");
        }
    }
}
