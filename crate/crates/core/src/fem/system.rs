use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::analytic::{CaseKind, ModelProblemSpec};
use crate::error::{Error, Result};
use crate::fem::mesh::Mesh1D;

/// Stiffness matrix of `-(c(x) u')'` with linear elements and a per-element coefficient.
pub fn element_stiffness(mesh: &Mesh1D, coefficient: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let n = mesh.node_count();
    let mut k = DMatrix::zeros(n, n);
    for e in 0..mesh.element_count() {
        let c = coefficient(e) / mesh.element_width(e);
        k[(e, e)] += c;
        k[(e + 1, e + 1)] += c;
        k[(e, e + 1)] -= c;
        k[(e + 1, e)] -= c;
    }
    k
}

pub fn unit_stiffness(mesh: &Mesh1D) -> DMatrix<f64> {
    element_stiffness(mesh, |_| 1.0)
}

/// Consistent load of a unit distributed source: `integral of N_j dx`.
pub fn unit_distributed_load(mesh: &Mesh1D) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.node_count());
    for e in 0..mesh.element_count() {
        let half = 0.5 * mesh.element_width(e);
        f[e] += half;
        f[e + 1] += half;
    }
    f
}

/// Consistent load of a distributed source `s(x)`, integrated with 3-point Gauss rules.
pub fn distributed_load(mesh: &Mesh1D, source: impl Fn(f64) -> f64) -> DVector<f64> {
    const POINTS: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut f = DVector::zeros(mesh.node_count());
    for e in 0..mesh.element_count() {
        let (x0, h) = (mesh.nodes()[e], mesh.element_width(e));
        for (xi, w) in POINTS.iter().zip(WEIGHTS) {
            let t = 0.5 * (xi + 1.0);
            let s = source(x0 + t * h) * 0.5 * h * w;
            f[e] += (1.0 - t) * s;
            f[e + 1] += t * s;
        }
    }
    f
}

/// Unit nodal load at the last node (traction at x = 1).
pub fn end_load(mesh: &Mesh1D) -> DVector<f64> {
    let mut f = DVector::zeros(mesh.node_count());
    f[mesh.node_count() - 1] = 1.0;
    f
}

/// Discretized linear system whose operator and load are affine in the model
/// parameters: `K(eps) = K0 + sum_a eps_a K_a`, `F(eps) = F0 + sum_a eps_a F_a`.
/// Matrices live on all mesh nodes; Dirichlet nodes are eliminated on assembly.
#[derive(Debug, Clone)]
pub struct AffineParameterizedSystem {
    mesh: Mesh1D,
    k0: DMatrix<f64>,
    k_terms: Vec<DMatrix<f64>>,
    f0: DVector<f64>,
    f_terms: Vec<DVector<f64>>,
    dirichlet: Vec<(usize, f64)>,
    free: Vec<usize>,
}

/// Reduced stiffness and load on the free degrees of freedom, with the Cholesky factor
/// that proved `k` positive definite.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub k: DMatrix<f64>,
    pub f: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl AssembledSystem {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= 1e-12 * scale
}

impl AffineParameterizedSystem {
    pub fn new(
        mesh: Mesh1D,
        k0: DMatrix<f64>,
        k_terms: Vec<DMatrix<f64>>,
        f0: DVector<f64>,
        f_terms: Vec<DVector<f64>>,
        dirichlet: Vec<(usize, f64)>,
    ) -> Result<Self> {
        let n = mesh.node_count();
        let square = |m: &DMatrix<f64>| m.nrows() == n && m.ncols() == n;
        if !square(&k0) || !k_terms.iter().all(square) {
            return Err(Error::Dimension(format!("stiffness matrices must be {n} x {n}")));
        }
        if f0.len() != n || f_terms.iter().any(|f| f.len() != n) {
            return Err(Error::Dimension(format!("load vectors must have length {n}")));
        }
        if !is_symmetric(&k0) || !k_terms.iter().all(is_symmetric) {
            return Err(Error::Domain("stiffness matrices must be symmetric".into()));
        }
        let n_params = k_terms.len().max(f_terms.len());
        let mut k_terms = k_terms;
        let mut f_terms = f_terms;
        k_terms.resize(n_params, DMatrix::zeros(n, n));
        f_terms.resize(n_params, DVector::zeros(n));
        let mut dirichlet = dirichlet;
        dirichlet.sort_by_key(|d| d.0);
        dirichlet.dedup_by_key(|d| d.0);
        if dirichlet.iter().any(|&(i, v)| i >= n || !v.is_finite()) {
            return Err(Error::Domain("Dirichlet node out of range or value not finite".into()));
        }
        let free: Vec<usize> = (0..n).filter(|i| dirichlet.iter().all(|d| d.0 != *i)).collect();
        if free.is_empty() {
            return Err(Error::Domain("every node is constrained".into()));
        }
        Ok(Self { mesh, k0, k_terms, f0, f_terms, dirichlet, free })
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn parameter_count(&self) -> usize {
        self.k_terms.len()
    }

    pub fn k0(&self) -> &DMatrix<f64> {
        &self.k0
    }

    pub fn k_terms(&self) -> &[DMatrix<f64>] {
        &self.k_terms
    }

    pub fn f0(&self) -> &DVector<f64> {
        &self.f0
    }

    pub fn f_terms(&self) -> &[DVector<f64>] {
        &self.f_terms
    }

    pub fn dirichlet(&self) -> &[(usize, f64)] {
        &self.dirichlet
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    /// True when K depends on the parameter `a` (the operator, not only the load).
    pub fn stiffness_depends_on(&self, a: usize) -> bool {
        self.k_terms[a].amax() > 0.0
    }

    fn check_eps(&self, eps: &[f64]) -> Result<()> {
        if eps.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "expected {} model parameters, got {}",
                self.parameter_count(),
                eps.len()
            )));
        }
        if eps.iter().any(|e| !e.is_finite()) {
            return Err(Error::Domain(format!("non-finite model parameters {eps:?}")));
        }
        Ok(())
    }

    /// Full-node operator `K(eps)`.
    pub fn stiffness(&self, eps: &[f64]) -> Result<DMatrix<f64>> {
        self.check_eps(eps)?;
        let mut k = self.k0.clone();
        for (e, ka) in eps.iter().zip(&self.k_terms) {
            k += ka * *e;
        }
        Ok(k)
    }

    /// Full-node load `F(eps)`.
    pub fn load(&self, eps: &[f64]) -> Result<DVector<f64>> {
        self.check_eps(eps)?;
        let mut f = self.f0.clone();
        for (e, fa) in eps.iter().zip(&self.f_terms) {
            f += fa * *e;
        }
        Ok(f)
    }

    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }

    pub fn restrict_matrix(&self, full: &DMatrix<f64>) -> DMatrix<f64> {
        full.select_rows(&self.free).select_columns(&self.free)
    }

    /// Insert free values and the prescribed Dirichlet values into a full nodal vector.
    pub fn expand(&self, free_values: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.mesh.node_count());
        for (v, &i) in free_values.iter().zip(&self.free) {
            full[i] = *v;
        }
        for &(i, v) in &self.dirichlet {
            full[i] = v;
        }
        full
    }

    /// Same as [`expand`](Self::expand) but with zero Dirichlet values, for
    /// derivatives of the state.
    pub fn expand_homogeneous(&self, free_values: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.mesh.node_count());
        for (v, &i) in free_values.iter().zip(&self.free) {
            full[i] = *v;
        }
        full
    }

    fn dirichlet_values(&self) -> DVector<f64> {
        let mut u = DVector::zeros(self.mesh.node_count());
        for &(i, v) in &self.dirichlet {
            u[i] = v;
        }
        u
    }

    /// `F_f - K_fd u_d` for an arbitrary full operator/load pair.
    fn lifted_load(&self, k: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
        let lifted = f - k * self.dirichlet_values();
        self.restrict(&lifted)
    }

    /// Lifted load `F_f(eps) - K_fd(eps) u_d` on the free DOFs.
    pub fn reduced_load(&self, eps: &[f64]) -> Result<DVector<f64>> {
        Ok(self.lifted_load(&self.stiffness(eps)?, &self.load(eps)?))
    }

    /// Prescribed values on all nodes, zero on the free ones.
    pub fn dirichlet_field(&self) -> DVector<f64> {
        self.dirichlet_values()
    }

    /// Reduced `dK/deps_a` on the free DOFs.
    pub fn stiffness_term_free(&self, a: usize) -> DMatrix<f64> {
        self.restrict_matrix(&self.k_terms[a])
    }

    /// Reduced `dF/deps_a`, including the lifting of the Dirichlet values.
    pub fn load_term_free(&self, a: usize) -> DVector<f64> {
        self.lifted_load(&self.k_terms[a], &self.f_terms[a])
    }

    /// Reduced operator and lifted load at `eps`. Fails when the reduced operator is not
    /// symmetric positive definite, which marks `eps` as outside the valid range.
    pub fn assemble(&self, eps: &[f64]) -> Result<AssembledSystem> {
        let k_full = self.stiffness(eps)?;
        let f_full = self.load(eps)?;
        let k = self.restrict_matrix(&k_full);
        let f = self.lifted_load(&k_full, &f_full);
        let chol = Cholesky::new(k.clone()).ok_or_else(|| Error::Assembly {
            eps: eps.to_vec(),
            reason: "reduced operator is not positive definite".into(),
        })?;
        // Cholesky accepts matrices that are only numerically semidefinite; reject those
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
        if !(lo > 1e-8 * hi) {
            return Err(Error::Assembly {
                eps: eps.to_vec(),
                reason: format!("reduced operator is numerically singular (pivot ratio {:e})", lo / hi),
            });
        }
        Ok(AssembledSystem { k, f, chol })
    }

    /// Nodal solution of `K(eps) theta = F(eps)` with Dirichlet values re-inserted.
    pub fn forward_solve(&self, eps: &[f64]) -> Result<DVector<f64>> {
        let assembled = self.assemble(eps)?;
        let theta = assembled.solve(&assembled.f);
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite forward solution at eps = {eps:?}")));
        }
        Ok(self.expand(&theta))
    }
}

/// Discretization of one of the four single-parameter model problems on `mesh`.
///
/// The weak form of `-(c w')' = s` with `w(0) = 0` and `c w'(1) = t` puts the traction
/// `t` on the last node, independent of `c`.
pub fn build_case_system(
    case: CaseKind,
    spec: &ModelProblemSpec,
    mesh: &Mesh1D,
) -> Result<AffineParameterizedSystem> {
    spec.validate()?;
    let n = mesh.node_count();
    let unit_k = unit_stiffness(mesh);
    let unit_f = unit_distributed_load(mesh);
    let tip = end_load(mesh);
    let zero_k = DMatrix::zeros(n, n);
    let zero_f = DVector::zeros(n);
    let ModelProblemSpec { k, b, p } = *spec;
    let (k0, k_terms, f0, f_terms) = match case {
        CaseKind::ParameterizedBC => (&unit_k * k, vec![], &unit_f * b, vec![tip]),
        CaseKind::ParameterizedSource => (&unit_k * k, vec![], &tip * p, vec![unit_f]),
        CaseKind::ParameterizedMaterial => (zero_k, vec![unit_k], &unit_f * b + &tip * p, vec![]),
        CaseKind::MisspecifiedSource => (&unit_k * k, vec![], zero_f, vec![unit_f]),
    };
    AffineParameterizedSystem::new(mesh.clone(), k0, k_terms, f0, f_terms, vec![(0, 0.0)])
}

/// The true data-generating system (the boundary-condition model at `eps = p`).
pub fn true_nodal_solution(spec: &ModelProblemSpec, mesh: &Mesh1D) -> Result<DVector<f64>> {
    build_case_system(CaseKind::ParameterizedBC, spec, mesh)?.forward_solve(&[spec.p])
}
