//! Derivatives of the solution of `D(eps, beta) y = Q(eps, beta)` up to
//! `d3y / deps_a deps_g dbeta_K`, all obtained from one factorization of `D`:
//!
//! ```text
//! D y_a   = Q_a   - D_a y
//! D y_K   = Q_K   - D_K y
//! D y_ag  = Q_ag  - D_ag y  - D_a y_g  - D_g y_a
//! D y_aK  = Q_aK  - D_aK y  - D_a y_K  - D_K y_a
//! D y_agK = Q_agK - D_agK y - D_ag y_K - D_aK y_g - D_gK y_a
//!                 - D_a y_gK - D_g y_aK - D_K y_ag
//! ```
//!
//! Partials that vanish are stored as `None`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{AffineParameterizedSystem, MeasurementOperator};
use crate::linalg::FactoredMatrix;
use crate::solver::DataVector;

pub type Block = Option<DMatrix<f64>>;
pub type RhsBlock = Option<DVector<f64>>;

/// Partials of `D` and `Q` with respect to the model parameters `eps` (index `a`, `g`)
/// and the controls `beta` (index `K`).
#[derive(Debug, Clone)]
pub struct SystemDerivatives {
    pub d_eps: Vec<Block>,
    pub d_beta: Vec<Block>,
    pub d_eps_eps: Vec<Vec<Block>>,
    pub d_eps_beta: Vec<Vec<Block>>,
    pub d_eps_eps_beta: Vec<Vec<Vec<Block>>>,
    pub q_eps: Vec<RhsBlock>,
    pub q_beta: Vec<RhsBlock>,
    pub q_eps_eps: Vec<Vec<RhsBlock>>,
    pub q_eps_beta: Vec<Vec<RhsBlock>>,
    pub q_eps_eps_beta: Vec<Vec<Vec<RhsBlock>>>,
}

#[derive(Debug, Clone)]
pub struct SolutionDerivatives {
    pub y_eps: Vec<DVector<f64>>,
    pub y_beta: Vec<DVector<f64>>,
    pub y_eps_eps: Vec<Vec<DVector<f64>>>,
    pub y_eps_beta: Vec<Vec<DVector<f64>>>,
    pub y_eps_eps_beta: Vec<Vec<Vec<DVector<f64>>>>,
}

/// Worst relative residual of each linear relation, in cascade order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeResiduals {
    pub eps: f64,
    pub beta: f64,
    pub eps_eps: f64,
    pub eps_beta: f64,
    pub eps_eps_beta: f64,
}

impl CascadeResiduals {
    pub fn max(&self) -> f64 {
        [self.eps, self.beta, self.eps_eps, self.eps_beta, self.eps_eps_beta].into_iter().fold(0.0, f64::max)
    }
}

impl SystemDerivatives {
    /// All partials zero.
    pub fn zeros(n_eps: usize, n_beta: usize) -> Self {
        Self {
            d_eps: vec![None; n_eps],
            d_beta: vec![None; n_beta],
            d_eps_eps: vec![vec![None; n_eps]; n_eps],
            d_eps_beta: vec![vec![None; n_beta]; n_eps],
            d_eps_eps_beta: vec![vec![vec![None; n_beta]; n_eps]; n_eps],
            q_eps: vec![None; n_eps],
            q_beta: vec![None; n_beta],
            q_eps_eps: vec![vec![None; n_eps]; n_eps],
            q_eps_beta: vec![vec![None; n_beta]; n_eps],
            q_eps_eps_beta: vec![vec![vec![None; n_beta]; n_eps]; n_eps],
        }
    }

    pub fn eps_count(&self) -> usize {
        self.d_eps.len()
    }

    pub fn beta_count(&self) -> usize {
        self.d_beta.len()
    }

    /// Partials of the saddle system `[[-K, M^T], [M, 0]] y = [-F; V - M_d u_d]`.
    ///
    /// `K` and `F` are affine in `eps`, and `M` and the data depend on `beta` only, so
    /// every second and third partial vanishes and only
    ///
    /// ```text
    /// D_a = [[-K_a, 0], [0, 0]]            Q_a = [-(F_a - K_a,fd u_d); 0]
    /// D_K = [[0, m_K^T], [m_K, 0]]         Q_K = [0; dV/dbeta_K - m_K,d u_d]
    /// ```
    ///
    /// remain, with `m_K = dM/dbeta_K` (nonzero in row `K` only). Without
    /// `with_controls` only the `eps` partials are built.
    pub fn for_saddle(
        system: &AffineParameterizedSystem,
        measurement: &MeasurementOperator,
        data: &DataVector,
        with_controls: bool,
    ) -> Result<Self> {
        let n_eps = system.parameter_count();
        let c = measurement.measurement_count();
        if data.len() != c {
            return Err(Error::Dimension(format!("{} data values for {c} measurements", data.len())));
        }
        let n_free = system.free_dofs().len();
        let dim = n_free + c;
        let mut out = Self::zeros(n_eps, if with_controls { c } else { 0 });
        for a in 0..n_eps {
            if system.stiffness_depends_on(a) {
                let mut d = DMatrix::zeros(dim, dim);
                d.view_mut((0, 0), (n_free, n_free)).copy_from(&(-system.stiffness_term_free(a)));
                out.d_eps[a] = Some(d);
            }
            let load = system.load_term_free(a);
            if load.amax() > 0.0 {
                let mut q = DVector::zeros(dim);
                q.rows_mut(0, n_free).copy_from(&(-load));
                out.q_eps[a] = Some(q);
            }
        }
        if !with_controls {
            return Ok(out);
        }
        let slopes_free = measurement.slopes().select_columns(system.free_dofs());
        let lift = measurement.slopes() * system.dirichlet_field();
        for k in 0..c {
            let mut d = DMatrix::zeros(dim, dim);
            for j in 0..n_free {
                d[(n_free + k, j)] = slopes_free[(k, j)];
                d[(j, n_free + k)] = slopes_free[(k, j)];
            }
            out.d_beta[k] = Some(d);
            let dv = data.slopes().map_or(0.0, |s| s[k]) - lift[k];
            if dv != 0.0 {
                let mut q = DVector::zeros(dim);
                q[n_free + k] = dv;
                out.q_beta[k] = Some(q);
            }
        }
        Ok(out)
    }

    fn check(&self, dim: usize) -> Result<()> {
        let (n_eps, n_beta) = (self.eps_count(), self.beta_count());
        let shape_ok = self.d_eps_eps.len() == n_eps
            && self.d_eps_eps.iter().all(|r| r.len() == n_eps)
            && self.d_eps_beta.len() == n_eps
            && self.d_eps_beta.iter().all(|r| r.len() == n_beta)
            && self.d_eps_eps_beta.len() == n_eps
            && self.d_eps_eps_beta.iter().all(|r| r.len() == n_eps && r.iter().all(|s| s.len() == n_beta))
            && self.q_eps.len() == n_eps
            && self.q_beta.len() == n_beta
            && self.q_eps_eps.len() == n_eps
            && self.q_eps_eps.iter().all(|r| r.len() == n_eps)
            && self.q_eps_beta.len() == n_eps
            && self.q_eps_beta.iter().all(|r| r.len() == n_beta)
            && self.q_eps_eps_beta.len() == n_eps
            && self.q_eps_eps_beta.iter().all(|r| r.len() == n_eps && r.iter().all(|s| s.len() == n_beta));
        if !shape_ok {
            return Err(Error::Dimension("partial derivative tables have inconsistent index ranges".into()));
        }
        let mats = self
            .d_eps
            .iter()
            .chain(&self.d_beta)
            .chain(self.d_eps_eps.iter().flatten())
            .chain(self.d_eps_beta.iter().flatten())
            .chain(self.d_eps_eps_beta.iter().flatten().flatten());
        if mats.flatten().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::Dimension(format!("partials of D must be {dim} x {dim}")));
        }
        let vecs = self
            .q_eps
            .iter()
            .chain(&self.q_beta)
            .chain(self.q_eps_eps.iter().flatten())
            .chain(self.q_eps_beta.iter().flatten())
            .chain(self.q_eps_eps_beta.iter().flatten().flatten());
        if vecs.flatten().any(|v| v.len() != dim) {
            return Err(Error::Dimension(format!("partials of Q must have length {dim}")));
        }
        Ok(())
    }
}

/// `rhs - block * v`, skipping zero blocks.
fn subtract(rhs: &mut DVector<f64>, block: &Block, v: &DVector<f64>) {
    if let Some(m) = block {
        rhs.gemv(-1.0, m, v, 1.0);
    }
}

fn start(q: &RhsBlock, dim: usize) -> DVector<f64> {
    q.clone().unwrap_or_else(|| DVector::zeros(dim))
}

struct Rhs<'a> {
    p: &'a SystemDerivatives,
    y: &'a DVector<f64>,
}

impl Rhs<'_> {
    fn eps(&self, a: usize) -> DVector<f64> {
        let mut r = start(&self.p.q_eps[a], self.y.len());
        subtract(&mut r, &self.p.d_eps[a], self.y);
        r
    }

    fn beta(&self, k: usize) -> DVector<f64> {
        let mut r = start(&self.p.q_beta[k], self.y.len());
        subtract(&mut r, &self.p.d_beta[k], self.y);
        r
    }

    fn eps_eps(&self, s: &SolutionDerivatives, a: usize, g: usize) -> DVector<f64> {
        let p = self.p;
        let mut r = start(&p.q_eps_eps[a][g], self.y.len());
        subtract(&mut r, &p.d_eps_eps[a][g], self.y);
        subtract(&mut r, &p.d_eps[a], &s.y_eps[g]);
        subtract(&mut r, &p.d_eps[g], &s.y_eps[a]);
        r
    }

    fn eps_beta(&self, s: &SolutionDerivatives, a: usize, k: usize) -> DVector<f64> {
        let p = self.p;
        let mut r = start(&p.q_eps_beta[a][k], self.y.len());
        subtract(&mut r, &p.d_eps_beta[a][k], self.y);
        subtract(&mut r, &p.d_eps[a], &s.y_beta[k]);
        subtract(&mut r, &p.d_beta[k], &s.y_eps[a]);
        r
    }

    fn eps_eps_beta(&self, s: &SolutionDerivatives, a: usize, g: usize, k: usize) -> DVector<f64> {
        let p = self.p;
        let mut r = start(&p.q_eps_eps_beta[a][g][k], self.y.len());
        subtract(&mut r, &p.d_eps_eps_beta[a][g][k], self.y);
        subtract(&mut r, &p.d_eps_eps[a][g], &s.y_beta[k]);
        subtract(&mut r, &p.d_eps_beta[a][k], &s.y_eps[g]);
        subtract(&mut r, &p.d_eps_beta[g][k], &s.y_eps[a]);
        subtract(&mut r, &p.d_eps[a], &s.y_eps_beta[g][k]);
        subtract(&mut r, &p.d_eps[g], &s.y_eps_beta[a][k]);
        subtract(&mut r, &p.d_beta[k], &s.y_eps_eps[a][g]);
        r
    }
}

/// Solve the five derivative systems in dependency order, reusing the factorization of `D`.
pub fn solve_sensitivity_cascade(
    partials: &SystemDerivatives,
    factored: &FactoredMatrix,
    y: &DVector<f64>,
) -> Result<SolutionDerivatives> {
    let dim = factored.dim();
    if y.len() != dim {
        return Err(Error::Dimension(format!("solution has length {}, D is {dim} x {dim}", y.len())));
    }
    partials.check(dim)?;
    let (n_eps, n_beta) = (partials.eps_count(), partials.beta_count());
    let rhs = Rhs { p: partials, y };
    let mut s = SolutionDerivatives {
        y_eps: (0..n_eps).map(|a| factored.solve(&rhs.eps(a))).collect::<Result<_>>()?,
        y_beta: (0..n_beta).map(|k| factored.solve(&rhs.beta(k))).collect::<Result<_>>()?,
        y_eps_eps: Vec::new(),
        y_eps_beta: Vec::new(),
        y_eps_eps_beta: Vec::new(),
    };
    // second derivatives are symmetric in (a, g): solve the upper triangle and mirror
    let mut eps_eps = vec![vec![DVector::zeros(dim); n_eps]; n_eps];
    for a in 0..n_eps {
        for g in a..n_eps {
            let v = factored.solve(&rhs.eps_eps(&s, a, g))?;
            eps_eps[g][a] = v.clone();
            eps_eps[a][g] = v;
        }
    }
    s.y_eps_eps = eps_eps;
    s.y_eps_beta = (0..n_eps)
        .map(|a| (0..n_beta).map(|k| factored.solve(&rhs.eps_beta(&s, a, k))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut third = vec![vec![vec![DVector::zeros(dim); n_beta]; n_eps]; n_eps];
    for a in 0..n_eps {
        for g in a..n_eps {
            for k in 0..n_beta {
                let v = factored.solve(&rhs.eps_eps_beta(&s, a, g, k))?;
                third[g][a][k] = v.clone();
                third[a][g][k] = v;
            }
        }
    }
    s.y_eps_eps_beta = third;
    Ok(s)
}

fn relative_residual(d: &DMatrix<f64>, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    let dx = d * x;
    let r = (&dx - rhs).amax();
    if r == 0.0 {
        return 0.0;
    }
    r / dx.amax().max(rhs.amax()).max(f64::MIN_POSITIVE)
}

/// Substitute the computed derivatives back into every relation (including the
/// mirrored entries the cascade did not solve for directly).
pub fn cascade_residuals(
    partials: &SystemDerivatives,
    d: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &SolutionDerivatives,
) -> CascadeResiduals {
    let rhs = Rhs { p: partials, y };
    let (n_eps, n_beta) = (partials.eps_count(), partials.beta_count());
    let mut out = CascadeResiduals { eps: 0.0, beta: 0.0, eps_eps: 0.0, eps_beta: 0.0, eps_eps_beta: 0.0 };
    for a in 0..n_eps {
        out.eps = out.eps.max(relative_residual(d, &s.y_eps[a], &rhs.eps(a)));
        for g in 0..n_eps {
            out.eps_eps = out.eps_eps.max(relative_residual(d, &s.y_eps_eps[a][g], &rhs.eps_eps(s, a, g)));
            for k in 0..n_beta {
                let r = relative_residual(d, &s.y_eps_eps_beta[a][g][k], &rhs.eps_eps_beta(s, a, g, k));
                out.eps_eps_beta = out.eps_eps_beta.max(r);
            }
        }
        for k in 0..n_beta {
            out.eps_beta = out.eps_beta.max(relative_residual(d, &s.y_eps_beta[a][k], &rhs.eps_beta(s, a, k)));
        }
    }
    for k in 0..n_beta {
        out.beta = out.beta.max(relative_residual(d, &s.y_beta[k], &rhs.beta(k)));
    }
    out
}
