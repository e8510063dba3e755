use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The reduced stiffness matrix is not positive definite at the given parameters.
    #[error("assembly failed at eps = {eps:?}: {reason}")]
    Assembly { eps: Vec<f64>, reason: String },

    /// The saddle-point matrix is singular, typically because two measurements
    /// coincide or a measurement sits on an eliminated Dirichlet node.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("minimum eigenvalue is not simple (mu = {mu:e}, relative gap = {relative_gap:e})")]
    DegenerateEigenvalue { mu: f64, relative_gap: f64 },

    #[error("degenerate problem: {0}")]
    DegenerateProblem(String),

    #[error("optimization did not converge after {iterations} iterations (last gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        trace: Vec<(Vec<f64>, f64)>,
    },

    #[error("quadrature node {index} (eps = {eps:?}) is infeasible: {source}")]
    InfeasibleNode {
        index: usize,
        eps: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    /// Finite element results disagree with the closed forms.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Io(_)
                | Error::InvalidMesh(_)
                | Error::InvalidDesign(_)
                | Error::InvalidPrior(_)
                | Error::Domain(_)
        )
    }
}
