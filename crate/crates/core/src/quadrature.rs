//! Priors over model parameters and the quadrature rules used to average over them.
//!
//! One-dimensional rules come from the Golub-Welsch eigenvalue method: Gauss-Legendre
//! for uniform marginals, probabilists' Gauss-Hermite for Gaussian marginals, and a
//! single node for point masses. Multi-parameter rules are tensor products. Weights are
//! normalized to sum to one, so a rule computes an expectation directly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODES_PER_DIMENSION: usize = 16;

/// Marginal prior of a single model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, stddev: f64 },
    PointMass { value: f64 },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidPrior(format!(
                        "uniform prior needs finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            Marginal::Gaussian { mean, stddev } => {
                if !(mean.is_finite() && stddev.is_finite() && stddev > 0.0) {
                    return Err(Error::InvalidPrior(format!(
                        "gaussian prior needs finite mean and stddev > 0, got ({mean}, {stddev})"
                    )));
                }
            }
            Marginal::PointMass { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidPrior("point mass must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { lo, hi } => 0.5 * (lo + hi),
            Marginal::Gaussian { mean, .. } => mean,
            Marginal::PointMass { value } => value,
        }
    }

    /// Nodes and normalized weights of the `n`-point rule for this marginal.
    pub fn rule(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 {
            return Err(Error::InvalidPrior("quadrature needs at least one node".into()));
        }
        Ok(match *self {
            Marginal::Uniform { lo, hi } => {
                let (x, w) = gauss_legendre(n);
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                (x.iter().map(|t| mid + half * t).collect(), w)
            }
            Marginal::Gaussian { mean, stddev } => {
                let (x, w) = gauss_hermite(n);
                (x.iter().map(|t| mean + stddev * t).collect(), w)
            }
            Marginal::PointMass { value } => (vec![value], vec![1.0]),
        })
    }

    /// E[eps^-power]. Closed form for uniform and point-mass marginals; a 64-node
    /// Gauss-Hermite rule for Gaussian marginals, which must then stay away from zero.
    pub fn inverse_moment(&self, power: i32) -> Result<f64> {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if lo <= 0.0 {
                    return Err(Error::Domain(format!(
                        "E[eps^-{power}] diverges for a uniform prior touching zero ([{lo}, {hi}])"
                    )));
                }
                if power == 1 {
                    return Ok((hi / lo).ln() / (hi - lo));
                }
                let m = f64::from(1 - power);
                Ok((hi.powf(m) - lo.powf(m)) / (m * (hi - lo)))
            }
            Marginal::PointMass { value } => {
                if value == 0.0 {
                    return Err(Error::Domain("inverse moment of a point mass at zero".into()));
                }
                Ok(value.powi(-power))
            }
            Marginal::Gaussian { mean, stddev } => {
                let (x, w) = self.rule(64)?;
                if x.iter().any(|&e| e.signum() != mean.signum() || e == 0.0) {
                    return Err(Error::Domain(format!(
                        "gaussian prior N({mean}, {stddev}^2) puts quadrature mass across zero"
                    )));
                }
                Ok(x.iter().zip(&w).map(|(e, w)| w * e.powi(-power)).sum())
            }
        }
    }
}

/// Independent prior over all model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Marginal>", into = "Vec<Marginal>")]
pub struct PriorSpec {
    marginals: Vec<Marginal>,
}

impl TryFrom<Vec<Marginal>> for PriorSpec {
    type Error = Error;

    fn try_from(marginals: Vec<Marginal>) -> Result<Self> {
        Self::new(marginals)
    }
}

impl From<PriorSpec> for Vec<Marginal> {
    fn from(prior: PriorSpec) -> Self {
        prior.marginals
    }
}

impl PriorSpec {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidPrior("prior has no parameters".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Marginal::Uniform { lo, hi }])
    }

    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self> {
        Self::new(vec![Marginal::Gaussian { mean, stddev }])
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::new(vec![Marginal::PointMass { value }])
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn dimension(&self) -> usize {
        self.marginals.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::mean).collect()
    }

    /// The only marginal of a scalar prior.
    pub fn scalar(&self) -> Result<&Marginal> {
        match self.marginals.as_slice() {
            [m] => Ok(m),
            _ => Err(Error::Dimension(format!(
                "expected a scalar prior, got {} parameters",
                self.marginals.len()
            ))),
        }
    }

    /// A box that contains the bulk of the prior: the support for uniform marginals,
    /// mean +/- 8 stddev for Gaussian ones, the point itself for point masses.
    pub fn support_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.marginals
            .iter()
            .map(|m| match *m {
                Marginal::Uniform { lo, hi } => (lo, hi),
                Marginal::Gaussian { mean, stddev } => (mean - 8.0 * stddev, mean + 8.0 * stddev),
                Marginal::PointMass { value } => (value, value),
            })
            .unzip()
    }
}

/// Tensor-product rule over the parameter space. `weights` sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::Dimension("quadrature nodes and weights disagree".into()));
        }
        let dim = nodes[0].len();
        if nodes.iter().any(|n| n.len() != dim) {
            return Err(Error::Dimension("ragged quadrature nodes".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidPrior("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPrior(format!("quadrature weights sum to {total}, not 1")));
        }
        Ok(Self { nodes, weights })
    }

    /// `n` nodes per dimension (point masses always use one).
    pub fn for_prior(prior: &PriorSpec, n: usize) -> Result<Self> {
        let mut nodes = vec![Vec::new()];
        let mut weights = vec![1.0];
        for m in prior.marginals() {
            let (x, w) = m.rule(n)?;
            let mut next_nodes = Vec::with_capacity(nodes.len() * x.len());
            let mut next_weights = Vec::with_capacity(nodes.len() * x.len());
            for (node, weight) in nodes.iter().zip(&weights) {
                for (xi, wi) in x.iter().zip(&w) {
                    let mut p = node.clone();
                    p.push(*xi);
                    next_nodes.push(p);
                    next_weights.push(weight * wi);
                }
            }
            nodes = next_nodes;
            weights = next_weights;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.nodes.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Golub-Welsch: nodes are eigenvalues of the symmetric Jacobi matrix, weights are the
/// squared first eigenvector components (scaled by the total mass, here 1).
fn golub_welsch(off_diagonal: impl Fn(usize) -> f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = off_diagonal(k);
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // The rule is symmetric about zero; enforce it exactly.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

/// Gauss-Legendre nodes on [-1, 1] with weights normalized to sum to one.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(
        |k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        },
        n,
    )
}

/// Gauss-Hermite nodes for the standard normal density (probabilists' convention).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(|k| (k as f64).sqrt(), n)
}
