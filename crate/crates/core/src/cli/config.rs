use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytic::{CaseKind, Criterion, ModelProblemSpec};
use crate::error::{Error, Result};
use crate::fem::{ExperimentDesign, Mesh1D};
use crate::optimizer::DEFAULT_STARTS;
use crate::quadrature::{PriorSpec, DEFAULT_NODES_PER_DIMENSION};
use crate::solver::ParameterBounds;

/// One experiment, as read from a JSON file. See `configs/README.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseKind,
    pub spec: ModelProblemSpec,
    /// Number of elements of the uniform mesh on [0, 1].
    pub mesh: usize,
    pub prior: PriorSpec,
    /// Quadrature nodes per parameter.
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    #[serde(default)]
    pub design: DesignConfig,
    /// Criterion to optimize in `design`; both when absent.
    #[serde(default)]
    pub criterion: Option<Criterion>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Model parameters for `forward`; the consistent value of the case when absent.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub inverse: InverseConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub positions: Vec<f64>,
    /// Per-position bounds; `[h, 1]` for every position when absent.
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { positions: vec![0.5], bounds: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Grid points; the mesh nodes in `[h, 1]` when absent.
    #[serde(default)]
    pub resolution: Option<usize>,
}

/// Criterion evaluator used by the design optimizer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Closed forms for one measurement, finite elements otherwise.
    #[default]
    Auto,
    /// Closed forms; one measurement only.
    Analytic,
    /// Finite elements. Between mesh nodes the interpolated ECFM criterion deviates
    /// from the exact one, so the ascent may settle off the nodes.
    Fem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub evaluator: Evaluator,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: DEFAULT_STARTS, evaluator: Evaluator::Auto }
    }
}

impl OptimizerConfig {
    /// Whether the closed forms evaluate a design with `measurements` positions.
    pub fn use_analytic(&self, measurements: usize) -> bool {
        match self.evaluator {
            Evaluator::Auto => measurements == 1,
            Evaluator::Analytic => true,
            Evaluator::Fem => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InverseMethod {
    Standard,
    Ecfm,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Noiseless values of the true solution at the design positions.
    Analytic,
    /// A CSV file with a `value` column, one row per measurement.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    #[serde(default = "default_method")]
    pub method: InverseMethod,
    #[serde(default = "default_data")]
    pub data: DataSource,
    /// Starting point; the prior mean when absent.
    #[serde(default)]
    pub eps0: Option<Vec<f64>>,
    /// Search box; the prior support box when absent.
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self { method: default_method(), data: default_data(), eps0: None, bounds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoundsConfig {
    pub fn to_bounds(&self) -> Result<ParameterBounds> {
        ParameterBounds::new(self.lo.clone(), self.hi.clone())
    }
}

/// Additive, independent, zero-mean Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        let model = Self { sigma };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Search box of the estimator. Defaults to the prior support widened 100 times its
    /// width on each side, kept positive for the material case.
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: default_sigma(), trials: default_trials(), bounds: None }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.sigma)
    }
}

fn default_quadrature() -> usize {
    DEFAULT_NODES_PER_DIMENSION
}

fn default_starts() -> usize {
    DEFAULT_STARTS
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_method() -> InverseMethod {
    InverseMethod::Both
}

fn default_data() -> DataSource {
    DataSource::Analytic
}

fn default_sigma() -> f64 {
    0.01
}

fn default_trials() -> usize {
    100
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without solving anything. Every failure is
    /// reported as a configuration error.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate().map_err(config_error)?;
        let mesh = self.mesh().map_err(config_error)?;
        let prior = PriorSpec::new(self.prior.marginals().to_vec()).map_err(config_error)?;
        if prior.dimension() != 1 {
            return Err(Error::Config(format!(
                "every case has one model parameter, the prior has {}",
                prior.dimension()
            )));
        }
        if self.quadrature == 0 {
            return Err(Error::Config("quadrature needs at least one node".into()));
        }
        self.design(&mesh).map_err(config_error)?;
        if let Some(r) = self.sweep.resolution {
            if r < 2 {
                return Err(Error::Config(format!("sweep resolution must be at least 2, got {r}")));
            }
        }
        if self.optimizer.starts == 0 {
            return Err(Error::Config("the optimizer needs at least one start".into()));
        }
        if self.optimizer.evaluator == Evaluator::Analytic && self.design.positions.len() != 1 {
            return Err(Error::Config("the analytic evaluator handles a single measurement".into()));
        }
        if let Some(eps) = &self.eps {
            check_parameter_count("eps", eps.len())?;
        }
        if let Some(eps0) = &self.inverse.eps0 {
            check_parameter_count("inverse.eps0", eps0.len())?;
        }
        for b in [&self.inverse.bounds, &self.noise.bounds].into_iter().flatten() {
            b.to_bounds().map_err(config_error)?;
            check_parameter_count("bounds", b.lo.len())?;
        }
        self.noise.model()?;
        if self.noise.trials == 0 {
            return Err(Error::Config("the noise study needs at least one trial".into()));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh1D> {
        Mesh1D::uniform(self.mesh)
    }

    pub fn design(&self, mesh: &Mesh1D) -> Result<ExperimentDesign> {
        let positions = self.design.positions.clone();
        match &self.design.bounds {
            Some(bounds) => ExperimentDesign::new(positions, bounds.clone(), mesh.min_element_width()),
            None => ExperimentDesign::for_mesh(positions, mesh),
        }
    }

    /// Criteria to optimize in `design`.
    pub fn criteria(&self) -> Vec<Criterion> {
        match self.criterion {
            Some(c) => vec![c],
            None => vec![Criterion::Fisher, Criterion::Ecfm],
        }
    }

    pub fn inverse_bounds(&self) -> Result<ParameterBounds> {
        match &self.inverse.bounds {
            Some(b) => b.to_bounds(),
            None => {
                let (lo, hi) = self.prior.support_box();
                ParameterBounds::new(lo, hi)
            }
        }
    }

    pub fn noise_bounds(&self) -> Result<ParameterBounds> {
        if let Some(b) = &self.noise.bounds {
            return b.to_bounds();
        }
        let (lo, hi) = self.prior.support_box();
        let (mut wide_lo, mut wide_hi) = (Vec::new(), Vec::new());
        for (l, h) in lo.into_iter().zip(hi) {
            let width = (h - l).max(1e-3 * l.abs().max(h.abs()).max(1.0));
            let mut new_lo = l - 100.0 * width;
            if self.case == CaseKind::ParameterizedMaterial {
                new_lo = new_lo.max(1e-3 * l);
            }
            wide_lo.push(new_lo);
            wide_hi.push(h + 100.0 * width);
        }
        ParameterBounds::new(wide_lo, wide_hi)
    }
}

fn check_parameter_count(what: &str, n: usize) -> Result<()> {
    if n != 1 {
        return Err(Error::Config(format!("{what} needs exactly one value, got {n}")));
    }
    Ok(())
}
