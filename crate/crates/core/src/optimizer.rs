//! Maximization of a design criterion over box-bounded measurement positions: an
//! exhaustive grid sweep and a projected-gradient ascent with multi-start.

use log::warn;
use rayon::prelude::*;

use crate::analytic::{
    ecfm_design_objective, ecfm_design_objective_slope, fisher_design_objective, fisher_design_objective_slope,
    CaseKind, Criterion, ModelProblemSpec,
};
use crate::error::{Error, Result};
use crate::fem::ExperimentDesign;
use crate::oed::{OedProblem, ReferenceState};
use crate::quadrature::PriorSpec;

/// A criterion as a function of the measurement positions.
pub trait DesignObjective: Sync {
    fn bounds(&self) -> Vec<(f64, f64)>;

    fn value(&self, positions: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, positions: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn controls(&self) -> usize {
        self.bounds().len()
    }
}

/// Closed-form single-measurement criteria.
#[derive(Debug, Clone)]
pub struct AnalyticObjective {
    pub case: CaseKind,
    pub spec: ModelProblemSpec,
    pub prior: PriorSpec,
    pub criterion: Criterion,
    /// Admissible positions, inside `[0, 1]`.
    pub bounds: (f64, f64),
}

impl AnalyticObjective {
    /// Objective over the whole bar.
    pub fn new(case: CaseKind, spec: ModelProblemSpec, prior: PriorSpec, criterion: Criterion) -> Self {
        Self { case, spec, prior, criterion, bounds: (0.0, 1.0) }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidDesign(format!("bounds [{lo}, {hi}] are not inside [0, 1]")));
        }
        self.bounds = (lo, hi);
        Ok(self)
    }
}

impl DesignObjective for AnalyticObjective {
    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.bounds]
    }

    fn value(&self, positions: &[f64]) -> Result<f64> {
        let beta = single(positions)?;
        match self.criterion {
            Criterion::Ecfm => ecfm_design_objective(self.case, &self.spec, &self.prior, beta),
            Criterion::Fisher => fisher_design_objective(self.case, &self.spec, &self.prior, beta),
        }
    }

    fn value_and_gradient(&self, positions: &[f64]) -> Result<(f64, Vec<f64>)> {
        let beta = single(positions)?;
        let slope = match self.criterion {
            Criterion::Ecfm => ecfm_design_objective_slope(self.case, &self.spec, beta)?,
            Criterion::Fisher => fisher_design_objective_slope(self.case, &self.spec, &self.prior, beta)?,
        };
        Ok((self.value(positions)?, vec![slope]))
    }
}

fn single(positions: &[f64]) -> Result<f64> {
    match positions {
        [beta] => Ok(*beta),
        _ => Err(Error::Dimension(format!("expected one position, got {}", positions.len()))),
    }
}

/// Finite element criterion; the design template fixes the bounds and the minimum
/// separation of the positions.
#[derive(Debug, Clone)]
pub struct FemObjective<'a> {
    pub problem: &'a OedProblem,
    pub criterion: Criterion,
    pub reference: ReferenceState,
    pub template: ExperimentDesign,
}

impl DesignObjective for FemObjective<'_> {
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.template.bounds().to_vec()
    }

    fn value(&self, positions: &[f64]) -> Result<f64> {
        let design = self.template.with_positions(positions.to_vec())?;
        Ok(self.problem.criterion(self.criterion, &design, &self.reference)?.min_eig)
    }

    fn value_and_gradient(&self, positions: &[f64]) -> Result<(f64, Vec<f64>)> {
        let design = self.template.with_positions(positions.to_vec())?;
        let result = self.problem.criterion(self.criterion, &design, &self.reference)?;
        Ok((result.min_eig, result.grad_beta()?))
    }
}

pub const MAX_GRID_POINTS: usize = 1_000_000;
const ARGMAX_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Evaluated grid points in row-major order (last position varies fastest).
    pub points: Vec<(Vec<f64>, f64)>,
    /// Grid points where the criterion could not be evaluated.
    pub failures: Vec<(Vec<f64>, String)>,
    pub max: f64,
    /// Every grid point within `1e-10 max(1, |max|)` of the maximum.
    pub argmax: Vec<Vec<f64>>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Evaluate the criterion on a tensor grid with `resolution` points per position.
pub fn grid_sweep(objective: &dyn DesignObjective, resolution: usize) -> Result<SweepResult> {
    let bounds = objective.bounds();
    sweep_box(objective, &bounds, resolution)
}

fn sweep_box(objective: &dyn DesignObjective, bounds: &[(f64, f64)], resolution: usize) -> Result<SweepResult> {
    if resolution < 2 {
        return Err(Error::Config(format!("sweep resolution must be at least 2, got {resolution}")));
    }
    if bounds.is_empty() {
        return Err(Error::DegenerateProblem("a design without positions has nothing to sweep".into()));
    }
    let total = (resolution as f64).powi(bounds.len() as i32);
    if total > MAX_GRID_POINTS as f64 {
        return Err(Error::Config(format!("sweep would evaluate {total} points, more than {MAX_GRID_POINTS}")));
    }
    let axes: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| linspace(lo, hi, resolution)).collect();
    let grid: Vec<Vec<f64>> = (0..total as usize)
        .map(|mut index| {
            let mut point = vec![0.0; axes.len()];
            for (d, axis) in axes.iter().enumerate().rev() {
                point[d] = axis[index % resolution];
                index /= resolution;
            }
            point
        })
        .collect();
    let values: Vec<Result<f64>> = grid.par_iter().map(|p| objective.value(p)).collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (p, v) in grid.into_iter().zip(values) {
        match v {
            Ok(v) if v.is_finite() => points.push((p, v)),
            Ok(v) => failures.push((p, format!("non-finite value {v}"))),
            Err(e) => failures.push((p, e.to_string())),
        }
    }
    if !failures.is_empty() {
        warn!("{} of {} sweep points could not be evaluated; first: {:?}", failures.len(), total, failures[0]);
    }
    if points.is_empty() {
        return Err(Error::DegenerateProblem("no sweep point could be evaluated".into()));
    }
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = ARGMAX_TOLERANCE * max.abs().max(1.0);
    let argmax = points.iter().filter(|p| p.1 >= max - tol).map(|p| p.0.clone()).collect();
    Ok(SweepResult { points, failures, max, argmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Projected gradient below tolerance.
    Converged,
    MaxIterations,
    /// No step along the projected gradient increased the criterion.
    LineSearchStalled,
    /// Too many neighbourhood sweeps after degenerate eigenvalues.
    FallbackLimit,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::LineSearchStalled => "line_search_stalled",
            Termination::FallbackLimit => "fallback_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub positions: Vec<f64>,
    pub value: f64,
    /// `None` where the gradient was undefined and a neighbourhood sweep was used.
    pub gradient_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub best_positions: Vec<f64>,
    pub best_value: f64,
    pub trace: Vec<TraceEntry>,
    pub termination: Termination,
    pub iterations: usize,
    /// Number of neighbourhood sweeps used in place of a gradient step.
    pub fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub max_fallbacks: usize,
    /// Points per dimension of the neighbourhood sweep.
    pub fallback_resolution: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { gradient_tolerance: 1e-8, max_iterations: 200, max_fallbacks: 5, fallback_resolution: 5 }
    }
}

fn clamp(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
}

fn projected_ascent_gradient(x: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds)
        .map(|((x, g), (lo, hi))| if (*x <= *lo && *g < 0.0) || (*x >= *hi && *g > 0.0) { 0.0 } else { *g })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projected gradient ascent with Armijo backtracking. A degenerate smallest eigenvalue
/// at an iterate triggers a sweep of a shrinking box around it instead of a gradient step.
pub fn projected_gradient_ascent(
    objective: &dyn DesignObjective,
    start: &[f64],
    options: &AscentOptions,
) -> Result<OptimizationReport> {
    let bounds = objective.bounds();
    if start.len() != bounds.len() {
        return Err(Error::Dimension(format!("start has {} positions, the design {}", start.len(), bounds.len())));
    }
    let span = bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let mut x = clamp(start, &bounds);
    let mut fallbacks = 0;
    let mut radius = 0.1 * span;
    let mut step = 0.25 * span.max(f64::MIN_POSITIVE);
    let mut trace = Vec::new();
    let finish = |x: Vec<f64>, value, trace, termination, iterations, fallbacks| OptimizationReport {
        best_positions: x,
        best_value: value,
        trace,
        termination,
        iterations,
        fallbacks,
    };
    for iteration in 0..=options.max_iterations {
        let (value, gradient) = match objective.value_and_gradient(&x) {
            Ok(vg) => vg,
            Err(Error::DegenerateEigenvalue { .. }) => {
                let value = objective.value(&x)?;
                trace.push(TraceEntry { positions: x.clone(), value, gradient_norm: None });
                if fallbacks == options.max_fallbacks {
                    return Ok(finish(x, value, trace, Termination::FallbackLimit, iteration, fallbacks));
                }
                fallbacks += 1;
                let local: Vec<(f64, f64)> =
                    x.iter().zip(&bounds).map(|(v, (lo, hi))| ((v - radius).max(*lo), (v + radius).min(*hi))).collect();
                radius *= 0.5;
                let sweep = sweep_box(objective, &local, options.fallback_resolution)?;
                let best = sweep.points.iter().fold(None::<&(Vec<f64>, f64)>, |best, p| match best {
                    Some(b) if b.1 >= p.1 => Some(b),
                    _ => Some(p),
                });
                if let Some((p, v)) = best {
                    if *v > value {
                        x = p.clone();
                    }
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let pg = projected_ascent_gradient(&x, &gradient, &bounds);
        let pg_norm = norm(&pg);
        trace.push(TraceEntry { positions: x.clone(), value, gradient_norm: Some(pg_norm) });
        if pg_norm < options.gradient_tolerance {
            return Ok(finish(x, value, trace, Termination::Converged, iteration, fallbacks));
        }
        if iteration == options.max_iterations {
            return Ok(finish(x, value, trace, Termination::MaxIterations, iteration, fallbacks));
        }
        let scale = pg.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut t = step / scale;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = clamp(&x.iter().zip(&pg).map(|(x, g)| x + t * g).collect::<Vec<_>>(), &bounds);
            let moved: f64 = (0..x.len()).map(|i| gradient[i] * (trial[i] - x[i])).sum();
            if trial == x {
                break;
            }
            if let Ok(v) = objective.value(&trial) {
                if v >= value + 1e-4 * moved && v > value {
                    accepted = Some(trial);
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some(next) => {
                let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                step = (2.0 * moved).clamp(1e-12 * span.max(1.0), span);
                x = next;
            }
            None => return Ok(finish(x, value, trace, Termination::LineSearchStalled, iteration, fallbacks)),
        }
    }
    unreachable!("the loop returns on its last iteration")
}

/// Starting points spread over the bounds. With one position the starts are evenly
/// spaced and include both bounds; with `C` positions start `s` places position `i` at
/// fraction `(i + s / (n - 1)) / C` of its range.
pub fn start_points(bounds: &[(f64, f64)], starts: usize) -> Vec<Vec<f64>> {
    let c = bounds.len() as f64;
    (0..starts)
        .map(|s| {
            let phase = if starts == 1 { 0.5 } else { s as f64 / (starts - 1) as f64 };
            bounds
                .iter()
                .enumerate()
                .map(|(i, (lo, hi))| lo + (hi - lo) * (i as f64 + phase) / c)
                .collect()
        })
        .collect()
}

pub const DEFAULT_STARTS: usize = 8;

#[derive(Debug, Clone)]
pub struct MultiStartReport {
    pub best: OptimizationReport,
    pub runs: Vec<std::result::Result<OptimizationReport, String>>,
}

/// Run the ascent from every start and keep the best result. Ties are broken by the
/// lexicographically smallest positions, so the outcome does not depend on start order.
pub fn multi_start(objective: &dyn DesignObjective, starts: &[Vec<f64>], options: &AscentOptions) -> Result<MultiStartReport> {
    if starts.is_empty() {
        return Err(Error::Config("multi-start needs at least one start".into()));
    }
    let runs: Vec<Result<OptimizationReport>> =
        starts.par_iter().map(|s| projected_gradient_ascent(objective, s, options)).collect();
    let mut best: Option<&OptimizationReport> = None;
    for run in runs.iter().flatten() {
        best = match best {
            None => Some(run),
            Some(b) => {
                let tol = 1e-12 * b.best_value.abs().max(1.0);
                let better = run.best_value > b.best_value + tol
                    || ((run.best_value - b.best_value).abs() <= tol
                        && run.best_positions.iter().zip(&b.best_positions).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne())
                            == Some(std::cmp::Ordering::Less));
                Some(if better { run } else { b })
            }
        };
    }
    let best = match best {
        Some(b) => b.clone(),
        None => {
            return match runs.into_iter().next() {
                Some(Err(e)) => Err(e),
                _ => Err(Error::DegenerateProblem("no start produced a result".into())),
            }
        }
    };
    let runs = runs.into_iter().map(|r| r.map_err(|e| e.to_string())).collect();
    Ok(MultiStartReport { best, runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analytic(case: CaseKind, criterion: Criterion, p: f64, b: f64) -> AnalyticObjective {
        AnalyticObjective::new(case, ModelProblemSpec::new(1.0, b, p).unwrap(), PriorSpec::uniform(0.5, 1.5).unwrap(), criterion)
    }

    #[test]
    fn sweep_argmax_sets() {
        let bc = grid_sweep(&analytic(CaseKind::ParameterizedBC, Criterion::Ecfm, 1.0, 1.0), 11).unwrap();
        assert_eq!(bc.argmax.len(), 11);
        let fisher = grid_sweep(&analytic(CaseKind::ParameterizedBC, Criterion::Fisher, 1.0, 1.0), 11).unwrap();
        assert_eq!(fisher.argmax, vec![vec![1.0]]);
        let source = grid_sweep(&analytic(CaseKind::ParameterizedSource, Criterion::Ecfm, 1.0, 1.0), 11).unwrap();
        assert_eq!(source.argmax, vec![vec![0.0]]);
        assert!(grid_sweep(&analytic(CaseKind::ParameterizedBC, Criterion::Ecfm, 1.0, 1.0), 1).is_err());
    }

    #[test]
    fn ascent_examples() {
        let opts = AscentOptions::default();
        let r = projected_gradient_ascent(&analytic(CaseKind::ParameterizedSource, Criterion::Ecfm, 1.0, 1.0), &[0.7], &opts)
            .unwrap();
        assert_eq!(r.best_positions, vec![0.0]);
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.trace.windows(2).all(|w| w[1].value >= w[0].value));

        let r = projected_gradient_ascent(&analytic(CaseKind::ParameterizedBC, Criterion::Ecfm, 1.0, 1.0), &[0.3], &opts)
            .unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.best_value, 1.0);
        assert_eq!(r.best_positions, vec![0.3]);

        let r =
            projected_gradient_ascent(&analytic(CaseKind::ParameterizedMaterial, Criterion::Ecfm, 1.0, 1.0), &[0.9], &opts)
                .unwrap();
        assert_eq!(r.best_positions, vec![0.0]);
    }

    #[test]
    fn multi_start_is_order_invariant() {
        let obj = analytic(CaseKind::ParameterizedMaterial, Criterion::Ecfm, -0.75, 1.0);
        let starts = start_points(&obj.bounds(), DEFAULT_STARTS);
        assert_eq!(starts.first().unwrap(), &vec![0.0]);
        assert_eq!(starts.last().unwrap(), &vec![1.0]);
        let forward = multi_start(&obj, &starts, &AscentOptions::default()).unwrap();
        let mut reversed = starts.clone();
        reversed.reverse();
        let backward = multi_start(&obj, &reversed, &AscentOptions::default()).unwrap();
        assert_eq!(forward.best.best_positions, backward.best.best_positions);
        // knife edge: both ends are optimal, the smaller one is reported
        assert_eq!(forward.best.best_positions, vec![0.0]);
    }
}
