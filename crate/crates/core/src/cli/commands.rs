use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::analytic::{self, CaseKind, Criterion};
use crate::cli::config::{DataSource, InverseMethod, NoiseModel, RunConfig};
use crate::cli::output::{fmt_f64, fmt_list, read_values, write_csv};
use crate::error::{Error, Result};
use crate::fem::{build_case_system, true_nodal_solution, ExperimentDesign, Mesh1D};
use crate::oed::{OedProblem, ReferenceState};
use crate::optimizer::{
    grid_sweep, multi_start, start_points, AnalyticObjective, AscentOptions, DesignObjective, FemObjective, SweepResult,
};
use crate::solver::{ecfm_inverse, solve_constrained, standard_inverse, DataVector, InverseResult};

pub const FORWARD_FILE: &str = "forward.csv";
pub const INVERSE_FILE: &str = "inverse.csv";
pub const SWEEP_FILE: &str = "design_sweep.csv";
pub const REPORT_FILE: &str = "design_report.csv";
pub const NOISE_FILE: &str = "noise.csv";
pub const NOISE_SUMMARY_FILE: &str = "noise_summary.csv";
pub const VERIFY_FILE: &str = "verify.csv";

fn prepare_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn bits(x: f64) -> u64 {
    x.to_bits()
}

/// Nodal FEM solution of the configured case next to the exact solution of the true
/// model. Returns the largest nodal difference.
pub fn cmd_forward(config: &RunConfig, out: &Path) -> Result<f64> {
    let mesh = config.mesh()?;
    let eps = match &config.eps {
        Some(eps) => eps.clone(),
        None => vec![config.case.consistent_parameter(&config.spec).ok_or_else(|| {
            Error::Config(format!("{} has no consistent parameter for this spec; set `eps`", config.case.name()))
        })?],
    };
    let system = build_case_system(config.case, &config.spec, &mesh)?;
    let theta = system.forward_solve(&eps)?;
    let mut rows = Vec::with_capacity(mesh.node_count());
    let mut max_error = 0.0_f64;
    for (i, &x) in mesh.nodes().iter().enumerate() {
        let u = analytic::true_solution(&config.spec, x)?;
        max_error = max_error.max((u - theta[i]).abs());
        rows.push(vec![fmt_f64(x), fmt_f64(u), fmt_f64(theta[i])]);
    }
    prepare_dir(out)?;
    write_csv(&out.join(FORWARD_FILE), &["x", "u_true", "u_fem"], &rows)?;
    log::info!("forward: {} elements, max nodal error {max_error:e}", mesh.element_count());
    Ok(max_error)
}

/// Measurement values for the configured design.
pub fn inverse_data(config: &RunConfig, design: &ExperimentDesign, source: &DataSource) -> Result<DataVector> {
    let values = match source {
        DataSource::Analytic => {
            design.positions().iter().map(|&x| analytic::data_at(&config.spec, x)).collect::<Result<Vec<_>>>()?
        }
        DataSource::File { path } => read_values(path)?,
    };
    if values.len() != design.len() {
        return Err(Error::Config(format!(
            "{} data values for a design with {} measurements",
            values.len(),
            design.len()
        )));
    }
    Ok(DataVector::new(values))
}

pub fn cmd_inverse(
    config: &RunConfig,
    method: InverseMethod,
    source: &DataSource,
    out: &Path,
) -> Result<Vec<(InverseMethod, InverseResult)>> {
    let mesh = config.mesh()?;
    let design = config.design(&mesh)?;
    let data = inverse_data(config, &design, source)?;
    let system = build_case_system(config.case, &config.spec, &mesh)?;
    let eps0 = config.inverse.eps0.clone().unwrap_or_else(|| config.prior.mean());
    let bounds = config.inverse_bounds()?;
    let methods = match method {
        InverseMethod::Both => vec![InverseMethod::Standard, InverseMethod::Ecfm],
        m => vec![m],
    };
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for m in methods {
        let (name, result) = match m {
            InverseMethod::Ecfm => ("ecfm", ecfm_inverse(&system, &design, &data, &eps0, &bounds)?),
            _ => ("standard", standard_inverse(&system, &design, &data, &eps0, &bounds)?),
        };
        if let Some(lambda) = &result.lambda {
            log::info!("ecfm constraint forces at the estimate: {:?}", lambda.as_slice());
        }
        rows.push(vec![name.to_string(), fmt_list(&result.eps), fmt_f64(result.objective), result.iterations.to_string()]);
        results.push((m, result));
    }
    prepare_dir(out)?;
    write_csv(&out.join(INVERSE_FILE), &["method", "eps_star", "objective_star", "iterations"], &rows)?;
    Ok(results)
}

/// Single-measurement sweeps of both criteria and multi-start optimization of the
/// configured design.
#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub fisher_sweep: SweepResult,
    pub ecfm_sweep: SweepResult,
    pub optimized: Vec<OptimizedDesign>,
}

#[derive(Debug, Clone)]
pub struct OptimizedDesign {
    pub criterion: Criterion,
    pub positions: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub termination: &'static str,
    pub fallbacks: usize,
    /// The sweep shows more than one maximizer, so this optimum is one of several.
    pub one_of_many: bool,
}

fn oed_problem(config: &RunConfig, mesh: &Mesh1D) -> Result<OedProblem> {
    let system = build_case_system(config.case, &config.spec, mesh)?;
    OedProblem::new(system, &config.prior, config.quadrature)
}

/// Sweep of one measurement over `[h, 1]`. The default resolution puts the grid on the
/// mesh nodes, where the interpolated criteria are exact.
fn single_sweeps(config: &RunConfig, mesh: &Mesh1D, problem: &OedProblem) -> Result<(SweepResult, SweepResult)> {
    let (lo, _) = ExperimentDesign::default_bounds(mesh);
    let template = ExperimentDesign::for_mesh(vec![lo], mesh)?;
    let resolution = config.sweep.resolution.unwrap_or(mesh.element_count().max(2));
    let sweep = |criterion| {
        let objective =
            FemObjective { problem, criterion, reference: ReferenceState::PriorMean, template: template.clone() };
        grid_sweep(&objective, resolution)
    };
    Ok((sweep(Criterion::Fisher)?, sweep(Criterion::Ecfm)?))
}

pub fn cmd_design(config: &RunConfig, out: &Path) -> Result<DesignOutcome> {
    let mesh = config.mesh()?;
    let problem = oed_problem(config, &mesh)?;
    let (fisher_sweep, ecfm_sweep) = single_sweeps(config, &mesh, &problem)?;

    let mut grid: Vec<f64> = fisher_sweep
        .points
        .iter()
        .map(|(x, _)| x[0])
        .chain(fisher_sweep.failures.iter().map(|(x, _)| x[0]))
        .collect();
    grid.sort_by(f64::total_cmp);
    let lookup = |s: &SweepResult| -> HashMap<u64, f64> { s.points.iter().map(|(x, v)| (bits(x[0]), *v)).collect() };
    let (fisher_values, ecfm_values) = (lookup(&fisher_sweep), lookup(&ecfm_sweep));
    let sweep_rows: Vec<Vec<String>> = grid
        .iter()
        .map(|&b| {
            let get = |m: &HashMap<u64, f64>| fmt_f64(m.get(&bits(b)).copied().unwrap_or(f64::NAN));
            vec![fmt_f64(b), get(&fisher_values), get(&ecfm_values)]
        })
        .collect();

    let template = config.design(&mesh)?;
    let starts = start_points(template.bounds(), config.optimizer.starts);
    let mut optimized = Vec::new();
    let mut report_rows = Vec::new();
    for criterion in config.criteria() {
        let objective: Box<dyn DesignObjective + '_> = if config.optimizer.use_analytic(template.len()) {
            let (lo, hi) = template.bounds()[0];
            Box::new(
                AnalyticObjective::new(config.case, config.spec, config.prior.clone(), criterion).with_bounds(lo, hi)?,
            )
        } else {
            Box::new(FemObjective {
                problem: &problem,
                criterion,
                reference: ReferenceState::PriorMean,
                template: template.clone(),
            })
        };
        let best = multi_start(objective.as_ref(), &starts, &AscentOptions::default())?.best;
        let sweep = if criterion == Criterion::Fisher { &fisher_sweep } else { &ecfm_sweep };
        let argmax: Vec<f64> = sweep.argmax.iter().map(|x| x[0]).collect();
        let result = OptimizedDesign {
            criterion,
            positions: best.best_positions,
            value: best.best_value,
            iterations: best.iterations,
            termination: best.termination.name(),
            fallbacks: best.fallbacks,
            one_of_many: argmax.len() > 1,
        };
        report_rows.push(vec![
            criterion.name().to_string(),
            fmt_list(&result.positions),
            fmt_f64(result.value),
            result.iterations.to_string(),
            result.termination.to_string(),
            result.fallbacks.to_string(),
            result.one_of_many.to_string(),
            fmt_list(&argmax),
        ]);
        optimized.push(result);
    }

    prepare_dir(out)?;
    write_csv(&out.join(SWEEP_FILE), &["beta", "fisher_value", "ecfm_value"], &sweep_rows)?;
    write_csv(
        &out.join(REPORT_FILE),
        &["criterion", "positions", "value", "iterations", "termination", "fallbacks", "one_of_many", "sweep_argmax"],
        &report_rows,
    )?;
    Ok(DesignOutcome { fisher_sweep, ecfm_sweep, optimized })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDesignSummary {
    pub label: &'static str,
    pub beta: f64,
    /// Estimate per trial, `None` where the estimator failed.
    pub estimates: Vec<Option<f64>>,
    pub mean: Option<f64>,
    /// Sample standard deviation; needs two successful trials.
    pub stddev: Option<f64>,
    pub failures: usize,
}

fn summarize(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}

fn smallest(argmax: &[Vec<f64>]) -> Result<f64> {
    argmax
        .iter()
        .map(|x| x[0])
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::DegenerateProblem("the sweep produced no valid point".into()))
}

/// Standard-estimator spread at the ECFM-optimal, Fisher-optimal and midpoint designs.
/// Trial `t` at design `d` draws its noise from the ChaCha8 stream `(d << 32) | t` of
/// the configured seed, so results do not depend on the thread count.
pub fn cmd_noise_study(config: &RunConfig, noise: NoiseModel, trials: usize, out: &Path) -> Result<Vec<NoiseDesignSummary>> {
    noise.validate()?;
    if trials == 0 {
        return Err(Error::Config("the noise study needs at least one trial".into()));
    }
    let mesh = config.mesh()?;
    let problem = oed_problem(config, &mesh)?;
    let (fisher_sweep, ecfm_sweep) = single_sweeps(config, &mesh, &problem)?;
    let (lo, hi) = ExperimentDesign::default_bounds(&mesh);
    let designs = [
        ("ecfm_optimal", smallest(&ecfm_sweep.argmax)?),
        ("fisher_optimal", smallest(&fisher_sweep.argmax)?),
        ("midpoint", 0.5_f64.clamp(lo, hi)),
    ];
    let system = problem.system();
    let eps0 = config.prior.mean();
    let bounds = config.noise_bounds()?;

    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut summary_rows = Vec::new();
    for (d, &(label, beta)) in designs.iter().enumerate() {
        let design = ExperimentDesign::for_mesh(vec![beta], &mesh)?;
        let clean = analytic::data_at(&config.spec, beta)?;
        let estimates: Vec<Option<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(((d as u64) << 32) | t as u64);
                let eta: f64 = rng.sample(StandardNormal);
                let data = DataVector::new(vec![clean + noise.sigma * eta]);
                match standard_inverse(system, &design, &data, &eps0, &bounds) {
                    Ok(r) => Some(r.eps[0]),
                    Err(e) => {
                        log::warn!("noise study: {label} trial {t} failed: {e}");
                        None
                    }
                }
            })
            .collect();
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let failures = trials - ok.len();
        let (mean, stddev) = summarize(&ok);
        for (t, e) in estimates.iter().enumerate() {
            rows.push(vec![label.to_string(), t.to_string(), fmt_f64(e.unwrap_or(f64::NAN))]);
        }
        let na = |v: Option<f64>| v.map(fmt_f64).unwrap_or_else(|| "NA".into());
        summary_rows.push(vec![label.to_string(), na(mean), na(stddev), failures.to_string()]);
        summaries.push(NoiseDesignSummary { label, beta, estimates, mean, stddev, failures });
    }
    prepare_dir(out)?;
    write_csv(&out.join(NOISE_FILE), &["design_label", "trial", "eps_hat"], &rows)?;
    write_csv(&out.join(NOISE_SUMMARY_FILE), &["design_label", "mean", "stddev", "failures"], &summary_rows)?;
    Ok(summaries)
}

/// One finite element value compared with its closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub quantity: &'static str,
    pub case: CaseKind,
    pub eps: f64,
    pub beta: f64,
    pub oracle: f64,
    pub fem: f64,
    pub passed: bool,
}

pub const VERIFY_TOLERANCE: f64 = 1e-8;

fn verify_row(quantity: &'static str, case: CaseKind, eps: f64, beta: f64, oracle: f64, fem: f64) -> VerifyRow {
    let passed = (oracle - fem).abs() <= VERIFY_TOLERANCE * oracle.abs().max(1.0);
    VerifyRow { quantity, case, eps, beta, oracle, fem, passed }
}

/// Constraint forces and both criteria from the finite element path against the closed
/// forms, for all four cases at every interior mesh node. The material-case ECFM
/// criterion is built from the true field.
pub fn verification_rows(config: &RunConfig) -> Result<Vec<VerifyRow>> {
    let mesh = config.mesh()?;
    let (lo, hi) = config.prior.support_box();
    let mut eps_values = vec![lo[0], config.prior.mean()[0], hi[0]];
    eps_values.dedup();
    let truth = ReferenceState::Field(true_nodal_solution(&config.spec, &mesh)?);
    let betas: Vec<f64> = mesh.nodes()[1..].to_vec();
    let mut rows = Vec::new();
    for case in CaseKind::ALL {
        let problem = oed_problem(&RunConfig { case, ..config.clone() }, &mesh)?;
        let case_rows: Vec<Vec<VerifyRow>> = betas
            .par_iter()
            .map(|&beta| -> Result<Vec<VerifyRow>> {
                let design = ExperimentDesign::for_mesh(vec![beta], &mesh)?;
                let data = DataVector::new(vec![analytic::data_at(&config.spec, beta)?]);
                let mut out = Vec::new();
                for &eps in &eps_values {
                    if case == CaseKind::ParameterizedMaterial && eps <= 0.0 {
                        continue;
                    }
                    let fem = solve_constrained(problem.system(), &[eps], &design, &data)?.lambda[0];
                    let oracle = analytic::constraint_force(case, &config.spec, eps, beta)?.lambda;
                    out.push(verify_row("lambda", case, eps, beta, oracle, fem));
                }
                let ecfm = problem.ecfm_hessian(&design, &truth)?.min_eig;
                let oracle = analytic::ecfm_design_objective(case, &config.spec, &config.prior, beta)?;
                out.push(verify_row("ecfm", case, f64::NAN, beta, oracle, ecfm));
                let fisher = problem.fisher_matrix(&design)?.min_eig;
                let oracle = analytic::fisher_design_objective(case, &config.spec, &config.prior, beta)?;
                out.push(verify_row("fisher", case, f64::NAN, beta, oracle, fisher));
                Ok(out)
            })
            .collect::<Result<_>>()?;
        rows.extend(case_rows.into_iter().flatten());
    }
    Ok(rows)
}

pub fn cmd_verify(config: &RunConfig, out: &Path) -> Result<Vec<VerifyRow>> {
    let rows = verification_rows(config)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.quantity.to_string(),
                r.case.name().to_string(),
                fmt_f64(r.eps),
                fmt_f64(r.beta),
                fmt_f64(r.oracle),
                fmt_f64(r.fem),
                fmt_f64((r.oracle - r.fem).abs()),
                r.passed.to_string(),
            ]
        })
        .collect();
    prepare_dir(out)?;
    write_csv(
        &out.join(VERIFY_FILE),
        &["quantity", "case", "eps", "beta", "oracle", "fem", "abs_error", "passed"],
        &table,
    )?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Error::Verification(format!("{failed} of {} checks exceed {VERIFY_TOLERANCE:e}", rows.len())));
    }
    Ok(rows)
}

/// Output files written by each command, relative to the output directory.
pub fn written_files(out: &Path, names: &[&str]) -> Vec<PathBuf> {
    names.iter().map(|n| out.join(n)).collect()
}
