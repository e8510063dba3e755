//! C interface to `ecfm-oed`.
//!
//! A problem is created with [`ecfm_problem_new`] and released with
//! [`ecfm_problem_free`]. Every other call returns an [`EcfmStatus`]; on failure the
//! message is available from [`ecfm_last_error_message`] on the same thread.
//! Output buffers are written only on success. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ecfm_oed::analytic::{self, CaseKind, Criterion, ModelProblemSpec};
use ecfm_oed::fem::{build_case_system, ExperimentDesign, Mesh1D};
use ecfm_oed::oed::{OedProblem, ReferenceState};
use ecfm_oed::optimizer::{multi_start, start_points, AnalyticObjective, AscentOptions, DesignObjective, FemObjective};
use ecfm_oed::quadrature::PriorSpec;
use ecfm_oed::solver::{solve_constrained, DataVector};
use ecfm_oed::Error;

/// Result of every fallible call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcfmStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad case or criterion code, mesh, prior, design or length.
    InvalidArgument = 2,
    /// A value outside the domain of a closed form, e.g. beta outside [0, 1].
    Domain = 3,
    /// Singular saddle system: coincident measurements or one on x = 0.
    DegenerateDesign = 4,
    /// Solver, eigenvalue or optimizer failure.
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

pub const ECFM_CASE_PARAMETERIZED_BC: i32 = 0;
pub const ECFM_CASE_PARAMETERIZED_SOURCE: i32 = 1;
pub const ECFM_CASE_PARAMETERIZED_MATERIAL: i32 = 2;
pub const ECFM_CASE_MISSPECIFIED_SOURCE: i32 = 3;

pub const ECFM_CRITERION_FISHER: i32 = 0;
pub const ECFM_CRITERION_ECFM: i32 = 1;

/// Opaque finite element design problem for one model case.
pub struct EcfmProblem {
    case: CaseKind,
    spec: ModelProblemSpec,
    prior: PriorSpec,
    mesh: Mesh1D,
    problem: OedProblem,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EcfmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Domain(_) => EcfmStatus::Domain,
            Error::DegenerateDesign(_) => EcfmStatus::DegenerateDesign,
            Error::Config(_)
            | Error::Io(_)
            | Error::InvalidMesh(_)
            | Error::InvalidDesign(_)
            | Error::InvalidPrior(_)
            | Error::Dimension(_) => EcfmStatus::InvalidArgument,
            _ => EcfmStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: EcfmStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EcfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EcfmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EcfmStatus::Panic
        }
    }
}

fn case_from(code: i32) -> Result<CaseKind, Failure> {
    match code {
        ECFM_CASE_PARAMETERIZED_BC => Ok(CaseKind::ParameterizedBC),
        ECFM_CASE_PARAMETERIZED_SOURCE => Ok(CaseKind::ParameterizedSource),
        ECFM_CASE_PARAMETERIZED_MATERIAL => Ok(CaseKind::ParameterizedMaterial),
        ECFM_CASE_MISSPECIFIED_SOURCE => Ok(CaseKind::MisspecifiedSource),
        _ => Err(fail(EcfmStatus::InvalidArgument, format!("unknown case code {code}"))),
    }
}

fn criterion_from(code: i32) -> Result<Criterion, Failure> {
    match code {
        ECFM_CRITERION_FISHER => Ok(Criterion::Fisher),
        ECFM_CRITERION_ECFM => Ok(Criterion::Ecfm),
        _ => Err(fail(EcfmStatus::InvalidArgument, format!("unknown criterion code {code}"))),
    }
}

unsafe fn handle<'a>(problem: *const EcfmProblem) -> Result<&'a EcfmProblem, Failure> {
    problem.as_ref().ok_or_else(|| fail(EcfmStatus::NullPointer, "problem handle is null"))
}

unsafe fn input<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(fail(EcfmStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Failure> {
    if ptr.is_null() {
        return Err(fail(EcfmStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn scalar_out<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| fail(EcfmStatus::NullPointer, format!("{name} is null")))
}

fn require_len(have: usize, need: usize, name: &str) -> Result<(), Failure> {
    if have < need {
        return Err(fail(EcfmStatus::BufferTooSmall, format!("{name} holds {have} values, {need} needed")));
    }
    Ok(())
}

/// Create a problem on a uniform mesh of `elements` elements with a uniform prior
/// `[prior_lo, prior_hi]` on `eps` and `quadrature_nodes` Gauss-Legendre nodes.
///
/// # Safety
/// `out` must be null or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ecfm_problem_new(
    case_code: i32,
    k: f64,
    b: f64,
    p: f64,
    elements: usize,
    prior_lo: f64,
    prior_hi: f64,
    quadrature_nodes: usize,
    out: *mut *mut EcfmProblem,
) -> EcfmStatus {
    guard(|| {
        let out = scalar_out(out, "out")?;
        let case = case_from(case_code)?;
        let spec = ModelProblemSpec::new(k, b, p)?;
        let prior = PriorSpec::uniform(prior_lo, prior_hi)?;
        let mesh = Mesh1D::uniform(elements)?;
        let system = build_case_system(case, &spec, &mesh)?;
        let problem = OedProblem::new(system, &prior, quadrature_nodes)?;
        *out = Box::into_raw(Box::new(EcfmProblem { case, spec, prior, mesh, problem }));
        Ok(())
    })
}

/// Release a problem. Null is ignored.
///
/// # Safety
/// `problem` must come from [`ecfm_problem_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecfm_problem_free(problem: *mut EcfmProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of mesh nodes, including the Dirichlet node at x = 0.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ecfm_problem_node_count(problem: *const EcfmProblem, out: *mut usize) -> EcfmStatus {
    guard(|| {
        let problem = handle(problem)?;
        *scalar_out(out, "out")? = problem.mesh.node_count();
        Ok(())
    })
}

/// Mesh node coordinates into `out[0..len]`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ecfm_problem_nodes(problem: *const EcfmProblem, out: *mut f64, len: usize) -> EcfmStatus {
    guard(|| {
        let problem = handle(problem)?;
        let nodes = problem.mesh.nodes();
        let out = output(out, len, "out")?;
        require_len(len, nodes.len(), "out")?;
        out[..nodes.len()].copy_from_slice(nodes);
        Ok(())
    })
}

/// Nodal finite element solution of the model at `eps`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ecfm_forward(problem: *const EcfmProblem, eps: f64, out: *mut f64, len: usize) -> EcfmStatus {
    guard(|| {
        let problem = handle(problem)?;
        let out = output(out, len, "out")?;
        let u = problem.problem.system().forward_solve(&[eps])?;
        require_len(len, u.len(), "out")?;
        out[..u.len()].copy_from_slice(u.as_slice());
        Ok(())
    })
}

/// Constrained state at `eps` that matches `data` at `positions`. Writes the
/// `count` constraint forces and half their squared norm.
///
/// # Safety
/// `positions`, `data` and `out_lambda` must hold `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn ecfm_solve_constrained(
    problem: *const EcfmProblem,
    eps: f64,
    positions: *const f64,
    data: *const f64,
    count: usize,
    out_lambda: *mut f64,
    out_objective: *mut f64,
) -> EcfmStatus {
    guard(|| {
        let problem = handle(problem)?;
        let positions = input(positions, count, "positions")?;
        let data = input(data, count, "data")?;
        let lambda_out = output(out_lambda, count, "out_lambda")?;
        let objective_out = scalar_out(out_objective, "out_objective")?;
        let design = ExperimentDesign::for_mesh(positions.to_vec(), &problem.mesh)?;
        let sol = solve_constrained(problem.problem.system(), &[eps], &design, &DataVector::new(data.to_vec()))?;
        lambda_out.copy_from_slice(sol.lambda.as_slice());
        *objective_out = sol.objective;
        Ok(())
    })
}

/// Smallest eigenvalue of the prior-averaged criterion matrix at a design, and
/// optionally its gradient with respect to the `count` positions. The ECFM criterion
/// uses the prior-mean response as data.
///
/// # Safety
/// `positions` must hold `count` doubles; `out_gradient` must be null or hold `count`.
#[no_mangle]
pub unsafe extern "C" fn ecfm_criterion(
    problem: *const EcfmProblem,
    criterion_code: i32,
    positions: *const f64,
    count: usize,
    out_value: *mut f64,
    out_gradient: *mut f64,
) -> EcfmStatus {
    guard(|| {
        let problem = handle(problem)?;
        let criterion = criterion_from(criterion_code)?;
        let positions = input(positions, count, "positions")?;
        let value_out = scalar_out(out_value, "out_value")?;
        let design = ExperimentDesign::for_mesh(positions.to_vec(), &problem.mesh)?;
        let result = problem.problem.criterion(criterion, &design, &ReferenceState::PriorMean)?;
        if !out_gradient.is_null() {
            let grad = result.grad_beta()?;
            std::slice::from_raw_parts_mut(out_gradient, count).copy_from_slice(&grad);
        }
        *value_out = result.min_eig;
        Ok(())
    })
}

/// Maximize a criterion over `count` positions in `[h, 1]` from `starts` starting
/// points. A single position uses the closed-form criterion, which is exact between
/// mesh nodes; several positions use the finite element criterion.
///
/// # Safety
/// `out_positions` must hold `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn ecfm_optimize(
    problem: *const EcfmProblem,
    criterion_code: i32,
    count: usize,
    starts: usize,
    out_positions: *mut f64,
    out_value: *mut f64,
) -> EcfmStatus {
    guard(|| {
        let problem = handle(problem)?;
        let criterion = criterion_from(criterion_code)?;
        let positions_out = output(out_positions, count, "out_positions")?;
        let value_out = scalar_out(out_value, "out_value")?;
        if count == 0 || starts == 0 {
            return Err(fail(EcfmStatus::InvalidArgument, "count and starts must be positive"));
        }
        let bounds = vec![ExperimentDesign::default_bounds(&problem.mesh); count];
        let template = ExperimentDesign::for_mesh(start_points(&bounds, 1).remove(0), &problem.mesh)?;
        let objective: Box<dyn DesignObjective + '_> = if count == 1 {
            let (lo, hi) = bounds[0];
            Box::new(
                AnalyticObjective::new(problem.case, problem.spec, problem.prior.clone(), criterion)
                    .with_bounds(lo, hi)?,
            )
        } else {
            Box::new(FemObjective { problem: &problem.problem, criterion, reference: ReferenceState::PriorMean, template })
        };
        let best = multi_start(objective.as_ref(), &start_points(&bounds, starts), &AscentOptions::default())?.best;
        positions_out.copy_from_slice(&best.best_positions);
        *value_out = best.best_value;
        Ok(())
    })
}

/// Closed-form constraint force of a single measurement at `beta` with exact data.
///
/// # Safety
/// `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ecfm_oracle_constraint_force(
    case_code: i32,
    k: f64,
    b: f64,
    p: f64,
    eps: f64,
    beta: f64,
    out: *mut f64,
) -> EcfmStatus {
    guard(|| {
        let out = scalar_out(out, "out")?;
        let spec = ModelProblemSpec::new(k, b, p)?;
        *out = analytic::constraint_force(case_from(case_code)?, &spec, eps, beta)?.lambda;
        Ok(())
    })
}

/// Closed-form single-measurement criterion at `beta` under a uniform prior.
///
/// # Safety
/// `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn ecfm_oracle_design_objective(
    case_code: i32,
    k: f64,
    b: f64,
    p: f64,
    criterion_code: i32,
    prior_lo: f64,
    prior_hi: f64,
    beta: f64,
    out: *mut f64,
) -> EcfmStatus {
    guard(|| {
        let out = scalar_out(out, "out")?;
        let case = case_from(case_code)?;
        let spec = ModelProblemSpec::new(k, b, p)?;
        let prior = PriorSpec::uniform(prior_lo, prior_hi)?;
        *out = match criterion_from(criterion_code)? {
            Criterion::Ecfm => analytic::ecfm_design_objective(case, &spec, &prior, beta)?,
            Criterion::Fisher => analytic::fisher_design_objective(case, &spec, &prior, beta)?,
        };
        Ok(())
    })
}

/// Copy the last error message of this thread, NUL-terminated, into `buf`.
/// Returns the buffer size the message needs (0 when there is none); nothing is
/// written when `buf` is null or `len` is smaller than that.
///
/// # Safety
/// `buf` must be null or hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ecfm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len >= bytes.len() {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
            }
            bytes.len()
        }
    })
}
