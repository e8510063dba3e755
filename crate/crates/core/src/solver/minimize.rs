//! Box-constrained Newton minimization with Levenberg-Marquardt damping and an Armijo
//! line search along the projected path. Scalar problems that stall fall back to a
//! golden-section search over the whole interval.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Convergence threshold on the norm of the projected gradient.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// A stalled line search still counts as converged below this projected-gradient norm.
    pub stall_tolerance: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { gradient_tolerance: 1e-10, max_iterations: 100, stall_tolerance: 1e-6 }
    }
}

/// Value, gradient and (approximate) Hessian at a point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Accepted iterates with their objective values, starting at the initial point.
    pub trace: Vec<(Vec<f64>, f64)>,
}

const ARMIJO: f64 = 1e-4;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn project(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter().zip(lo.iter().zip(hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect()
}

/// Gradient with the components that push against an active bound removed.
fn projected_gradient(x: &[f64], g: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let blocked = (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0);
            if blocked {
                0.0
            } else {
                g[i]
            }
        }),
    )
}

fn check_bounds(x0: &[f64], lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.len() != x0.len() || hi.len() != x0.len() {
        return Err(Error::Dimension("bounds and starting point differ in dimension".into()));
    }
    if x0.is_empty() {
        return Err(Error::DegenerateProblem("nothing to optimize".into()));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
        return Err(Error::Domain(format!("invalid bounds lo = {lo:?}, hi = {hi:?}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("starting point {x0:?} is not finite")));
    }
    Ok(())
}

/// Minimize `f` over the box `[lo, hi]` starting from `x0` (clamped into the box).
pub fn minimize_box<F>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], options: &MinimizeOptions) -> Result<MinimizeReport>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    check_bounds(x0, lo, hi)?;
    let mut x = project(x0, lo, hi);
    let mut current = f(&x)?;
    let mut trace = vec![(x.clone(), current.value)];
    let mut golden_used = false;
    for iteration in 0..=options.max_iterations {
        let pg = projected_gradient(&x, &current.gradient, lo, hi);
        let pg_norm = pg.norm();
        let report = |x: &Vec<f64>, value, trace: &Vec<(Vec<f64>, f64)>| MinimizeReport {
            x: x.clone(),
            value,
            gradient_norm: pg_norm,
            iterations: iteration,
            trace: trace.clone(),
        };
        if pg_norm <= options.gradient_tolerance {
            return Ok(report(&x, current.value, &trace));
        }
        if iteration == options.max_iterations {
            return Err(Error::NonConvergence { iterations: iteration, gradient_norm: pg_norm, trace });
        }
        match newton_step(&f, &x, &current, &pg, lo, hi)? {
            Some((next_x, next)) => {
                x = next_x;
                current = next;
                trace.push((x.clone(), current.value));
            }
            None if x.len() == 1 && !golden_used => {
                golden_used = true;
                let (gx, gv) = golden_section(&f, lo[0], hi[0])?;
                if gv < current.value {
                    x = vec![gx];
                    current = f(&x)?;
                    trace.push((x.clone(), current.value));
                }
            }
            None if pg_norm <= options.stall_tolerance => return Ok(report(&x, current.value, &trace)),
            None => {
                return Err(Error::NonConvergence { iterations: iteration, gradient_norm: pg_norm, trace });
            }
        }
    }
    unreachable!("the loop returns on its last iteration")
}

/// One damped Newton step on the free variables. `None` when no damping level gives
/// sufficient decrease.
fn newton_step<F>(
    f: &F,
    x: &[f64],
    current: &Evaluation,
    pg: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> Result<Option<(Vec<f64>, Evaluation)>>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    let free: Vec<usize> = (0..x.len()).filter(|&i| pg[i] != 0.0).collect();
    let h = current.hessian.select_rows(&free).select_columns(&free);
    let g = DVector::from_iterator(free.len(), free.iter().map(|&i| current.gradient[i]));
    let scale = h.diagonal().amax().max(g.amax()).max(f64::MIN_POSITIVE);
    let mut mu = 0.0;
    for _ in 0..20 {
        let damped = &h + DMatrix::identity(free.len(), free.len()) * mu;
        let direction = match damped.cholesky() {
            Some(chol) => -chol.solve(&g),
            None => {
                mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
                continue;
            }
        };
        let mut t = 1.0;
        for _ in 0..40 {
            let mut trial = x.to_vec();
            for (k, &i) in free.iter().enumerate() {
                trial[i] += t * direction[k];
            }
            let trial = project(&trial, lo, hi);
            let step = DVector::from_iterator(x.len(), trial.iter().zip(x).map(|(a, b)| a - b));
            let slope = current.gradient.dot(&step);
            if step.amax() == 0.0 {
                break;
            }
            if slope < 0.0 {
                // points where the model cannot be evaluated count as rejected steps
                if let Ok(next) = f(&trial) {
                    if next.value <= current.value + ARMIJO * slope {
                        return Ok(Some((trial, next)));
                    }
                }
            }
            t *= 0.5;
        }
        mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
    }
    Ok(None)
}

fn golden_section<F>(f: &F, lo: f64, hi: f64) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<Evaluation>,
{
    let value = |x: f64| f(&[x]).map(|e| e.value);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (value(c)?, value(d)?);
    while (b - a) > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = value(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = value(d)?;
        }
    }
    let candidates = [(lo, value(lo)?), (hi, value(hi)?), (0.5 * (a + b), value(0.5 * (a + b))?)];
    Ok(candidates.into_iter().fold((f64::NAN, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best }))
}
