//! PDD and the baseline first-order iterations.
//!
//! Each `*_step` function takes the objective and performs exactly the
//! gradient evaluations of the method (one for PDD, GD, NAG, heavy ball and
//! IGAHD-SC; two for IGAHD). The matching `*_update` functions take the
//! gradient at the current iterate as an argument so that [`run_optimizer`]
//! can reuse the gradient it already computed for the stopping test.

use std::fmt;
use std::sync::Arc;

use crate::linalg::{all_finite, asymmetry, ensure_len, ensure_square, is_positive_definite};
use crate::objective::{check_dim, Objective};
use crate::{Matrix, PddError, Result, Vector};

type MatrixFn = dyn Fn(&Vector) -> Matrix + Send + Sync;

/// The matrix `C(x)` that shapes the primal update.
#[derive(Clone, Default)]
pub enum Preconditioner {
    #[default]
    Identity,
    Diagonal(Vector),
    Dense(Matrix),
    Callback(Arc<MatrixFn>),
}

impl Preconditioner {
    /// Diagonal preconditioner; every entry must be strictly positive.
    pub fn diagonal(d: Vector) -> Result<Self> {
        if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(PddError::invalid(
                "diagonal preconditioner entries must be positive",
            ));
        }
        Ok(Self::Diagonal(d))
    }

    /// Dense symmetric positive definite preconditioner.
    pub fn dense(m: Matrix) -> Result<Self> {
        ensure_square(&m)?;
        let asym = asymmetry(&m);
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(PddError::NotSymmetric(asym));
        }
        if !is_positive_definite(&m) {
            return Err(PddError::NotPositiveDefinite);
        }
        Ok(Self::Dense(m))
    }

    pub fn callback(f: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        Self::Callback(Arc::new(f))
    }

    /// `(diag Q)^{-1}`.
    pub fn inverse_diagonal_of(q: &Matrix) -> Result<Self> {
        Self::diagonal(q.diagonal().map(|d| 1.0 / d))
    }

    /// `C(x) v`.
    pub fn apply(&self, x: &Vector, v: &Vector) -> Vector {
        match self {
            Self::Identity => v.clone(),
            Self::Diagonal(d) => d.component_mul(v),
            Self::Dense(m) => m * v,
            Self::Callback(f) => f(x) * v,
        }
    }

    /// `C(x)` as a dense `dim x dim` matrix.
    pub fn matrix_at(&self, x: &Vector, dim: usize) -> Matrix {
        match self {
            Self::Identity => Matrix::identity(dim, dim),
            Self::Diagonal(d) => Matrix::from_diagonal(d),
            Self::Dense(m) => m.clone(),
            Self::Callback(f) => f(x),
        }
    }

    /// True when `C` does not depend on `x`.
    pub fn is_constant(&self) -> bool {
        !matches!(self, Self::Callback(_))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Self::Diagonal(d) => ensure_len(d, dim),
            Self::Dense(m) if m.nrows() != dim => Err(PddError::DimensionMismatch {
                expected: dim,
                got: m.nrows(),
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Debug for Preconditioner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "Identity"),
            Self::Diagonal(d) => f.debug_tuple("Diagonal").field(&d.as_slice()).finish(),
            Self::Dense(m) => write!(f, "Dense({}x{})", m.nrows(), m.ncols()),
            Self::Callback(_) => write!(f, "Callback"),
        }
    }
}

/// Scalars of the linearized primal-dual damping iteration. The dual
/// preconditioner is `A * I`.
#[derive(Debug, Clone)]
pub struct PddParams {
    pub tau: f64,
    pub sigma: f64,
    pub a: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub precond: Preconditioner,
}

impl PddParams {
    pub fn new(tau: f64, sigma: f64, a: f64, epsilon: f64, omega: f64) -> Result<Self> {
        let params = Self {
            tau,
            sigma,
            a,
            epsilon,
            omega,
            precond: Preconditioner::Identity,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_precond(mut self, precond: Preconditioner) -> Self {
        self.precond = precond;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau, self.sigma, self.a, self.epsilon, self.omega]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(PddError::invalid("PDD parameters must be finite"));
        }
        if !(self.tau > 0.0 && self.sigma > 0.0) {
            return Err(PddError::invalid("tau and sigma must be positive"));
        }
        if !(self.a > 0.0) {
            return Err(PddError::invalid("A must be positive"));
        }
        if self.epsilon < 0.0 || self.omega < 0.0 {
            return Err(PddError::invalid("epsilon and omega must be non-negative"));
        }
        Ok(())
    }

    /// Continuous-limit Hessian damping `gamma = sigma * omega`.
    pub fn gamma(&self) -> f64 {
        self.sigma * self.omega
    }
}

/// Primal/dual iterate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PddState {
    pub x: Vector,
    pub p: Vector,
    pub iter: usize,
}

impl PddState {
    /// Start at `x0` with zero dual.
    pub fn new(x0: Vector) -> Self {
        let p = Vector::zeros(x0.len());
        Self { x: x0, p, iter: 0 }
    }

    pub fn with_dual(x0: Vector, p0: Vector) -> Result<Self> {
        ensure_len(&p0, x0.len())?;
        Ok(Self {
            x: x0,
            p: p0,
            iter: 0,
        })
    }
}

fn finite_or(v: &Vector, what: &'static str) -> Result<()> {
    if all_finite(v) {
        Ok(())
    } else {
        Err(PddError::Diverged(what))
    }
}

/// One PDD iteration given `g = grad f(x)`.
pub fn pdd_update(state: &PddState, params: &PddParams, g: &Vector) -> Result<PddState> {
    finite_or(g, "gradient")?;
    let denom = 1.0 + params.sigma * params.epsilon * params.a;
    let p_next = (&state.p + g * (params.sigma * params.a)) / denom;
    let p_bar = &p_next + (&p_next - &state.p) * params.omega;
    let x_next = &state.x - params.precond.apply(&state.x, &p_bar) * params.tau;
    finite_or(&x_next, "iterate")?;
    Ok(PddState {
        x: x_next,
        p: p_next,
        iter: state.iter + 1,
    })
}

/// One iteration of linearized primal-dual damping.
pub fn pdd_step(state: &PddState, params: &PddParams, obj: &dyn Objective) -> Result<PddState> {
    check_dim(obj, &state.x)?;
    ensure_len(&state.p, state.x.len())?;
    params.precond.check_dim(state.x.len())?;
    let g = obj.gradient(&state.x);
    pdd_update(state, params, &g)
}

/// Runs `steps` PDD iterations and returns every iterate, the start included.
pub fn pdd_iterates(
    obj: &dyn Objective,
    params: &PddParams,
    start: PddState,
    steps: usize,
) -> Result<Vec<PddState>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start);
    for _ in 0..steps {
        let next = pdd_step(out.last().expect("non-empty"), params, obj)?;
        out.push(next);
    }
    Ok(out)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PddError::invalid(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn momentum(name: &str, beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(PddError::invalid(format!(
            "{name} must lie in [0, 1), got {beta}"
        )))
    }
}

pub fn gd_update(x: &Vector, g: &Vector, tau: f64, precond: &Preconditioner) -> Result<Vector> {
    finite_or(g, "gradient")?;
    Ok(x - precond.apply(x, g) * tau)
}

/// `x+ = x - tau grad f(x)`.
pub fn gd_step(x: &Vector, tau: f64, obj: &dyn Objective) -> Result<Vector> {
    positive("tau", tau)?;
    check_dim(obj, x)?;
    gd_update(x, &obj.gradient(x), tau, &Preconditioner::Identity)
}

/// `x+ = x - tau C(x) grad f(x)`.
pub fn gd_step_preconditioned(
    x: &Vector,
    tau: f64,
    precond: &Preconditioner,
    obj: &dyn Objective,
) -> Result<Vector> {
    positive("tau", tau)?;
    check_dim(obj, x)?;
    precond.check_dim(x.len())?;
    gd_update(x, &obj.gradient(x), tau, precond)
}

/// Returns `(x+, y+)` with `y+ = x - tau g` and `x+ = y+ + beta (y_prev - y_prev2)`.
pub fn nag_update(
    x: &Vector,
    y_prev: &Vector,
    y_prev2: &Vector,
    g: &Vector,
    tau: f64,
    beta: f64,
) -> Result<(Vector, Vector)> {
    finite_or(g, "gradient")?;
    let y_next = x - g * tau;
    let x_next = &y_next + (y_prev - y_prev2) * beta;
    Ok((x_next, y_next))
}

/// Nesterov's accelerated gradient in the lagged form
/// `y^{n+1} = x^n - tau grad f(x^n)`, `x^{n+1} = y^{n+1} + beta (y^n - y^{n-1})`.
pub fn nag_step(
    x: &Vector,
    y_prev: &Vector,
    y_prev2: &Vector,
    tau: f64,
    beta: f64,
    obj: &dyn Objective,
) -> Result<(Vector, Vector)> {
    positive("tau", tau)?;
    momentum("beta", beta)?;
    check_dim(obj, x)?;
    nag_update(x, y_prev, y_prev2, &obj.gradient(x), tau, beta)
}

pub fn heavy_ball_update(
    x: &Vector,
    x_prev: &Vector,
    g: &Vector,
    tau: f64,
    beta: f64,
) -> Result<Vector> {
    finite_or(g, "gradient")?;
    Ok(x - g * tau + (x - x_prev) * beta)
}

/// Polyak heavy ball `x+ = x - tau grad f(x) + beta (x - x_prev)`.
pub fn heavy_ball_step(
    x: &Vector,
    x_prev: &Vector,
    tau: f64,
    beta: f64,
    obj: &dyn Objective,
) -> Result<Vector> {
    positive("tau", tau)?;
    momentum("beta", beta)?;
    check_dim(obj, x)?;
    heavy_ball_update(x, x_prev, &obj.gradient(x), tau, beta)
}

fn igahd_params(n: usize, tau: f64, beta1: f64) -> Result<()> {
    if n == 0 {
        return Err(PddError::invalid("IGAHD iteration counter starts at 1"));
    }
    positive("tau", tau)?;
    let cap = 2.0 * tau.sqrt();
    if beta1 < 0.0 || beta1 > cap * (1.0 + 1e-12) {
        return Err(PddError::invalid(format!(
            "IGAHD needs 0 <= beta1 <= 2 sqrt(tau) = {cap}, got {beta1}"
        )));
    }
    Ok(())
}

/// IGAHD given `g = grad f(x^n)`; evaluates the gradient once more at the
/// extrapolated point. Returns `x^{n+1}`.
#[allow(clippy::too_many_arguments)]
pub fn igahd_update(
    x: &Vector,
    x_prev: &Vector,
    g: &Vector,
    g_prev: &Vector,
    n: usize,
    tau: f64,
    alpha: f64,
    beta1: f64,
    obj: &dyn Objective,
) -> Result<Vector> {
    finite_or(g, "gradient")?;
    let nf = n as f64;
    let alpha_n = 1.0 - alpha / nf;
    let damp = beta1 * tau.sqrt();
    let y = x + (x - x_prev) * alpha_n - (g - g_prev) * damp - g_prev * (damp / nf);
    finite_or(&y, "iterate")?;
    let gy = obj.gradient(&y);
    finite_or(&gy, "gradient")?;
    Ok(&y - gy * tau)
}

/// Inertial gradient algorithm with Hessian damping. Returns `(x^{n+1},
/// grad f(x^n))`; the second component is the next call's `g_prev`.
#[allow(clippy::too_many_arguments)]
pub fn igahd_step(
    x: &Vector,
    x_prev: &Vector,
    g_prev: &Vector,
    n: usize,
    tau: f64,
    alpha: f64,
    beta1: f64,
    obj: &dyn Objective,
) -> Result<(Vector, Vector)> {
    igahd_params(n, tau, beta1)?;
    check_dim(obj, x)?;
    let g = obj.gradient(x);
    let x_next = igahd_update(x, x_prev, &g, g_prev, n, tau, alpha, beta1, obj)?;
    Ok((x_next, g))
}

fn igahd_sc_params(m1: f64, tau: f64, beta2: f64) -> Result<()> {
    positive("m1", m1)?;
    positive("tau", tau)?;
    if beta2 > (1.0 / m1.sqrt()) * (1.0 + 1e-12) {
        return Err(PddError::invalid("IGAHD-SC needs beta2 <= 1/sqrt(m1)"));
    }
    Ok(())
}

pub fn igahd_sc_update(
    x: &Vector,
    x_prev: &Vector,
    g: &Vector,
    g_prev: &Vector,
    m1: f64,
    tau: f64,
    beta2: f64,
) -> Result<Vector> {
    finite_or(g, "gradient")?;
    let s = (m1 * tau).sqrt();
    let r = (1.0 - s) / (1.0 + s);
    Ok(x + (x - x_prev) * r
        - (g - g_prev) * (beta2 * tau.sqrt() / (1.0 + s))
        - g * (tau / (1.0 + s)))
}

/// IGAHD for `m1`-strongly convex objectives. Returns `(x+, grad f(x))`.
#[allow(clippy::too_many_arguments)]
pub fn igahd_sc_step(
    x: &Vector,
    x_prev: &Vector,
    g_prev: &Vector,
    m1: f64,
    tau: f64,
    beta2: f64,
    obj: &dyn Objective,
) -> Result<(Vector, Vector)> {
    igahd_sc_params(m1, tau, beta2)?;
    check_dim(obj, x)?;
    let g = obj.gradient(x);
    let x_next = igahd_sc_update(x, x_prev, &g, g_prev, m1, tau, beta2)?;
    Ok((x_next, g))
}

/// Hessian-damping coefficient for IGAHD-SC that balances the two
/// Lipschitz bounds on the stepsize.
pub fn compute_beta2(m1: f64, tau: f64) -> Result<f64> {
    positive("m1", m1)?;
    positive("tau", tau)?;
    let st = tau.sqrt();
    let smt = (m1 * tau).sqrt();
    let denom = 4.0 + 8.0 * smt - 2.0 * m1 * tau;
    if !(denom > 0.0) {
        return Err(PddError::invalid(format!(
            "beta2 denominator 4 + 8 sqrt(m1 tau) - 2 m1 tau is {denom}"
        )));
    }
    Ok((st + tau * m1.sqrt() / 2.0) / denom)
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// An optimizer together with its hyperparameters.
#[derive(Debug, Clone)]
pub enum Method {
    Gd { tau: f64, precond: Preconditioner },
    Nag { tau: f64, beta: f64 },
    HeavyBall { tau: f64, beta: f64 },
    Pdd(PddParams),
    Igahd { tau: f64, alpha: f64, beta1: f64 },
    IgahdSc { tau: f64, m1: f64, beta2: f64 },
}

impl Method {
    pub fn gd(tau: f64) -> Self {
        Self::Gd {
            tau,
            precond: Preconditioner::Identity,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gd { .. } => "gd",
            Self::Nag { .. } => "nag",
            Self::HeavyBall { .. } => "heavy-ball",
            Self::Pdd(_) => "pdd",
            Self::Igahd { .. } => "igahd",
            Self::IgahdSc { .. } => "igahd-sc",
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Gd { tau, precond } => {
                positive("tau", *tau)?;
                precond.check_dim(dim)
            }
            Self::Nag { tau, beta } | Self::HeavyBall { tau, beta } => {
                positive("tau", *tau)?;
                momentum("beta", *beta)
            }
            Self::Pdd(p) => {
                p.validate()?;
                p.precond.check_dim(dim)
            }
            Self::Igahd { tau, beta1, .. } => igahd_params(1, *tau, *beta1),
            Self::IgahdSc { tau, m1, beta2 } => igahd_sc_params(*m1, *tau, *beta2),
        }
    }
}

/// Stopping and recording rules for [`run_optimizer`].
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub record_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            grad_tol: 1e-10,
            record_every: 1,
        }
    }
}

/// Per-iteration metrics.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Record {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub lyapunov: f64,
    pub dist_to_min: Option<f64>,
}

/// Output of [`run_optimizer`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: String,
    pub records: Vec<Record>,
    pub final_x: Vector,
    /// Final dual iterate, PDD only.
    pub final_p: Option<Vector>,
    /// Number of iterations performed.
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("a trajectory always holds a record")
    }
}

enum Memory {
    None,
    Nag {
        y_prev: Vector,
        y_prev2: Vector,
    },
    HeavyBall {
        x_prev: Vector,
    },
    Pdd {
        p: Vector,
    },
    Igahd {
        x_prev: Vector,
        g_prev: Vector,
        n: usize,
    },
    IgahdSc {
        x_prev: Vector,
        g_prev: Vector,
    },
}

/// Iterates `method` from `x0` until `|grad f| <= grad_tol`, `max_iter` steps,
/// or divergence. Metrics are recorded at iteration 0, every `record_every`
/// iterations, and at the final iterate.
///
/// PDD starts from a zero dual; use [`run_optimizer_from`] to override it.
pub fn run_optimizer(
    obj: &dyn Objective,
    method: &Method,
    x0: &Vector,
    opts: RunOptions,
) -> Result<Trajectory> {
    run_optimizer_from(obj, method, x0, None, opts)
}

pub fn run_optimizer_from(
    obj: &dyn Objective,
    method: &Method,
    x0: &Vector,
    p0: Option<&Vector>,
    opts: RunOptions,
) -> Result<Trajectory> {
    check_dim(obj, x0)?;
    method.validate(obj.dim())?;
    if opts.max_iter == 0 {
        return Err(PddError::invalid("max_iter must be at least 1"));
    }
    if !(opts.grad_tol >= 0.0) {
        return Err(PddError::invalid("grad_tol must be non-negative"));
    }
    let record_every = opts.record_every.max(1);
    let x_star = obj.minimizer();

    let mut x = x0.clone();
    let g0 = obj.gradient(&x);
    let mut mem = match method {
        Method::Gd { .. } => Memory::None,
        Method::Nag { .. } => Memory::Nag {
            y_prev: x.clone(),
            y_prev2: x.clone(),
        },
        Method::HeavyBall { .. } => Memory::HeavyBall { x_prev: x.clone() },
        Method::Pdd(_) => {
            let p = match p0 {
                Some(p) => {
                    ensure_len(p, x.len())?;
                    p.clone()
                }
                None => Vector::zeros(x.len()),
            };
            Memory::Pdd { p }
        }
        Method::Igahd { .. } => Memory::Igahd {
            x_prev: x.clone(),
            g_prev: g0.clone(),
            n: 1,
        },
        Method::IgahdSc { .. } => Memory::IgahdSc {
            x_prev: x.clone(),
            g_prev: g0.clone(),
        },
    };

    let mut records = Vec::new();
    let mut g = g0;
    let mut iter = 0usize;
    let mut converged;
    let mut diverged = false;
    loop {
        let grad_norm = g.norm();
        let finite = grad_norm.is_finite() && all_finite(&x);
        converged = finite && grad_norm <= opts.grad_tol;
        let done = !finite || converged || iter >= opts.max_iter;
        if done || iter.is_multiple_of(record_every) {
            let f = obj.value(&x);
            let p_sq = match &mem {
                Memory::Pdd { p } => p.norm_squared(),
                _ => 0.0,
            };
            if !f.is_finite() {
                diverged = true;
            }
            records.push(Record {
                iter,
                f,
                grad_norm,
                lyapunov: 0.5 * (p_sq + grad_norm * grad_norm),
                dist_to_min: x_star.as_ref().map(|xs| (&x - xs).norm()),
            });
            if diverged {
                break;
            }
        }
        if !finite {
            diverged = true;
            break;
        }
        if done {
            break;
        }

        let stepped = step(obj, method, &x, &g, &mut mem);
        match stepped {
            Ok(next) => x = next,
            Err(PddError::Diverged(_)) => {
                diverged = true;
                x = x.map(|_| f64::NAN);
            }
            Err(e) => return Err(e),
        }
        iter += 1;
        if diverged {
            records.push(Record {
                iter,
                f: f64::NAN,
                grad_norm: f64::NAN,
                lyapunov: f64::NAN,
                dist_to_min: x_star.as_ref().map(|_| f64::NAN),
            });
            break;
        }
        g = obj.gradient(&x);
    }

    let final_p = match mem {
        Memory::Pdd { p } => Some(p),
        _ => None,
    };
    Ok(Trajectory {
        method: method.kind().to_string(),
        records,
        final_x: x,
        final_p,
        iterations: iter,
        converged: converged && !diverged,
        diverged,
    })
}

fn step(
    obj: &dyn Objective,
    method: &Method,
    x: &Vector,
    g: &Vector,
    mem: &mut Memory,
) -> Result<Vector> {
    match (method, mem) {
        (Method::Gd { tau, precond }, Memory::None) => gd_update(x, g, *tau, precond),
        (Method::Nag { tau, beta }, Memory::Nag { y_prev, y_prev2 }) => {
            let (x_next, y_next) = nag_update(x, y_prev, y_prev2, g, *tau, *beta)?;
            *y_prev2 = std::mem::replace(y_prev, y_next);
            Ok(x_next)
        }
        (Method::HeavyBall { tau, beta }, Memory::HeavyBall { x_prev }) => {
            let x_next = heavy_ball_update(x, x_prev, g, *tau, *beta)?;
            *x_prev = x.clone();
            Ok(x_next)
        }
        (Method::Pdd(params), Memory::Pdd { p }) => {
            let state = PddState {
                x: x.clone(),
                p: std::mem::take(p),
                iter: 0,
            };
            let next = pdd_update(&state, params, g)?;
            *p = next.p;
            Ok(next.x)
        }
        (Method::Igahd { tau, alpha, beta1 }, Memory::Igahd { x_prev, g_prev, n }) => {
            let x_next = igahd_update(x, x_prev, g, g_prev, *n, *tau, *alpha, *beta1, obj)?;
            *x_prev = x.clone();
            *g_prev = g.clone();
            *n += 1;
            Ok(x_next)
        }
        (Method::IgahdSc { tau, m1, beta2 }, Memory::IgahdSc { x_prev, g_prev }) => {
            let x_next = igahd_sc_update(x, x_prev, g, g_prev, *m1, *tau, *beta2)?;
            *x_prev = x.clone();
            *g_prev = g.clone();
            Ok(x_next)
        }
        _ => unreachable!("memory is created from the same method"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Counting, Quadratic, Rosenbrock};
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn half_square() -> Quadratic {
        Quadratic::diagonal(&[1.0]).unwrap()
    }

    #[test]
    fn pdd_fixed_point_is_exact() {
        let obj = Quadratic::diagonal(&[1.0, 3.0]).unwrap();
        let params = PddParams::new(0.3, 0.7, 2.0, 1.0, 1.0).unwrap();
        let s = PddState::new(Vector::zeros(2));
        let next = pdd_step(&s, &params, &obj).unwrap();
        assert_eq!(next.x, s.x);
        assert_eq!(next.p, s.p);
        assert_eq!(next.iter, 1);
    }

    #[test]
    fn pdd_one_dimensional_hand_values() {
        let params = PddParams::new(0.1, 0.1, 1.0, 1.0, 1.0).unwrap();
        let s = PddState::new(v(&[1.0]));
        let next = pdd_step(&s, &params, &half_square()).unwrap();
        // 1 + sigma*eps*A = 1.1
        assert_relative_eq!(next.p[0], 0.1 / 1.1, epsilon = 1e-15);
        assert_relative_eq!(next.x[0], 1.0 - 0.1 * 2.0 * (0.1 / 1.1), epsilon = 1e-15);
        assert_relative_eq!(next.x[0], 0.981818181818, epsilon = 1e-11);
    }

    #[test]
    fn pdd_diagonal_preconditioner_scales_update() {
        let params = PddParams::new(0.1, 0.1, 1.0, 0.0, 0.0)
            .unwrap()
            .with_precond(Preconditioner::diagonal(v(&[2.0, 0.5])).unwrap());
        let obj = Quadratic::diagonal(&[1.0, 1.0]).unwrap();
        let next = pdd_step(&PddState::new(v(&[1.0, 1.0])), &params, &obj).unwrap();
        // p+ = 0.1 g, x+ = x - 0.1 * C * 0.1 g
        assert_relative_eq!(next.x, v(&[1.0 - 0.02, 1.0 - 0.005]), epsilon = 1e-15);
    }

    #[test]
    fn pdd_rejects_bad_dimensions() {
        let params = PddParams::new(0.1, 0.1, 1.0, 1.0, 1.0).unwrap();
        let s = PddState::new(v(&[1.0, 2.0]));
        assert!(pdd_step(&s, &params, &half_square()).is_err());
        assert!(PddState::with_dual(v(&[1.0]), v(&[1.0, 2.0])).is_err());
        assert!(PddParams::new(0.0, 0.1, 1.0, 1.0, 1.0).is_err());
        assert!(PddParams::new(0.1, 0.1, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn preconditioner_validation() {
        assert!(Preconditioner::diagonal(v(&[1.0, 0.0])).is_err());
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            Preconditioner::dense(m),
            Err(PddError::NotPositiveDefinite)
        ));
        let c =
            Preconditioner::callback(|x: &Vector| Matrix::from_diagonal(&x.map(|v| 1.0 + v * v)));
        assert!(!c.is_constant());
        assert_eq!(c.apply(&v(&[1.0, 2.0]), &v(&[1.0, 1.0])), v(&[2.0, 5.0]));
    }

    #[test]
    fn gd_examples() {
        let obj = half_square();
        assert_eq!(gd_step(&v(&[0.0]), 0.5, &obj).unwrap(), v(&[0.0]));
        assert_eq!(gd_step(&v(&[1.0]), 0.5, &obj).unwrap(), v(&[0.5]));

        let obj = Quadratic::diagonal(&[1.0, 4.0]).unwrap();
        let x = v(&[1.0, 0.0]);
        let next = gd_step(&x, 2.0 / 5.0, &obj).unwrap();
        assert_relative_eq!(next.norm() / x.norm(), 0.6, epsilon = 1e-15);
        assert!(gd_step(&x, 0.0, &obj).is_err());
    }

    #[test]
    fn nag_examples() {
        let obj = half_square();
        let x0 = v(&[1.0]);
        let (x1, y1) = nag_step(&x0, &x0, &x0, 0.1, 0.9, &obj).unwrap();
        assert_eq!(x1, y1);
        let (x2, _) = nag_step(&x1, &y1, &x0, 0.1, 0.9, &obj).unwrap();
        assert_relative_eq!(x2[0], 0.72, epsilon = 1e-15);

        let (xb, _) = nag_step(&v(&[1.0]), &v(&[3.0]), &v(&[2.0]), 0.1, 0.0, &obj).unwrap();
        assert_eq!(xb, gd_step(&v(&[1.0]), 0.1, &obj).unwrap());
        assert!(nag_step(&x0, &x0, &x0, 0.1, 1.0, &obj).is_err());
    }

    #[test]
    fn heavy_ball_examples() {
        let obj = half_square();
        let x = v(&[1.0]);
        assert_relative_eq!(heavy_ball_step(&x, &x, 0.1, 0.5, &obj).unwrap()[0], 0.9);
        assert_eq!(
            heavy_ball_step(&x, &v(&[7.0]), 0.1, 0.0, &obj).unwrap(),
            gd_step(&x, 0.1, &obj).unwrap()
        );
        let z = v(&[0.0]);
        assert_eq!(heavy_ball_step(&z, &z, 0.1, 0.5, &obj).unwrap(), z);
    }

    #[test]
    fn igahd_reduces_to_gd_when_damping_vanishes() {
        // alpha = n makes alpha_n = 0; beta1 = 0 removes the Hessian terms.
        let obj = Quadratic::diagonal(&[1.0, 2.0]).unwrap();
        let x = v(&[1.0, -1.0]);
        let x_prev = v(&[0.3, 0.2]);
        let g_prev = v(&[5.0, 5.0]);
        let (x1, g) = igahd_step(&x, &x_prev, &g_prev, 2, 0.1, 2.0, 0.0, &obj).unwrap();
        assert_eq!(x1, gd_step(&x, 0.1, &obj).unwrap());
        assert_eq!(g, obj.gradient(&x));
    }

    #[test]
    fn igahd_stationary_and_counter() {
        let obj = half_square();
        let z = v(&[0.0]);
        let (x1, _) = igahd_step(&z, &z, &z, 1, 0.01, 3.0, 0.2, &obj).unwrap();
        assert_eq!(x1, z);
        assert!(igahd_step(&z, &z, &z, 0, 0.01, 3.0, 0.2, &obj).is_err());
        assert!(igahd_step(&z, &z, &z, 1, 0.01, 3.0, 0.3, &obj).is_err());
    }

    #[test]
    fn igahd_matches_scalar_transcription() {
        // Independent scalar transcription of the two displayed formulas.
        let tau: f64 = 0.01;
        let alpha = 3.0;
        let beta1 = 2.0 * tau.sqrt();
        let grad = |x: f64| x;
        let (xn, xp, n) = (1.0_f64, 1.0_f64, 1.0_f64);
        let alpha_n = 1.0 - alpha / n;
        let y = xn + alpha_n * (xn - xp)
            - beta1 * tau.sqrt() * (grad(xn) - grad(xp))
            - beta1 * tau.sqrt() / n * grad(xp);
        let expected = y - tau * grad(y);
        // y = 1 - 0.2 * 0.1 * 1 = 0.98, x+ = 0.98 * 0.99
        assert_relative_eq!(expected, 0.9702, epsilon = 1e-15);

        let obj = half_square();
        let one = v(&[1.0]);
        let (x1, _) = igahd_step(&one, &one, &one, 1, tau, alpha, beta1, &obj).unwrap();
        assert_relative_eq!(x1[0], expected, epsilon = 1e-15);
    }

    #[test]
    fn igahd_sc_examples() {
        let obj = half_square();
        let z = v(&[0.0]);
        let (x1, _) = igahd_sc_step(&z, &z, &z, 1.0, 0.25, 1.0, &obj).unwrap();
        assert_eq!(x1, z);

        let one = v(&[1.0]);
        let (x1, g) = igahd_sc_step(&one, &one, &one, 1.0, 0.25, 1.0, &obj).unwrap();
        assert_relative_eq!(x1[0], 5.0 / 6.0, epsilon = 1e-15);
        assert_eq!(g, one);

        // m1 tau = 1 kills the momentum term
        let (x1, _) =
            igahd_sc_step(&v(&[2.0]), &v(&[1.0]), &v(&[2.0]), 1.0, 1.0, 0.5, &obj).unwrap();
        assert_relative_eq!(x1[0], 2.0 - 0.5 * 2.0, epsilon = 1e-15);

        assert!(igahd_sc_step(&one, &one, &one, 1.0, 0.25, 1.5, &obj).is_err());
    }

    #[test]
    fn beta2_examples() {
        assert_relative_eq!(compute_beta2(1.0, 1.0).unwrap(), 0.15, epsilon = 1e-15);
        let tau: f64 = 0.04;
        assert_relative_eq!(
            compute_beta2(1e-14, tau).unwrap(),
            tau.sqrt() / 4.0,
            epsilon = 1e-8
        );
        assert!(compute_beta2(1.0, 25.0).is_err());
        assert!(compute_beta2(0.0, 1.0).is_err());
    }

    /// `sqrt(m1)/(8 b) = (sqrt(m1)/(2 tau) + k/sqrt(tau)) / (2 b m1 + 1/sqrt(tau) + sqrt(m1)/2)`
    /// with `k` the middle numerator term.
    fn balance_residual(m1: f64, tau: f64, b: f64, k: f64) -> f64 {
        let lhs = m1.sqrt() / (8.0 * b);
        let rhs = (m1.sqrt() / (2.0 * tau) + k / tau.sqrt())
            / (2.0 * b * m1 + 1.0 / tau.sqrt() + m1.sqrt() / 2.0);
        (lhs - rhs).abs() / lhs.abs()
    }

    #[test]
    fn beta2_balances_stepsize_bounds() {
        let b = compute_beta2(1.0, 0.0016).unwrap();
        assert!(balance_residual(1.0, 0.0016, b, 1.0) <= 1e-12);
        for &(m1, tau) in &[(0.1, 0.55), (1.7, 0.0016), (0.37, 0.2)] {
            let b = compute_beta2(m1, tau).unwrap();
            assert!(
                balance_residual(m1, tau, b, m1) <= 1e-12,
                "m1={m1} tau={tau}"
            );
        }
    }

    #[test]
    fn gradient_budget_per_step() {
        let obj = Counting::new(Quadratic::diagonal(&[1.0, 2.0]).unwrap());
        let x = v(&[1.0, 1.0]);
        let params = PddParams::new(0.1, 0.1, 1.0, 1.0, 1.0).unwrap();

        pdd_step(&PddState::new(x.clone()), &params, &obj).unwrap();
        assert_eq!(obj.gradient_calls(), 1);
        obj.reset();
        gd_step(&x, 0.1, &obj).unwrap();
        assert_eq!(obj.gradient_calls(), 1);
        obj.reset();
        nag_step(&x, &x, &x, 0.1, 0.5, &obj).unwrap();
        assert_eq!(obj.gradient_calls(), 1);
        obj.reset();
        heavy_ball_step(&x, &x, 0.1, 0.5, &obj).unwrap();
        assert_eq!(obj.gradient_calls(), 1);
        obj.reset();
        igahd_sc_step(&x, &x, &x, 1.0, 0.1, 0.1, &obj).unwrap();
        assert_eq!(obj.gradient_calls(), 1);
        obj.reset();
        igahd_step(&x, &x, &x, 1, 0.01, 3.0, 0.1, &obj).unwrap();
        assert_eq!(obj.gradient_calls(), 2);
    }

    #[test]
    fn run_stops_at_minimizer() {
        let obj = Quadratic::diagonal(&[1.0, 2.0]).unwrap();
        let traj = run_optimizer(
            &obj,
            &Method::gd(0.1),
            &Vector::zeros(2),
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.iterations, 0);
        assert_eq!(traj.records.len(), 1);
        assert!(traj.converged);
        assert_eq!(traj.last().dist_to_min, Some(0.0));
    }

    #[test]
    fn run_gd_gradient_decreases_monotonically() {
        let obj = Quadratic::diagonal(&[0.1, 3.9]).unwrap();
        let opts = RunOptions {
            max_iter: 500,
            grad_tol: 1e-12,
            record_every: 1,
        };
        let traj = run_optimizer(&obj, &Method::gd(0.5), &v(&[1.0, 1.0]), opts).unwrap();
        for w in traj.records.windows(2) {
            assert!(w[1].grad_norm < w[0].grad_norm);
        }
    }

    #[test]
    fn run_records_every_k_plus_final() {
        let obj = Quadratic::diagonal(&[0.1, 3.9]).unwrap();
        let opts = RunOptions {
            max_iter: 25,
            grad_tol: 0.0,
            record_every: 10,
        };
        let traj = run_optimizer(&obj, &Method::gd(0.5), &v(&[1.0, 1.0]), opts).unwrap();
        let iters: Vec<usize> = traj.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![0, 10, 20, 25]);
        assert!(!traj.converged);
    }

    #[test]
    fn run_flags_divergence() {
        let obj = Quadratic::diagonal(&[1.0, 4.0]).unwrap();
        let opts = RunOptions {
            max_iter: 10_000,
            grad_tol: 1e-10,
            record_every: 100,
        };
        let traj = run_optimizer(&obj, &Method::gd(10.0), &v(&[1.0, 1.0]), opts).unwrap();
        assert!(traj.diverged);
        assert!(!traj.converged);
        assert!(traj.iterations < 10_000);
    }

    #[test]
    fn run_rejects_bad_options() {
        let obj = half_square();
        let opts = RunOptions {
            max_iter: 0,
            ..RunOptions::default()
        };
        assert!(run_optimizer(&obj, &Method::gd(0.1), &v(&[1.0]), opts).is_err());
        assert!(run_optimizer(
            &obj,
            &Method::gd(0.1),
            &v(&[1.0, 1.0]),
            RunOptions::default()
        )
        .is_err());
    }

    #[test]
    fn nag_with_zero_momentum_is_gd_bitwise() {
        let obj = Rosenbrock::new(1.0, 100.0, 2).unwrap();
        let opts = RunOptions {
            max_iter: 2000,
            grad_tol: 0.0,
            record_every: 1,
        };
        let x0 = v(&[-1.2, 1.0]);
        let a = run_optimizer(&obj, &Method::gd(1e-3), &x0, opts).unwrap();
        let b = run_optimizer(
            &obj,
            &Method::Nag {
                tau: 1e-3,
                beta: 0.0,
            },
            &x0,
            opts,
        )
        .unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_x, b.final_x);
    }

    #[test]
    fn run_pdd_uses_zero_dual_by_default() {
        let obj = half_square();
        let params = PddParams::new(0.1, 0.1, 1.0, 1.0, 1.0).unwrap();
        let opts = RunOptions {
            max_iter: 1,
            grad_tol: 0.0,
            record_every: 1,
        };
        let traj = run_optimizer(&obj, &Method::Pdd(params.clone()), &v(&[1.0]), opts).unwrap();
        let manual = pdd_step(&PddState::new(v(&[1.0])), &params, &obj).unwrap();
        assert_eq!(traj.final_x, manual.x);
        assert_eq!(traj.final_p.unwrap(), manual.p);
    }
}
