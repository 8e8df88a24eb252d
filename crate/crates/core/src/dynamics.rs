//! Continuous-time PDD dynamics.
//!
//! ```text
//! p' = A grad f(x) - eps A p
//! x' = -C(x) (p + gamma (A grad f(x) - eps A p))
//! ```
//!
//! `A` is a positive scalar times the identity. Eliminating `p` for constant
//! `C` gives the second-order equation
//! `x'' + (eps A + gamma C A hess f(x)) x' + C A grad f(x) = 0`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::linalg::{all_finite, ensure_len};
use crate::objective::{check_dim, hessian_or_fd, Objective};
use crate::optimizers::{pdd_step, PddParams, PddState, Preconditioner};
use crate::{PddError, Result, Vector};

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Dual damping coefficient, constant or a function of time.
#[derive(Clone)]
pub enum Epsilon {
    Constant(f64),
    /// Only evaluated at `t > 0`.
    TimeDependent(Arc<ScalarFn>),
}

impl Epsilon {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Self::Constant(e) => *e,
            Self::TimeDependent(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }
}

impl fmt::Debug for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(e) => write!(f, "Constant({e})"),
            Self::TimeDependent(_) => write!(f, "TimeDependent"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynParams {
    pub a: f64,
    pub epsilon: Epsilon,
    pub gamma: f64,
    pub precond: Preconditioner,
}

impl DynParams {
    pub fn new(a: f64, epsilon: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            a,
            epsilon: Epsilon::Constant(epsilon),
            gamma,
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
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(PddError::invalid("A must be positive"));
        }
        if let Epsilon::Constant(e) = self.epsilon {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(PddError::invalid("epsilon must be non-negative"));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(PddError::invalid("gamma must be non-negative"));
        }
        Ok(())
    }
}

/// Right-hand side of the PDD system at `(x, p, t)`. Returns `(x', p')`.
pub fn pdd_vector_field(
    x: &Vector,
    p: &Vector,
    t: f64,
    params: &DynParams,
    obj: &dyn Objective,
) -> Result<(Vector, Vector)> {
    check_dim(obj, x)?;
    ensure_len(p, x.len())?;
    Ok(field(x, p, t, params, obj))
}

fn field(
    x: &Vector,
    p: &Vector,
    t: f64,
    params: &DynParams,
    obj: &dyn Objective,
) -> (Vector, Vector) {
    let eps = params.epsilon.at(t);
    let dp = obj.gradient(x) * params.a - p * (eps * params.a);
    let dx = -params.precond.apply(x, &(p + &dp * params.gamma));
    (dx, dp)
}

/// The named special cases of the PDD system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    /// `x'' + eps x' + gamma hess f x' + grad f = 0`.
    HessianDamping,
    /// `x'' + eps x' + grad f = 0`.
    HeavyBall,
    /// `x'' + (3/t) x' + grad f = 0`.
    Nesterov,
}

impl FromStr for SpecialCase {
    type Err = PddError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "hessian_damping" => Ok(Self::HessianDamping),
            "heavy_ball" => Ok(Self::HeavyBall),
            "nesterov" => Ok(Self::Nesterov),
            _ => Err(PddError::Unknown {
                kind: "special case",
                name: s.to_string(),
            }),
        }
    }
}

/// Parameters with `C = A = I` realizing `kind`. `Nesterov` ignores `eps`
/// and `gamma`.
pub fn make_special_case(kind: SpecialCase, eps: f64, gamma: f64) -> Result<DynParams> {
    let params = match kind {
        SpecialCase::HessianDamping => {
            if gamma == 0.0 {
                return Err(PddError::invalid("Hessian damping needs gamma != 0"));
            }
            DynParams::new(1.0, eps, gamma)?
        }
        SpecialCase::HeavyBall => DynParams::new(1.0, eps, 0.0)?,
        SpecialCase::Nesterov => DynParams {
            a: 1.0,
            epsilon: Epsilon::TimeDependent(Arc::new(|t| 3.0 / t)),
            gamma: 0.0,
            precond: Preconditioner::Identity,
        },
    };
    Ok(params)
}

/// Sampled solution of the PDD system on a uniform grid.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub xs: Vec<Vector>,
    pub ps: Vec<Vector>,
    pub dt: f64,
    pub diverged: bool,
}

impl OdeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `|(x, p)|` at sample `k`.
    pub fn state_norm(&self, k: usize) -> f64 {
        (self.xs[k].norm_squared() + self.ps[k].norm_squared()).sqrt()
    }
}

/// Fixed-step classical Runge-Kutta. Time-dependent damping starts at
/// `t0 = dt`, constant damping at `t0 = 0`. The final time is the last grid
/// point not beyond `t_end` (up to rounding).
pub fn integrate_rk4(
    params: &DynParams,
    obj: &dyn Objective,
    x0: &Vector,
    p0: &Vector,
    t_end: f64,
    dt: f64,
) -> Result<OdeTrajectory> {
    params.validate()?;
    check_dim(obj, x0)?;
    ensure_len(p0, x0.len())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PddError::invalid("dt must be positive"));
    }
    if !(t_end >= dt) {
        return Err(PddError::invalid("t_end must be at least dt"));
    }
    let t0 = if params.epsilon.is_constant() {
        0.0
    } else {
        dt
    };
    let steps = ((t_end - t0) / dt + 1e-9).floor() as usize;

    let mut times = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ps = Vec::with_capacity(steps + 1);
    times.push(t0);
    xs.push(x0.clone());
    ps.push(p0.clone());
    let mut diverged = false;

    let mut x = x0.clone();
    let mut p = p0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let h = 0.5 * dt;
        let (k1x, k1p) = field(&x, &p, t, params, obj);
        let (k2x, k2p) = field(&(&x + &k1x * h), &(&p + &k1p * h), t + h, params, obj);
        let (k3x, k3p) = field(&(&x + &k2x * h), &(&p + &k2p * h), t + h, params, obj);
        let (k4x, k4p) = field(&(&x + &k3x * dt), &(&p + &k3p * dt), t + dt, params, obj);
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0);
        if !all_finite(&x) || !all_finite(&p) {
            diverged = true;
            break;
        }
        times.push(t0 + (k + 1) as f64 * dt);
        xs.push(x.clone());
        ps.push(p.clone());
    }
    Ok(OdeTrajectory {
        times,
        xs,
        ps,
        dt,
        diverged,
    })
}

/// Largest residual of the second-order equation over the interior samples
/// of `traj`, with `x'` and `x''` from central differences.
///
/// Requires a constant preconditioner. Time-dependent damping is accepted
/// only with `gamma = 0`, where no derivative of `eps` enters.
pub fn second_order_residual(
    traj: &OdeTrajectory,
    params: &DynParams,
    obj: &dyn Objective,
) -> Result<f64> {
    if traj.len() < 3 {
        return Err(PddError::invalid("residual needs at least 3 samples"));
    }
    if !params.precond.is_constant() {
        return Err(PddError::invalid(
            "residual check needs a constant preconditioner",
        ));
    }
    if !params.epsilon.is_constant() && params.gamma != 0.0 {
        return Err(PddError::invalid(
            "time-dependent damping with gamma != 0 is not supported by the residual check",
        ));
    }
    check_dim(obj, &traj.xs[0])?;
    let dim = traj.xs[0].len();
    let c = params.precond.matrix_at(&traj.xs[0], dim);
    let dt = traj.dt;
    let mut worst = 0.0_f64;
    for k in 1..traj.len() - 1 {
        let (xm, x, xp) = (&traj.xs[k - 1], &traj.xs[k], &traj.xs[k + 1]);
        let v = (xp - xm) / (2.0 * dt);
        let acc = (xp - x * 2.0 + xm) / (dt * dt);
        let eps = params.epsilon.at(traj.times[k]);
        let mut r = acc + &v * (eps * params.a) + &c * obj.gradient(x) * params.a;
        if params.gamma != 0.0 {
            let hess = hessian_or_fd(obj, x);
            r += &c * (hess * v) * (params.gamma * params.a);
        }
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// One refinement level of [`discrete_continuous_consistency`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyPoint {
    pub tau: f64,
    /// `max_n |(x_n, p_n) - (x(n tau), p(n tau))|`.
    pub max_error: f64,
    /// The same distance at the final time only.
    pub endpoint_error: f64,
}

/// Compares discrete PDD iterates with `tau = sigma` and `omega = gamma / tau`
/// against an RK4 reference (`dt = tau / 16`) of the continuous system with
/// the same `A`, `eps`, `gamma` and `C`, sampled at times `n tau` up to
/// `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn discrete_continuous_consistency(
    obj: &dyn Objective,
    x0: &Vector,
    p0: &Vector,
    a: f64,
    eps: f64,
    gamma: f64,
    precond: &Preconditioner,
    taus: &[f64],
    t_end: f64,
) -> Result<Vec<ConsistencyPoint>> {
    if taus.is_empty() {
        return Err(PddError::Empty("step sizes"));
    }
    let dyn_params = DynParams::new(a, eps, gamma)?.with_precond(precond.clone());
    const SUBSTEPS: usize = 16;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let n = (t_end / tau).round() as usize;
        if n == 0 {
            return Err(PddError::invalid("t_end must be at least tau"));
        }
        let params = PddParams::new(tau, tau, a, eps, gamma / tau)?.with_precond(precond.clone());
        let reference = integrate_rk4(
            &dyn_params,
            obj,
            x0,
            p0,
            n as f64 * tau,
            tau / SUBSTEPS as f64,
        )?;
        if reference.diverged || reference.len() < n * SUBSTEPS + 1 {
            return Err(PddError::Diverged("reference trajectory"));
        }
        let mut state = PddState::with_dual(x0.clone(), p0.clone())?;
        let mut max_error = 0.0_f64;
        let mut endpoint_error = 0.0;
        for k in 1..=n {
            state = pdd_step(&state, &params, obj)?;
            let j = k * SUBSTEPS;
            let dx = &state.x - &reference.xs[j];
            let dp = &state.p - &reference.ps[j];
            let err = (dx.norm_squared() + dp.norm_squared()).sqrt();
            max_error = max_error.max(err);
            endpoint_error = err;
        }
        out.push(ConsistencyPoint {
            tau,
            max_error,
            endpoint_error,
        });
    }
    Ok(out)
}
