//! Differentiable objectives and the benchmark problem suite.
//!
//! Every problem implements [`Objective`]. Problems with a cheap closed-form
//! Hessian return it from [`Objective::hessian`]; the others (Rosenbrock,
//! Ackley) expose gradients only and callers that need curvature use
//! [`fd_hessian`] or [`hessian_or_fd`].

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{asymmetry, ensure_len, ensure_square, is_positive_definite, sym};
use crate::{Matrix, PddError, Result, Vector};

/// Relative tolerance used when checking that user matrices are symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

/// A smooth scalar function with an analytic gradient.
///
/// Implementations assume `x.len() == self.dim()`; use [`check_dim`] at API
/// boundaries.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector;

    /// Analytic Hessian, when the problem provides one.
    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        None
    }

    /// Known global minimizer, when there is a closed form for it.
    fn minimizer(&self) -> Option<Vector> {
        None
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        (**self).hessian(x)
    }
    fn minimizer(&self) -> Option<Vector> {
        (**self).minimizer()
    }
}

/// Value, gradient and (optionally) Hessian at one point.
#[derive(Debug, Clone)]
pub struct Eval {
    pub f: f64,
    pub g: Vector,
    pub h: Option<Matrix>,
}

pub fn check_dim(obj: &dyn Objective, x: &Vector) -> Result<()> {
    ensure_len(x, obj.dim())
}

/// Evaluates `obj` at `x` after checking the dimension.
pub fn evaluate(obj: &dyn Objective, x: &Vector) -> Result<Eval> {
    check_dim(obj, x)?;
    Ok(Eval {
        f: obj.value(x),
        g: obj.gradient(x),
        h: obj.hessian(x),
    })
}

fn check_symmetric(q: &Matrix) -> Result<()> {
    ensure_square(q)?;
    let scale = q.amax().max(1.0);
    let asym = asymmetry(q);
    if asym > SYMMETRY_TOL * scale {
        return Err(PddError::NotSymmetric(asym));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

/// `f(x) = 1/2 x^T Q x` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: Matrix,
}

impl Quadratic {
    pub fn new(q: Matrix) -> Result<Self> {
        check_symmetric(&q)?;
        if !is_positive_definite(&q) {
            return Err(PddError::NotPositiveDefinite);
        }
        Ok(Self { q })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(entries)))
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }
}

impl Objective for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }
    fn dim(&self) -> usize {
        self.q.nrows()
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x))
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.q * x
    }
    fn hessian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.q.clone())
    }
    fn minimizer(&self) -> Option<Vector> {
        Some(Vector::zeros(self.dim()))
    }
}

pub fn quadratic_eval(q: &Matrix, x: &Vector) -> Result<Eval> {
    let obj = Quadratic::new(q.clone())?;
    evaluate(&obj, x)
}

// ---------------------------------------------------------------------------
// Regularized log-sum-exp
// ---------------------------------------------------------------------------

/// `f(x) = log sum_i exp(q_i^T x) + 1/2 x^T Q x`, where `q_i^T` is row `i`
/// of a symmetric, strictly diagonally dominant `Q`.
#[derive(Debug, Clone)]
pub struct RegLogSumExp {
    q: Matrix,
}

impl RegLogSumExp {
    pub fn new(q: Matrix) -> Result<Self> {
        check_symmetric(&q)?;
        for i in 0..q.nrows() {
            let off: f64 = (0..q.ncols())
                .filter(|&j| j != i)
                .map(|j| q[(i, j)].abs())
                .sum();
            if q[(i, i)] <= off {
                return Err(PddError::invalid(format!(
                    "row {i} of Q is not strictly diagonally dominant"
                )));
            }
        }
        Ok(Self { q })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Softmax weights of `Qx` and the stabilized log-sum-exp value.
    fn softmax(&self, x: &Vector) -> (Vector, f64) {
        let z = &self.q * x;
        let zmax = z.max();
        let e = z.map(|zi| (zi - zmax).exp());
        let total = e.sum();
        (e / total, zmax + total.ln())
    }
}

impl Objective for RegLogSumExp {
    fn name(&self) -> &str {
        "logsumexp"
    }
    fn dim(&self) -> usize {
        self.q.nrows()
    }
    fn value(&self, x: &Vector) -> f64 {
        let (_, lse) = self.softmax(x);
        lse + 0.5 * x.dot(&(&self.q * x))
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let (s, _) = self.softmax(x);
        &self.q * (s + x)
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let (s, _) = self.softmax(x);
        let w = Matrix::from_diagonal(&s) - &s * s.transpose();
        let h = &self.q * w * &self.q + &self.q;
        Some(sym(&h))
    }
}

pub fn reg_log_sum_exp_eval(q: &Matrix, x: &Vector) -> Result<Eval> {
    let obj = RegLogSumExp::new(q.clone())?;
    evaluate(&obj, x)
}

/// Seeded symmetric `Q` with `Q_ii > sum_{j != i} |Q_ij|`.
///
/// Off-diagonals are uniform on `(-1, 1) / n`; each diagonal entry is its row's
/// absolute off-diagonal sum plus a uniform draw from `[1, 2)`.
pub fn make_diag_dominant_q(n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(PddError::invalid("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(-1.0..1.0) / n as f64;
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)].abs()).sum();
        q[(i, i)] = off + rng.random_range(1.0..2.0);
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Quadratic minus cosine
// ---------------------------------------------------------------------------

/// `f(x) = |x|^2 - cos(c^T x)`. For `|c|^2 < 2` the Hessian is bounded
/// between `(2 - |c|^2) I` and `(2 + |c|^2) I`.
#[derive(Debug, Clone)]
pub struct QuadMinusCos {
    c: Vector,
}

impl QuadMinusCos {
    pub fn new(c: Vector) -> Self {
        let c2 = c.norm_squared();
        if c2 >= 2.0 {
            log::warn!("|c|^2 = {c2} >= 2: quadratic minus cosine is no longer strongly convex");
        }
        Self { c }
    }

    /// Seeded random direction scaled so that `|c|^2 = norm_sq`.
    pub fn random(n: usize, norm_sq: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(PddError::invalid("n must be at least 1"));
        }
        if !(norm_sq > 0.0) {
            return Err(PddError::invalid("|c|^2 must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = dir.normalize() * norm_sq.sqrt();
        Ok(Self::new(c))
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }
}

impl Objective for QuadMinusCos {
    fn name(&self) -> &str {
        "quadcos"
    }
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn value(&self, x: &Vector) -> f64 {
        x.norm_squared() - self.c.dot(x).cos()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        x * 2.0 + &self.c * self.c.dot(x).sin()
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        let n = self.dim();
        Some(Matrix::identity(n, n) * 2.0 + &self.c * self.c.transpose() * self.c.dot(x).cos())
    }
    fn minimizer(&self) -> Option<Vector> {
        Some(Vector::zeros(self.dim()))
    }
}

pub fn quad_minus_cos_eval(c: &Vector, x: &Vector) -> Result<Eval> {
    evaluate(&QuadMinusCos::new(c.clone()), x)
}

// ---------------------------------------------------------------------------
// Rosenbrock
// ---------------------------------------------------------------------------

/// Coupled Rosenbrock: `sum_{i<N} (a - x_i)^2 + b (x_{i+1} - x_i^2)^2`.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    a: f64,
    b: f64,
    n: usize,
}

impl Rosenbrock {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(PddError::invalid("Rosenbrock needs N >= 2"));
        }
        Ok(Self { a, b, n })
    }
}

impl Objective for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &Vector) -> f64 {
        (0..self.n - 1)
            .map(|i| {
                let r = self.a - x[i];
                let s = x[i + 1] - x[i] * x[i];
                r * r + self.b * s * s
            })
            .sum()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let mut g = Vector::zeros(self.n);
        for i in 0..self.n - 1 {
            let s = x[i + 1] - x[i] * x[i];
            g[i] += -2.0 * (self.a - x[i]) - 4.0 * self.b * x[i] * s;
            g[i + 1] += 2.0 * self.b * s;
        }
        g
    }
    fn minimizer(&self) -> Option<Vector> {
        if self.n == 2 {
            Some(Vector::from_vec(vec![self.a, self.a * self.a]))
        } else if self.a == 1.0 {
            Some(Vector::from_element(self.n, 1.0))
        } else {
            None
        }
    }
}

pub fn rosenbrock_eval(a: f64, b: f64, n: usize, x: &Vector) -> Result<Eval> {
    evaluate(&Rosenbrock::new(a, b, n)?, x)
}

// ---------------------------------------------------------------------------
// Ackley
// ---------------------------------------------------------------------------

/// Two-dimensional Ackley function; global minimum 0 at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ackley;

impl Objective for Ackley {
    fn name(&self) -> &str {
        "ackley"
    }
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &Vector) -> f64 {
        use std::f64::consts::{E, PI};
        let r = (0.5 * (x[0] * x[0] + x[1] * x[1])).sqrt();
        let c = 0.5 * ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos());
        -20.0 * (-0.2 * r).exp() - c.exp() + E + 20.0
    }
    fn gradient(&self, x: &Vector) -> Vector {
        use std::f64::consts::PI;
        let r = (0.5 * (x[0] * x[0] + x[1] * x[1])).sqrt();
        let c = 0.5 * ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos());
        let ec = c.exp();
        // the radial term has a cone point at the origin; use the zero subgradient
        let radial = if r > 0.0 {
            2.0 * (-0.2 * r).exp() / r
        } else {
            0.0
        };
        Vector::from_fn(2, |i, _| radial * x[i] + PI * (2.0 * PI * x[i]).sin() * ec)
    }
    fn minimizer(&self) -> Option<Vector> {
        Some(Vector::zeros(2))
    }
}

pub fn ackley_eval(x: &Vector) -> Result<Eval> {
    evaluate(&Ackley, x)
}

// ---------------------------------------------------------------------------
// Wrappers
// ---------------------------------------------------------------------------

/// `scale * f(x)`. Useful to bring a problem's curvature into a range where
/// parameter recipes that assume `mu <= 1` apply.
#[derive(Debug, Clone)]
pub struct Scaled<O> {
    inner: O,
    scale: f64,
    name: String,
}

impl<O: Objective> Scaled<O> {
    pub fn new(inner: O, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PddError::invalid("scale must be positive and finite"));
        }
        let name = format!("{}*{scale}", inner.name());
        Ok(Self { inner, scale, name })
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Objective> Objective for Scaled<O> {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.scale * self.inner.value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.inner.gradient(x) * self.scale
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        self.inner.hessian(x).map(|h| h * self.scale)
    }
    fn minimizer(&self) -> Option<Vector> {
        self.inner.minimizer()
    }
}

/// Counts gradient and value evaluations of the wrapped objective.
#[derive(Debug)]
pub struct Counting<O> {
    inner: O,
    gradients: AtomicUsize,
    values: AtomicUsize,
}

impl<O: Objective> Counting<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            gradients: AtomicUsize::new(0),
            values: AtomicUsize::new(0),
        }
    }

    pub fn gradient_calls(&self) -> usize {
        self.gradients.load(Ordering::Relaxed)
    }

    pub fn value_calls(&self) -> usize {
        self.values.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.gradients.store(0, Ordering::Relaxed);
        self.values.store(0, Ordering::Relaxed);
    }
}

impl<O: Objective> Objective for Counting<O> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(x)
    }
    fn hessian(&self, x: &Vector) -> Option<Matrix> {
        self.inner.hessian(x)
    }
    fn minimizer(&self) -> Option<Vector> {
        self.inner.minimizer()
    }
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

/// Error measure shared by the gradient and Hessian checks: absolute error
/// scaled by the larger magnitude, floored at one.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn fd_gradient(obj: &dyn Objective, x: &Vector, h: f64) -> Vector {
    let mut xp = x.clone();
    Vector::from_fn(x.len(), |i, _| {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = obj.value(&xp);
        xp[i] = xi - h;
        let fm = obj.value(&xp);
        xp[i] = xi;
        (fp - fm) / (2.0 * h)
    })
}

/// Central differences of the gradient, symmetrized. The step for column
/// `i` is `h * (1 + |x_i|)`.
pub fn fd_hessian_with_step(obj: &dyn Objective, x: &Vector, h: f64) -> Matrix {
    let n = x.len();
    let mut m = Matrix::zeros(n, n);
    let mut xp = x.clone();
    for i in 0..n {
        let xi = x[i];
        let step = h * (1.0 + xi.abs());
        xp[i] = xi + step;
        let gp = obj.gradient(&xp);
        xp[i] = xi - step;
        let gm = obj.gradient(&xp);
        xp[i] = xi;
        m.set_column(i, &((gp - gm) / (2.0 * step)));
    }
    sym(&m)
}

pub fn fd_hessian(obj: &dyn Objective, x: &Vector) -> Matrix {
    fd_hessian_with_step(obj, x, 1e-5)
}

/// Analytic Hessian when available, otherwise [`fd_hessian`].
pub fn hessian_or_fd(obj: &dyn Objective, x: &Vector) -> Matrix {
    obj.hessian(x).unwrap_or_else(|| fd_hessian(obj, x))
}

/// Maximum over coordinates of the error between the analytic gradient and
/// central differences of `f` with step `h`.
///
/// Errors are `|a - b| / max(|a|, |b|, 1)`, so they are relative for large
/// entries and absolute near zero.
pub fn check_gradient(obj: &dyn Objective, x: &Vector, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(PddError::invalid("finite-difference step must be positive"));
    }
    check_dim(obj, x)?;
    let g = obj.gradient(x);
    let fd = fd_gradient(obj, x, h);
    Ok(g.iter()
        .zip(fd.iter())
        .map(|(&a, &b)| rel_err(a, b))
        .fold(0.0, f64::max))
}

/// Same contract as [`check_gradient`] for the Hessian against central
/// differences of the gradient. `None` when there is no analytic Hessian.
pub fn check_hessian(obj: &dyn Objective, x: &Vector, h: f64) -> Result<Option<f64>> {
    if !(h > 0.0) {
        return Err(PddError::invalid("finite-difference step must be positive"));
    }
    check_dim(obj, x)?;
    let Some(hess) = obj.hessian(x) else {
        return Ok(None);
    };
    let mut xp = x.clone();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let gp = obj.gradient(&xp);
        xp[i] = xi - h;
        let gm = obj.gradient(&xp);
        xp[i] = xi;
        for j in 0..x.len() {
            worst = worst.max(rel_err(hess[(j, i)], (gp[j] - gm[j]) / (2.0 * h)));
        }
    }
    Ok(Some(worst))
}
