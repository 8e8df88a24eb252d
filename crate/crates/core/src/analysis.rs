//! Rate theory as executable checks.
//!
//! Covers the Lyapunov functional `I(x, p) = (|p|^2 + |grad f(x)|^2) / 2`,
//! closed-form rates of the linear system obtained on quadratics, the
//! continuous and discrete parameter recipes, and the matrices `N(x)` and
//! `H(x)` that govern one discrete step:
//!
//! ```text
//! (x+ - x, p+ - p) = -tau N(x) (grad f(x), p)
//! ```

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{ensure_len, spectral_norm, sym, sym_eigenvalues, sym_min_max};
use crate::objective::{check_dim, hessian_or_fd, Objective};
use crate::optimizers::{PddParams, PddState, Preconditioner};
use crate::{Matrix, PddError, Result, Vector};

/// `(|p|^2 + |grad f(x)|^2) / 2`.
pub fn lyapunov_i(obj: &dyn Objective, x: &Vector, p: &Vector) -> Result<f64> {
    check_dim(obj, x)?;
    ensure_len(p, x.len())?;
    Ok(lyapunov_with_gradient(&obj.gradient(x), p))
}

pub(crate) fn lyapunov_with_gradient(g: &Vector, p: &Vector) -> f64 {
    0.5 * (p.norm_squared() + g.norm_squared())
}

fn check_mu_l(mu: f64, l: f64) -> Result<()> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(PddError::invalid(format!(
            "need 0 < mu <= L, got mu={mu}, L={l}"
        )));
    }
    Ok(())
}

/// Certified continuous-time decay rate: `I(t) <= I(0) exp(-2 lambda t)`
/// whenever the spectrum of `C0 = hess f B hess f` lies in `[mu, L]`. May be
/// negative, in which case nothing is certified.
pub fn continuous_lambda(mu: f64, l: f64, gamma: f64, eps: f64, a: f64) -> Result<f64> {
    check_mu_l(mu, l)?;
    let cross = |m: f64| 0.5 * (a - m * (1.0 - eps * gamma * a)).abs();
    Ok([
        mu * gamma * a - cross(mu),
        l * gamma * a - cross(l),
        eps * a - cross(mu),
        eps * a - cross(l),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min))
}

/// `(gamma, eps, A) = (1/mu, 1, (mu+L)/(2+(mu+L) gamma))`, for which
/// [`continuous_lambda`] equals `mu/2`.
pub fn continuous_params(mu: f64, l: f64) -> Result<(f64, f64, f64)> {
    check_mu_l(mu, l)?;
    let gamma = 1.0 / mu;
    Ok((gamma, 1.0, (mu + l) / (2.0 + (mu + l) * gamma)))
}

/// Output of [`discrete_params`].
#[derive(Debug, Clone)]
pub struct DiscreteRecipe {
    pub params: PddParams,
    pub gamma: f64,
    /// Guaranteed per-step contraction of `I`.
    pub decay_factor: f64,
}

/// Discrete parameter recipe with a geometric decay certificate.
///
/// With `D = delta + 36 max(L', 1)`: `tau = sigma = mu / (4 D)`,
/// `gamma = (1 - sigma mu) / mu`, `eps = 1`, `A = (mu+L)/(2+(mu+L) gamma)`,
/// `omega = gamma / sigma` and the factor is `1 - mu^2 / (32 D)`.
pub fn discrete_params(mu: f64, l: f64, lp: f64, delta: f64) -> Result<DiscreteRecipe> {
    check_mu_l(mu, l)?;
    if !(l <= lp && lp.is_finite()) {
        return Err(PddError::invalid(format!(
            "need L <= L', got L={l}, L'={lp}"
        )));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(PddError::invalid("delta must be non-negative"));
    }
    let denom = delta + 36.0 * lp.max(1.0);
    let tau = 0.25 * mu / denom;
    let sigma = tau;
    let gamma = (1.0 - sigma * mu) / mu;
    let a = (mu + l) / (2.0 + (mu + l) * gamma);
    let omega = gamma / sigma;
    let decay_factor = 1.0 - (mu * mu / 32.0) / denom;
    assert!(gamma * a < 1.0, "gamma*A = {} must be below 1", gamma * a);
    assert!(sigma < 1.0 / 36.0, "sigma = {sigma} must be below 1/36");
    Ok(DiscreteRecipe {
        params: PddParams::new(tau, sigma, a, 1.0, omega)?,
        gamma,
        decay_factor,
    })
}

// ---------------------------------------------------------------------------
// Quadratic spectral rates
// ---------------------------------------------------------------------------

/// One decoupled mode of the linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    /// Eigenvalue of `B Q A Q`.
    pub mu: f64,
    /// Paired eigenvalue of `A`.
    pub a: f64,
    pub roots: [Complex<f64>; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub modes: Vec<Mode>,
    /// Largest real part over all roots.
    pub alpha: f64,
    pub converges: bool,
}

/// Roots of `z^2 + b z + c` with `c > 0`, avoiding cancellation.
fn monic_roots(b: f64, c: f64) -> [Complex<f64>; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let r1 = -0.5 * (b + b.signum() * disc.sqrt());
        let r2 = if r1 != 0.0 { c / r1 } else { 0.0 };
        [Complex::new(r1, 0.0), Complex::new(r2, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex::new(-0.5 * b, im), Complex::new(-0.5 * b, -im)]
    }
}

/// Per-mode exponents of the PDD system on `f = x^T Q x / 2` with constant
/// `C = B Q` and diagonalizable `A`: each mode solves
/// `z^2 + z (eps a_i + gamma mu_i) + mu_i = 0`.
pub fn quadratic_spectral_rate(
    mus: &[f64],
    as_: &[f64],
    gamma: f64,
    eps: f64,
) -> Result<SpectralReport> {
    if mus.is_empty() {
        return Err(PddError::Empty("modes"));
    }
    if mus.len() != as_.len() {
        return Err(PddError::DimensionMismatch {
            expected: mus.len(),
            got: as_.len(),
        });
    }
    if let Some(bad) = mus.iter().find(|&&m| !(m > 0.0)) {
        return Err(PddError::invalid(format!(
            "mode eigenvalues must be positive, got {bad}"
        )));
    }
    let modes: Vec<Mode> = mus
        .iter()
        .zip(as_)
        .map(|(&mu, &a)| Mode {
            mu,
            a,
            roots: monic_roots(eps * a + gamma * mu, mu),
        })
        .collect();
    let alpha = modes
        .iter()
        .flat_map(|m| m.roots.iter().map(|r| r.re))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectralReport {
        modes,
        alpha,
        converges: alpha < 0.0,
    })
}

/// `[[-gamma B Q A Q, -B Q (I - gamma eps A)], [A Q, -eps A]]`, the linear
/// map `(x, p) -> (x', p')` for `f = x^T Q x / 2` and `C = B Q`.
pub fn quadratic_block_matrix(
    q: &Matrix,
    a: &Matrix,
    b: &Matrix,
    gamma: f64,
    eps: f64,
) -> Result<Matrix> {
    let n = q.nrows();
    for m in [q, a, b] {
        if m.nrows() != n || m.ncols() != n {
            return Err(PddError::DimensionMismatch {
                expected: n,
                got: m.nrows().max(m.ncols()),
            });
        }
    }
    let id = Matrix::identity(n, n);
    let bq = b * q;
    let mut out = Matrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n))
        .copy_from(&(&bq * a * q * (-gamma)));
    out.view_mut((0, n), (n, n))
        .copy_from(&(-(&bq * (&id - a * (gamma * eps)))));
    out.view_mut((n, 0), (n, n)).copy_from(&(a * q));
    out.view_mut((n, n), (n, n)).copy_from(&(a * (-eps)));
    Ok(out)
}

/// Optimal Hessian damping for `A = I`, `eps = 0` and mode spectrum
/// `[mu_n, mu_1]`. Returns `(gamma*, alpha)`.
pub fn optimal_gamma(mu1: f64, mun: f64) -> Result<(f64, f64)> {
    if !(mun > 0.0 && mu1 > mun) {
        return Err(PddError::invalid(format!(
            "need mu1 > mun > 0, got {mu1}, {mun}"
        )));
    }
    let kappa = mu1 / mun;
    let gamma = 2.0 * mu1.sqrt() / (mun * (2.0 * mu1 - mun)).sqrt();
    let alpha = -mun.sqrt() / (2.0 - 1.0 / kappa).sqrt();
    Ok((gamma, alpha))
}

// ---------------------------------------------------------------------------
// Discrete step matrices
// ---------------------------------------------------------------------------

/// `N(x)` and `H(x) = sym(diag(hess f, I) N(x))` at `x`. Needs an analytic
/// Hessian.
pub fn build_n_h(obj: &dyn Objective, x: &Vector, params: &PddParams) -> Result<(Matrix, Matrix)> {
    check_dim(obj, x)?;
    let hess = obj
        .hessian(x)
        .ok_or_else(|| PddError::MissingHessian(obj.name().to_string()))?;
    Ok(n_h_from_hessian(&hess, x, params))
}

fn n_h_from_hessian(hess: &Matrix, x: &Vector, params: &PddParams) -> (Matrix, Matrix) {
    let d = x.len();
    let c = params.precond.matrix_at(x, d);
    let (tau, sigma, a, eps) = (params.tau, params.sigma, params.a, params.epsilon);
    let gamma = params.gamma();
    let scale = 1.0 / (1.0 + sigma * eps * a);
    let id = Matrix::identity(d, d);
    let mut n = Matrix::zeros(2 * d, 2 * d);
    n.view_mut((0, 0), (d, d))
        .copy_from(&(&c * ((sigma * a + gamma * a) * scale)));
    n.view_mut((0, d), (d, d))
        .copy_from(&(&c * ((1.0 - eps * gamma * a) * scale)));
    n.view_mut((d, 0), (d, d))
        .copy_from(&(&id * (-(sigma / tau) * a * scale)));
    n.view_mut((d, d), (d, d))
        .copy_from(&(&id * ((sigma / tau) * eps * a * scale)));

    let mut left = Matrix::identity(2 * d, 2 * d);
    left.view_mut((0, 0), (d, d)).copy_from(hess);
    let h = sym(&(left * &n));
    (n, h)
}

/// `grad^3 f(x)[grad f(x)]`, by central differences of the Hessian along the
/// gradient with step `1e-5 (1 + |x|) / (1 + |grad f|)`.
pub fn third_derivative_along_gradient(obj: &dyn Objective, x: &Vector) -> Matrix {
    let g = obj.gradient(x);
    let h = 1e-5 * (1.0 + x.norm()) / (1.0 + g.norm());
    let hp = hessian_or_fd(obj, &(x + &g * h));
    let hm = hessian_or_fd(obj, &(x - &g * h));
    sym(&((hp - hm) / (2.0 * h)))
}

/// `N^T diag(grad^3 f grad f + (hess f)^2, I) N`, the Hessian of `I` seen
/// through one step.
fn step_curvature(obj: &dyn Objective, x: &Vector, hess: &Matrix, n: &Matrix) -> Matrix {
    let d = x.len();
    let t = third_derivative_along_gradient(obj, x);
    let mut hi = Matrix::identity(2 * d, 2 * d);
    hi.view_mut((0, 0), (d, d)).copy_from(&(t + hess * hess));
    sym(&(n.transpose() * hi * n))
}

/// Report of [`discrete_decay_check`].
#[derive(Debug, Clone)]
pub struct DiscreteRateReport {
    /// `min_n lambda_min(H(x_n))`; `None` without an analytic Hessian.
    pub lambda_min_h: Option<f64>,
    /// `max_n |N^T hess(I) N|_2`; `None` without an analytic Hessian.
    pub m_bound: Option<f64>,
    pub tau_recipe: f64,
    pub decay_factor: Option<f64>,
    /// `I(x_{n+1}, p_{n+1}) / I(x_n, p_n)`, zero when the denominator is.
    pub per_step_ratios: Vec<f64>,
    /// Every ratio is at most the decay factor (or 1 when none was given).
    pub all_within: bool,
}

/// Per-step Lyapunov ratios of a PDD trajectory plus the `H` and `N`
/// quantities along it.
pub fn discrete_decay_check(
    states: &[PddState],
    obj: &dyn Objective,
    params: &PddParams,
    decay_factor: Option<f64>,
) -> Result<DiscreteRateReport> {
    if states.is_empty() {
        return Err(PddError::Empty("trajectory"));
    }
    let mut values = Vec::with_capacity(states.len());
    let mut lambda_min_h: Option<f64> = None;
    let mut m_bound: Option<f64> = None;
    for s in states {
        check_dim(obj, &s.x)?;
        values.push(lyapunov_with_gradient(&obj.gradient(&s.x), &s.p));
        if let Some(hess) = obj.hessian(&s.x) {
            let (n, h) = n_h_from_hessian(&hess, &s.x, params);
            let lmin = sym_min_max(&h).0;
            let m = spectral_norm(&step_curvature(obj, &s.x, &hess, &n));
            lambda_min_h = Some(lambda_min_h.map_or(lmin, |v| v.min(lmin)));
            m_bound = Some(m_bound.map_or(m, |v| v.max(m)));
        }
    }
    let per_step_ratios: Vec<f64> = values
        .windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect();
    let cap = decay_factor.unwrap_or(1.0);
    let all_within = per_step_ratios.iter().all(|&r| r <= cap);
    Ok(DiscreteRateReport {
        lambda_min_h,
        m_bound,
        tau_recipe: params.tau,
        decay_factor,
        per_step_ratios,
        all_within,
    })
}

/// Sampled constants of the convergence assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimates {
    /// Smallest eigenvalue of `C0 = hess f B hess f` over the samples.
    pub mu: f64,
    /// Largest eigenvalue of `C0`.
    pub l: f64,
    /// Largest eigenvalue of `C^T (grad^3 f grad f + (hess f)^2) C`.
    pub lp: f64,
}

/// Estimates `(mu, L, L')` over `samples`. With `C` given directly,
/// `B = C (hess f)^{-1}` and `C0 = hess f C`, whose spectrum equals that of
/// `R^T (hess f) R` for `C = R R^T`.
pub fn estimate_constants(
    obj: &dyn Objective,
    precond: &Preconditioner,
    samples: &[Vector],
) -> Result<ConstantEstimates> {
    if samples.is_empty() {
        return Err(PddError::Empty("sample points"));
    }
    let mut mu = f64::INFINITY;
    let mut l = f64::NEG_INFINITY;
    let mut lp = f64::NEG_INFINITY;
    for x in samples {
        check_dim(obj, x)?;
        let d = x.len();
        let hess = hessian_or_fd(obj, x);
        if hess.clone().lu().determinant().abs() <= f64::EPSILON * hess.amax().powi(d as i32) {
            return Err(PddError::Singular("Hessian while recovering B"));
        }
        let c = precond.matrix_at(x, d);
        let root = c
            .clone()
            .cholesky()
            .ok_or(PddError::NotPositiveDefinite)?
            .l();
        let ev = sym_eigenvalues(&sym(&(root.transpose() * &hess * &root)));
        mu = mu.min(ev[0]);
        l = l.max(ev[d - 1]);

        let t = third_derivative_along_gradient(obj, x);
        let inner = sym(&(c.transpose() * (t + &hess * &hess) * &c));
        lp = lp.max(sym_min_max(&inner).1);
    }
    Ok(ConstantEstimates { mu, l, lp })
}

/// Sampled lower bound of the supremum of the third directional derivative
/// of `I` over unit directions. `I` is quadratic in `p`, so only the
/// x-directions matter; each is probed with a five-point stencil on
/// `phi(t) = |grad f(x + t v)|^2 / 2`.
pub fn sampled_d0_lower_bound(
    obj: &dyn Objective,
    samples: &[Vector],
    directions: usize,
    seed: u64,
) -> Result<f64> {
    if samples.is_empty() || directions == 0 {
        return Err(PddError::Empty("sample points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    for x in samples {
        check_dim(obj, x)?;
        let h = 1e-2 * (1.0 + x.norm());
        let phi = |t: f64, v: &Vector| 0.5 * obj.gradient(&(x + v * t)).norm_squared();
        for _ in 0..directions {
            let mut v = Vector::from_fn(x.len(), |_, _| rng.random_range(-1.0..1.0));
            let norm = v.norm();
            if norm == 0.0 {
                continue;
            }
            v /= norm;
            let third = (phi(2.0 * h, &v) - 2.0 * phi(h, &v) + 2.0 * phi(-h, &v)
                - phi(-2.0 * h, &v))
                / (2.0 * h * h * h);
            best = best.max(third.abs());
        }
    }
    Ok(best)
}

/// `x^T A x + y^T B y + x^T C y` for diagonal `A, B, C`.
pub fn block_quadratic_form(a: &[f64], b: &[f64], c: &[f64], x: &[f64], y: &[f64]) -> f64 {
    (0..a.len())
        .map(|i| a[i] * x[i] * x[i] + b[i] * y[i] * y[i] + c[i] * x[i] * y[i])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{make_diag_dominant_q, QuadMinusCos, Quadratic, RegLogSumExp, Scaled};
    use crate::optimizers::pdd_iterates;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn dense_alpha(m: &Matrix) -> f64 {
        m.complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn lyapunov_examples() {
        let obj = Quadratic::diagonal(&[1.0]).unwrap();
        assert_eq!(lyapunov_i(&obj, &v(&[0.0]), &v(&[0.0])).unwrap(), 0.0);
        assert_eq!(lyapunov_i(&obj, &v(&[1.0]), &v(&[1.0])).unwrap(), 1.0);
        let (x, p) = (v(&[0.4]), v(&[-0.7]));
        let diff = lyapunov_i(&obj, &x, &(&p * 2.0)).unwrap() - lyapunov_i(&obj, &x, &p).unwrap();
        assert_relative_eq!(diff, 1.5 * p.norm_squared(), epsilon = 1e-15);
    }

    #[test]
    fn lambda_special_parameters() {
        let (g, e, a) = continuous_params(1.0, 1.0).unwrap();
        assert_eq!((g, e), (1.0, 1.0));
        assert_relative_eq!(a, 0.5);
        assert_relative_eq!(
            continuous_lambda(1.0, 1.0, g, e, a).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn lambda_without_damping_certifies_nothing() {
        let (mu, l, a) = (0.5, 2.0, 3.0);
        let lam = continuous_lambda(mu, l, 0.0, 0.0, a).unwrap();
        let expected = -0.5 * f64::max((a - mu).abs(), (a - l).abs());
        assert_eq!(lam, expected);
        assert!(lam < 0.0);
        assert!(continuous_lambda(2.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn lambda_is_half_mu_with_recipe(mu in 0.01f64..1.0, spread in 1.0f64..50.0) {
            let l = mu * spread;
            let (g, e, a) = continuous_params(mu, l).unwrap();
            let lam = continuous_lambda(mu, l, g, e, a).unwrap();
            prop_assert!((lam - mu / 2.0).abs() <= 1e-14 * mu.max(1.0), "lam={lam}");
        }

        #[test]
        fn discrete_recipe_invariants(mu in 0.01f64..1.0, s1 in 1.0f64..5.0, s2 in 1.0f64..5.0, delta in 0.0f64..10.0) {
            let l = mu * s1;
            let r = discrete_params(mu, l, l * s2, delta).unwrap();
            prop_assert_eq!(r.params.tau, r.params.sigma);
            prop_assert_eq!(r.params.epsilon, 1.0);
            prop_assert!(r.gamma * r.params.a < 1.0);
            prop_assert!(r.decay_factor > 0.0 && r.decay_factor < 1.0);
            prop_assert!((r.params.gamma() - r.gamma).abs() <= 1e-12 * r.gamma);
        }

        #[test]
        fn block_form_is_nonpositive(
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 5;
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a: Vec<f64> = c.iter().map(|ci| -ci.abs() / 2.0 - rng.random_range(0.0..2.0)).collect();
            let b: Vec<f64> = c.iter().map(|ci| -ci.abs() / 2.0 - rng.random_range(0.0..2.0)).collect();
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
                prop_assert!(block_quadratic_form(&a, &b, &c, &x, &y) <= 1e-12);
            }
        }
    }

    #[test]
    fn discrete_recipe_examples() {
        let r = discrete_params(1.0, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(r.params.tau, 1.0 / 144.0, epsilon = 1e-17);
        assert_relative_eq!(r.gamma, 143.0 / 144.0, epsilon = 1e-15);
        assert_relative_eq!(r.decay_factor, 1.0 - 1.0 / 1152.0, epsilon = 1e-15);

        let r = discrete_params(0.5, 1.0, 2.0, 1.0).unwrap();
        assert_relative_eq!(r.params.tau, 0.125 / 73.0, epsilon = 1e-17);
        assert_eq!(r.params.tau, r.params.sigma);

        assert!(discrete_params(1.0, 0.5, 2.0, 1.0).is_err());
        assert!(discrete_params(0.5, 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn spectral_undamped_is_neutral() {
        let r = quadratic_spectral_rate(&[4.0, 1.0], &[1.0, 1.0], 0.0, 0.0).unwrap();
        assert_eq!(r.alpha, 0.0);
        assert!(!r.converges);
        assert_relative_eq!(r.modes[0].roots[0].im.abs(), 2.0);
        assert_relative_eq!(r.modes[1].roots[0].im.abs(), 1.0);
    }

    #[test]
    fn spectral_roots_satisfy_quadratic() {
        let r = quadratic_spectral_rate(&[4.0, 1.0, 0.01], &[0.3, 2.0, 1.0], 0.7, 1.3).unwrap();
        for m in &r.modes {
            for z in m.roots {
                let res = z * z + z * (1.3 * m.a + 0.7 * m.mu) + m.mu;
                assert!(res.norm() <= 1e-10, "{res}");
            }
        }
        assert!(quadratic_spectral_rate(&[1.0, 0.0], &[1.0, 1.0], 1.0, 1.0).is_err());
        assert!(quadratic_spectral_rate(&[1.0], &[1.0, 1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_gamma_example_matches_dense_oracle() {
        let (g, a) = optimal_gamma(4.0, 1.0).unwrap();
        assert_relative_eq!(g, 4.0 / 7f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(a, -1.0 / 1.75f64.sqrt(), epsilon = 1e-15);
        let r = quadratic_spectral_rate(&[4.0, 1.0], &[1.0, 1.0], g, 0.0).unwrap();
        assert_relative_eq!(r.alpha, a, epsilon = 1e-12);

        let q = Matrix::from_diagonal(&v(&[2.0, 1.0]));
        let id = Matrix::identity(2, 2);
        let m = quadratic_block_matrix(&q, &id, &id, g, 0.0).unwrap();
        assert_relative_eq!(dense_alpha(&m), a, epsilon = 1e-8);

        // identity relating the two closed forms
        let kappa = 4.0_f64;
        let rhs = -2.0 * 2.0 * 1.0 / ((1.0 * (8.0 - 1.0_f64)).sqrt() * (2.0 - 1.0 / kappa).sqrt());
        assert_relative_eq!(a * g, rhs, epsilon = 1e-14);
    }

    #[test]
    fn optimal_gamma_is_local_minimum() {
        let (g, a) = optimal_gamma(4.0, 1.0).unwrap();
        for dg in [-1e-2, -1e-3, 1e-3, 1e-2] {
            let r = quadratic_spectral_rate(&[4.0, 1.0], &[1.0, 1.0], g + dg, 0.0).unwrap();
            assert!(r.alpha >= a - 1e-12);
        }
        assert!(optimal_gamma(1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_damping_closed_forms_agree() {
        // A = I, gamma <= 1/sqrt(mu1), eps = 2 sqrt(mu') - gamma mu'
        let (mu1, mun, mup, gamma) = (4.0_f64, 1.0_f64, 0.81_f64, 0.4_f64);
        assert!(gamma <= 1.0 / mu1.sqrt());
        let eps = 2.0 * mup.sqrt() - gamma * mup;
        let r = quadratic_spectral_rate(&[mu1, mun], &[1.0, 1.0], gamma, eps).unwrap();
        let expected = -mup.sqrt() - gamma / 2.0 * (mun - mup);
        assert_relative_eq!(r.alpha, expected, epsilon = 1e-12);
        assert_relative_eq!(r.alpha, -0.938, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn per_mode_roots_match_dense_eigenvalues(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.random_range(1..=10usize);
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
            let gamma = rng.random_range(0.0..2.0);
            let eps = rng.random_range(0.0..2.0);
            let mus: Vec<f64> = (0..d).map(|i| b[i] * q[i] * q[i] * a[i]).collect();
            let r = quadratic_spectral_rate(&mus, &a, gamma, eps).unwrap();
            let m = quadratic_block_matrix(
                &Matrix::from_diagonal(&v(&q)),
                &Matrix::from_diagonal(&v(&a)),
                &Matrix::from_diagonal(&v(&b)),
                gamma,
                eps,
            ).unwrap();
            let mut dense: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
            for mode in &r.modes {
                for z in mode.roots {
                    let (k, dist) = dense
                        .iter()
                        .enumerate()
                        .map(|(k, w)| (k, (w - z).norm()))
                        .min_by(|x, y| x.1.total_cmp(&y.1))
                        .unwrap();
                    prop_assert!(dist <= 1e-8 * (1.0 + z.norm()), "root {z} off by {dist}");
                    dense.swap_remove(k);
                }
            }
            prop_assert!((r.alpha - dense_alpha(&m)).abs() <= 1e-8);
        }
    }

    #[test]
    fn h_is_exactly_symmetric_and_bounded() {
        let mu = 0.3;
        let obj = Quadratic::diagonal(&[mu]).unwrap();
        let r = discrete_params(mu * mu, mu * mu, mu * mu, 1.0);
        // a scalar quadratic with C = I has C0 = mu, L' = mu^2 <= mu; use the
        // recipe with its own ordering (mu <= L <= L') satisfied by L = L' = mu
        assert!(r.is_ok());
        let r = discrete_params(mu, mu, mu, 1.0).unwrap();
        let (_, h) = build_n_h(&obj, &v(&[1.0]), &r.params).unwrap();
        assert_eq!(h.clone() - h.transpose(), Matrix::zeros(2, 2));
        assert!(sym_min_max(&h).0 >= mu / 4.0);
    }

    #[test]
    fn build_n_h_needs_hessian() {
        let obj = crate::objective::Rosenbrock::new(1.0, 100.0, 2).unwrap();
        let params = PddParams::new(0.1, 0.1, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            build_n_h(&obj, &v(&[0.0, 0.0]), &params),
            Err(PddError::MissingHessian(_))
        ));
    }

    #[test]
    fn n_reproduces_one_step() {
        let q = make_diag_dominant_q(4, 3).unwrap();
        let obj = RegLogSumExp::new(q.clone()).unwrap();
        let params = PddParams::new(0.05, 0.02, 1.5, 0.7, 2.0)
            .unwrap()
            .with_precond(Preconditioner::inverse_diagonal_of(&q).unwrap());
        let s = PddState::with_dual(v(&[0.3, -0.2, 0.1, 0.5]), v(&[0.1, 0.0, -0.3, 0.2])).unwrap();
        let next = crate::optimizers::pdd_step(&s, &params, &obj).unwrap();
        let (n, _) = build_n_h(&obj, &s.x, &params).unwrap();
        let mut z = Vector::zeros(8);
        z.rows_mut(0, 4).copy_from(&obj.gradient(&s.x));
        z.rows_mut(4, 4).copy_from(&s.p);
        let step = -(n * z) * params.tau;
        let dx = &next.x - &s.x;
        let dp = &next.p - &s.p;
        assert!((step.rows(0, 4) - dx).amax() <= 1e-15);
        assert!((step.rows(4, 4) - dp).amax() <= 1e-15);
    }

    #[test]
    fn n_norm_bound_on_logsumexp() {
        let q = make_diag_dominant_q(6, 1).unwrap();
        let lmax = sym_min_max(&q).1;
        let obj = Scaled::new(RegLogSumExp::new(q).unwrap(), 1.0 / lmax).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vector> = (0..20)
            .map(|_| Vector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let est = estimate_constants(&obj, &Preconditioner::Identity, &pts).unwrap();
        let lp = est.lp.max(est.l);
        let r = discrete_params(est.mu, est.l, lp, 1.0).unwrap();
        let (s, a, g) = (r.params.sigma, r.params.a, r.gamma);
        let bound = est.l.max(1.0) * (a * (s + 2.0 * g + 2.0) + 1.0) / (1.0 + s * a);
        for x in &pts {
            let (n, h) = build_n_h(&obj, x, &r.params).unwrap();
            assert!(spectral_norm(&n) <= bound + 1e-10);
            assert!(sym_min_max(&h).0 >= est.mu / 4.0 - 1e-10);
        }
    }

    #[test]
    fn constants_for_diagonal_quadratic() {
        let obj = Quadratic::diagonal(&[1.0, 2.0]).unwrap();
        let pts = [v(&[0.0, 0.0]), v(&[1.0, -3.0]), v(&[10.0, 4.0])];
        let est = estimate_constants(&obj, &Preconditioner::Identity, &pts).unwrap();
        // oracle: eigenvalues of Q and Q^2 through nalgebra's symmetric solver
        let q = obj.q().clone();
        let (qmin, qmax) = sym_min_max(&q);
        let q2max = sym_min_max(&(&q * &q)).1;
        assert_relative_eq!(est.mu, qmin, epsilon = 1e-9);
        assert_relative_eq!(est.l, qmax, epsilon = 1e-9);
        assert_relative_eq!(est.lp, q2max, epsilon = 1e-6);
        assert_relative_eq!(est.lp, 4.0, epsilon = 1e-6);

        for p in &pts {
            let single =
                estimate_constants(&obj, &Preconditioner::Identity, std::slice::from_ref(p))
                    .unwrap();
            assert_relative_eq!(single.mu, est.mu, epsilon = 1e-12);
            assert_relative_eq!(single.l, est.l, epsilon = 1e-12);
        }
    }

    #[test]
    fn constants_with_diagonal_preconditioner() {
        let obj = Quadratic::diagonal(&[2.0, 8.0]).unwrap();
        let c = Preconditioner::diagonal(v(&[0.5, 0.125])).unwrap();
        let est = estimate_constants(&obj, &c, &[v(&[1.0, 1.0])]).unwrap();
        assert_relative_eq!(est.mu, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.l, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.lp, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn constants_for_quad_minus_cos() {
        let obj = QuadMinusCos::random(5, 1.9, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vector> = (0..50)
            .map(|_| Vector::from_fn(5, |_, _| rng.random_range(-3.0..3.0)))
            .collect();
        let est = estimate_constants(&obj, &Preconditioner::Identity, &pts).unwrap();
        assert!(est.mu >= 0.1 - 1e-9 && est.l <= 3.9 + 1e-9);
        assert!(est.lp.is_finite());
    }

    #[test]
    fn decay_check_examples() {
        let obj = Quadratic::diagonal(&[1.0]).unwrap();
        let r = discrete_params(1.0, 1.0, 1.0, 0.0).unwrap();

        let still = pdd_iterates(&obj, &r.params, PddState::new(v(&[0.0])), 10).unwrap();
        let rep = discrete_decay_check(&still, &obj, &r.params, Some(r.decay_factor)).unwrap();
        assert!(rep.per_step_ratios.iter().all(|&q| q == 0.0));

        let traj = pdd_iterates(&obj, &r.params, PddState::new(v(&[1.0])), 500).unwrap();
        let rep = discrete_decay_check(&traj, &obj, &r.params, Some(r.decay_factor)).unwrap();
        assert!(rep.all_within);
        assert!(rep.per_step_ratios.iter().all(|&q| q <= 1.0 - 1.0 / 1152.0));
        assert!(rep.lambda_min_h.unwrap() >= 0.25);

        let mut big = r.params.clone();
        big.tau *= 100.0;
        let traj = pdd_iterates(&obj, &big, PddState::new(v(&[1.0])), 500).unwrap();
        let rep = discrete_decay_check(&traj, &obj, &big, Some(r.decay_factor)).unwrap();
        assert!(!rep.all_within);
        assert!(rep.per_step_ratios.iter().any(|&q| q > 1.0));

        assert!(discrete_decay_check(&[], &obj, &r.params, None).is_err());
    }

    #[test]
    fn lyapunov_monotone_on_scalar_quadratic() {
        let mu = 0.6;
        let obj = Quadratic::diagonal(&[mu]).unwrap();
        let est = estimate_constants(&obj, &Preconditioner::Identity, &[v(&[1.0])]).unwrap();
        let r = discrete_params(est.mu, est.l, est.lp.max(est.l), 1.0).unwrap();
        let traj = pdd_iterates(&obj, &r.params, PddState::new(v(&[2.0])), 1000).unwrap();
        let vals: Vec<f64> = traj
            .iter()
            .map(|s| lyapunov_i(&obj, &s.x, &s.p).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn d0_bound_is_zero_for_quadratics() {
        let obj = Quadratic::diagonal(&[1.0, 3.0]).unwrap();
        let d0 = sampled_d0_lower_bound(&obj, &[v(&[1.0, 1.0])], 8, 0).unwrap();
        assert!(d0 <= 1e-6, "{d0}");
        let qc = QuadMinusCos::random(3, 1.9, 0).unwrap();
        assert!(sampled_d0_lower_bound(&qc, &[v(&[0.5, 0.1, -0.2])], 8, 0).unwrap() > 0.0);
    }
}
