//! Rate-analysis and continuous-dynamics studies behind `pdd analyze` and
//! `pdd dynamics`.

use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PrecondSpec, ProblemSpec, X0Spec};
use super::report::write_rows;
use crate::analysis::{
    discrete_decay_check, discrete_params, estimate_constants, lyapunov_i, quadratic_spectral_rate,
    sampled_d0_lower_bound, ConstantEstimates, DiscreteRateReport, SpectralReport,
};
use crate::dynamics::{
    integrate_rk4, make_special_case, second_order_residual, DynParams, OdeTrajectory, SpecialCase,
};
use crate::optimizers::{pdd_iterates, PddState};
use crate::{PddError, Result, Vector};

fn one() -> f64 {
    1.0
}
fn default_samples() -> usize {
    16
}
fn default_steps() -> usize {
    2000
}
fn default_analyze_dir() -> PathBuf {
    PathBuf::from("out/analyze")
}
fn default_dynamics_dir() -> PathBuf {
    PathBuf::from("out/dynamics")
}

/// Modes of a diagonal quadratic for the closed-form rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    pub mus: Vec<f64>,
    /// One entry per mode; a single entry is broadcast.
    #[serde(rename = "a")]
    pub a: Vec<f64>,
    pub gamma: f64,
    pub eps: f64,
}

/// Constants, recipe and decay check on one problem.
///
/// ```toml
/// x0 = [1.0, 1.0]
/// samples = 16          # sample points around x0 for mu, L, L'
/// sample_radius = 1.0
/// delta = 1.0
/// steps = 2000
/// [problem]
/// name = "quadratic"
/// diag = [0.5, 2.0]
/// [spectral]            # optional
/// mus = [4.0, 1.0]
/// a = [1.0]
/// gamma = 1.5
/// eps = 0.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub problem: ProblemSpec,
    pub x0: X0Spec,
    #[serde(default)]
    pub precond: PrecondSpec,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "one")]
    pub sample_radius: f64,
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral: Option<SpectralSpec>,
    #[serde(default = "default_analyze_dir")]
    pub output_dir: PathBuf,
}

impl AnalyzeConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PddError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
struct ConstantsRow {
    mu: f64,
    l: f64,
    lp: f64,
    lp_used: f64,
    d0_lower_bound: f64,
    tau: f64,
    gamma: f64,
    a: f64,
    omega: f64,
    decay_factor: f64,
    lambda_min_h: Option<f64>,
    m_bound: Option<f64>,
    max_ratio: f64,
    all_within: bool,
}

#[derive(Debug, Clone, Serialize)]
struct DecayRow {
    step: usize,
    lyapunov: f64,
    ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SpectralRow {
    mode: usize,
    mu: f64,
    a: f64,
    re1: f64,
    im1: f64,
    re2: f64,
    im2: f64,
}

#[derive(Debug, Clone)]
pub struct AnalyzeArtifact {
    pub constants: ConstantEstimates,
    pub report: DiscreteRateReport,
    pub spectral: Option<SpectralReport>,
    pub files: Vec<PathBuf>,
}

fn sample_points(x0: &Vector, count: usize, radius: f64, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![x0.clone()];
    while pts.len() < count.max(1) {
        pts.push(x0.map(|v| v + radius * rng.random_range(-1.0..=1.0)));
    }
    pts
}

/// Samples `(mu, L, L')` around `x0`, applies the discrete recipe and
/// checks the per-step Lyapunov decay. Writes `constants.csv`, `decay.csv`
/// and, when requested, `spectral.csv`.
///
/// The recipe needs `L <= L'`; the sampled `L'` is raised to `L` when the
/// third-order term makes it smaller.
pub fn run_analysis(cfg: &AnalyzeConfig) -> Result<AnalyzeArtifact> {
    let problem = cfg.problem.build()?;
    let obj = problem.objective.as_ref();
    let x0 = cfg.x0.build(obj.dim())?;
    let precond = cfg.precond.build(problem.q.as_ref())?;
    let samples = sample_points(&x0, cfg.samples, cfg.sample_radius, cfg.sample_seed);
    let constants = estimate_constants(obj, &precond, &samples)?;
    let lp_used = constants.lp.max(constants.l);
    let recipe = discrete_params(constants.mu, constants.l, lp_used, cfg.delta)?;
    let params = recipe.params.clone().with_precond(precond);
    let states = pdd_iterates(obj, &params, PddState::new(x0), cfg.steps)?;
    let report = discrete_decay_check(&states, obj, &params, Some(recipe.decay_factor))?;
    let d0 = sampled_d0_lower_bound(obj, &samples, 8, cfg.sample_seed)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| PddError::io(dir, e))?;
    let mut files = Vec::new();

    let row = ConstantsRow {
        mu: constants.mu,
        l: constants.l,
        lp: constants.lp,
        lp_used,
        d0_lower_bound: d0,
        tau: params.tau,
        gamma: recipe.gamma,
        a: params.a,
        omega: params.omega,
        decay_factor: recipe.decay_factor,
        lambda_min_h: report.lambda_min_h,
        m_bound: report.m_bound,
        max_ratio: report.per_step_ratios.iter().copied().fold(0.0, f64::max),
        all_within: report.all_within,
    };
    let path = dir.join("constants.csv");
    write_rows(&[row], &path)?;
    files.push(path);

    let mut rows = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        rows.push(DecayRow {
            step: k,
            lyapunov: lyapunov_i(obj, &s.x, &s.p)?,
            ratio: k.checked_sub(1).map(|j| report.per_step_ratios[j]),
        });
    }
    let path = dir.join("decay.csv");
    write_rows(&rows, &path)?;
    files.push(path);

    let spectral = match &cfg.spectral {
        Some(spec) => {
            let a = match spec.a.len() {
                1 => vec![spec.a[0]; spec.mus.len()],
                _ => spec.a.clone(),
            };
            let rep = quadratic_spectral_rate(&spec.mus, &a, spec.gamma, spec.eps)?;
            let rows: Vec<SpectralRow> = rep
                .modes
                .iter()
                .enumerate()
                .map(|(i, m)| SpectralRow {
                    mode: i,
                    mu: m.mu,
                    a: m.a,
                    re1: m.roots[0].re,
                    im1: m.roots[0].im,
                    re2: m.roots[1].re,
                    im2: m.roots[1].im,
                })
                .collect();
            let path = dir.join("spectral.csv");
            write_rows(&rows, &path)?;
            files.push(path);
            Some(rep)
        }
        None => None,
    };

    Ok(AnalyzeArtifact {
        constants,
        report,
        spectral,
        files,
    })
}

/// Integration of the continuous PDD system.
///
/// ```toml
/// x0 = [1.0, 0.0]
/// special = "heavy-ball"   # optional: hessian-damping | heavy-ball | nesterov
/// a = 1.0
/// epsilon = 1.0
/// gamma = 0.0
/// t_end = 20.0
/// dt = 1e-3
/// [problem]
/// name = "quadratic"
/// diag = [1.0, 4.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub problem: ProblemSpec,
    pub x0: X0Spec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<X0Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special: Option<String>,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub precond: PrecondSpec,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "one_usize")]
    pub record_every: usize,
    #[serde(default = "default_dynamics_dir")]
    pub output_dir: PathBuf,
}

fn one_usize() -> usize {
    1
}

impl DynamicsConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PddError::Config(e.to_string()))
    }

    pub fn params(&self, q: Option<&crate::Matrix>) -> Result<DynParams> {
        let params = match &self.special {
            Some(name) => {
                make_special_case(name.parse::<SpecialCase>()?, self.epsilon, self.gamma)?
            }
            None => DynParams::new(self.a, self.epsilon, self.gamma)?,
        };
        Ok(params.with_precond(self.precond.build(q)?))
    }
}

#[derive(Debug, Clone, Serialize)]
struct DynamicsRow {
    t: f64,
    f: f64,
    grad_norm: f64,
    lyapunov: f64,
    x_norm: f64,
    p_norm: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicsArtifact {
    pub trajectory: OdeTrajectory,
    /// Max residual of the second-order form; `None` when the configuration
    /// is outside its scope.
    pub residual: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Integrates with RK4 and writes `dynamics.csv`.
pub fn run_dynamics(cfg: &DynamicsConfig) -> Result<DynamicsArtifact> {
    if cfg.record_every == 0 {
        return Err(PddError::Config("record_every must be at least 1".into()));
    }
    let problem = cfg.problem.build()?;
    let obj = problem.objective.as_ref();
    let dim = obj.dim();
    let x0 = cfg.x0.build(dim)?;
    let p0 = match &cfg.p0 {
        Some(p) => p.build(dim)?,
        None => Vector::zeros(dim),
    };
    let params = cfg.params(problem.q.as_ref())?;
    let trajectory = integrate_rk4(&params, obj, &x0, &p0, cfg.t_end, cfg.dt)?;
    let residual = if trajectory.diverged {
        None
    } else {
        second_order_residual(&trajectory, &params, obj).ok()
    };

    let mut rows = Vec::new();
    for k in (0..trajectory.len()).step_by(cfg.record_every) {
        let (x, p) = (&trajectory.xs[k], &trajectory.ps[k]);
        let g = obj.gradient(x);
        rows.push(DynamicsRow {
            t: trajectory.times[k],
            f: obj.value(x),
            grad_norm: g.norm(),
            lyapunov: 0.5 * (g.norm_squared() + p.norm_squared()),
            x_norm: x.norm(),
            p_norm: p.norm(),
        });
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| PddError::io(dir, e))?;
    let path = dir.join("dynamics.csv");
    write_rows(&rows, &path)?;
    Ok(DynamicsArtifact {
        trajectory,
        residual,
        files: vec![path],
    })
}
