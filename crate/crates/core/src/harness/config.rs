//! TOML experiment configuration.
//!
//! ```toml
//! max_iter = 20000
//! grad_tol = 1e-10
//! record_every = 10
//! outputs = ["csv", "svg"]
//! output_dir = "out/quadcos"
//! x0 = { fill = 5.0 }            # or an explicit list: x0 = [1.0, 2.0]
//!
//! [problem]
//! name = "quadcos"               # quadratic | logsumexp | quadcos | rosenbrock | ackley
//! n = 100
//! seed = 0
//!
//! [[optimizers]]
//! method = "pdd"                 # gd | nag | heavy-ball | pdd | igahd | igahd-sc
//! label = "PDD"
//! tau = 0.5
//! sigma = 0.5
//! a = 1.0
//! epsilon = 1.0
//! omega = 1.0
//! precond = "identity"           # identity | diag-inverse-q | { diagonal = [..] }
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::linalg::sym_min_max;
use crate::objective::{
    make_diag_dominant_q, Ackley, Objective, QuadMinusCos, Quadratic, RegLogSumExp, Rosenbrock,
    Scaled,
};
use crate::optimizers::{compute_beta2, Method, PddParams, Preconditioner, RunOptions};
use crate::{Matrix, PddError, Result, Vector};

fn default_c_norm_sq() -> f64 {
    1.9
}
fn default_scale() -> f64 {
    1.0
}
fn default_rosen_n() -> usize {
    2
}
fn default_rosen_a() -> f64 {
    1.0
}
fn default_rosen_b() -> f64 {
    100.0
}

/// Benchmark problem and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `x^T diag(d) x / 2`.
    Quadratic {
        diag: Vec<f64>,
    },
    /// Regularized log-sum-exp with `scale` times a seeded diagonally
    /// dominant `Q`. `normalize` divides `f` by the largest eigenvalue of
    /// the scaled `Q`.
    Logsumexp {
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default)]
        normalize: bool,
    },
    /// `|x|^2 - cos(c^T x)` with a seeded random `c`.
    Quadcos {
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_c_norm_sq")]
        c_norm_sq: f64,
    },
    Rosenbrock {
        #[serde(default = "default_rosen_n")]
        n: usize,
        #[serde(default = "default_rosen_a")]
        a: f64,
        #[serde(default = "default_rosen_b")]
        b: f64,
    },
    Ackley,
}

/// A constructed problem. `q` is the quadratic part when the problem has one.
pub struct Problem {
    pub objective: Box<dyn Objective>,
    pub q: Option<Matrix>,
}

impl ProblemSpec {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Logsumexp { seed, .. } | Self::Quadcos { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn set_seed(&mut self, new: u64) {
        if let Self::Logsumexp { seed, .. } | Self::Quadcos { seed, .. } = self {
            *seed = new;
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match self {
            Self::Quadratic { diag } => {
                let obj = Quadratic::diagonal(diag)?;
                let q = obj.q().clone();
                Problem {
                    objective: Box::new(obj),
                    q: Some(q),
                }
            }
            Self::Logsumexp {
                n,
                seed,
                scale,
                normalize,
            } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(PddError::Config(format!(
                        "logsumexp scale must be positive, got {scale}"
                    )));
                }
                let q = make_diag_dominant_q(*n, *seed)? * *scale;
                let obj = RegLogSumExp::new(q.clone())?;
                let objective: Box<dyn Objective> = if *normalize {
                    Box::new(Scaled::new(obj, 1.0 / sym_min_max(&q).1)?)
                } else {
                    Box::new(obj)
                };
                Problem {
                    objective,
                    q: Some(q),
                }
            }
            Self::Quadcos { n, seed, c_norm_sq } => Problem {
                objective: Box::new(QuadMinusCos::random(*n, *c_norm_sq, *seed)?),
                q: None,
            },
            Self::Rosenbrock { n, a, b } => Problem {
                objective: Box::new(Rosenbrock::new(*a, *b, *n)?),
                q: None,
            },
            Self::Ackley => Problem {
                objective: Box::new(Ackley),
                q: None,
            },
        })
    }
}

/// Starting point: explicit coordinates or a constant fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum X0Spec {
    Values(Vec<f64>),
    Fill { fill: f64 },
}

impl X0Spec {
    pub fn build(&self, dim: usize) -> Result<Vector> {
        match self {
            Self::Values(v) if v.len() == dim => Ok(Vector::from_column_slice(v)),
            Self::Values(v) => Err(PddError::Config(format!(
                "x0 has {} entries but the problem has dimension {dim}",
                v.len()
            ))),
            Self::Fill { fill } => Ok(Vector::from_element(dim, *fill)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrecondSpec {
    /// `"identity"` or `"diag-inverse-q"`.
    Named(String),
    Diagonal {
        diagonal: Vec<f64>,
    },
}

impl Default for PrecondSpec {
    fn default() -> Self {
        Self::Named("identity".into())
    }
}

impl PrecondSpec {
    pub fn build(&self, q: Option<&Matrix>) -> Result<Preconditioner> {
        match self {
            Self::Named(n) if n == "identity" => Ok(Preconditioner::Identity),
            Self::Named(n) if n == "diag-inverse-q" => {
                let q = q.ok_or_else(|| {
                    PddError::Config("diag-inverse-q needs a problem with a quadratic part".into())
                })?;
                Preconditioner::inverse_diagonal_of(q)
            }
            Self::Named(n) => Err(PddError::Unknown {
                kind: "preconditioner",
                name: n.clone(),
            }),
            Self::Diagonal { diagonal } => {
                Preconditioner::diagonal(Vector::from_column_slice(diagonal))
            }
        }
    }
}

/// One optimizer entry. `label` names the output files and the plot legend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Gd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        tau: f64,
        #[serde(default)]
        precond: PrecondSpec,
    },
    Nag {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        tau: f64,
        beta: f64,
    },
    HeavyBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        tau: f64,
        beta: f64,
    },
    Pdd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        tau: f64,
        sigma: f64,
        a: f64,
        epsilon: f64,
        omega: f64,
        #[serde(default)]
        precond: PrecondSpec,
    },
    Igahd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        tau: f64,
        alpha: f64,
        beta1: f64,
    },
    /// `beta2` defaults to the balanced value from [`compute_beta2`].
    IgahdSc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        tau: f64,
        m1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta2: Option<f64>,
    },
}

impl OptimizerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gd { .. } => "gd",
            Self::Nag { .. } => "nag",
            Self::HeavyBall { .. } => "heavy-ball",
            Self::Pdd { .. } => "pdd",
            Self::Igahd { .. } => "igahd",
            Self::IgahdSc { .. } => "igahd-sc",
        }
    }

    pub fn label(&self) -> String {
        let label = match self {
            Self::Gd { label, .. }
            | Self::Nag { label, .. }
            | Self::HeavyBall { label, .. }
            | Self::Pdd { label, .. }
            | Self::Igahd { label, .. }
            | Self::IgahdSc { label, .. } => label,
        };
        label.clone().unwrap_or_else(|| self.kind().to_string())
    }

    pub fn build(&self, q: Option<&Matrix>) -> Result<Method> {
        Ok(match self {
            Self::Gd { tau, precond, .. } => Method::Gd {
                tau: *tau,
                precond: precond.build(q)?,
            },
            Self::Nag { tau, beta, .. } => Method::Nag {
                tau: *tau,
                beta: *beta,
            },
            Self::HeavyBall { tau, beta, .. } => Method::HeavyBall {
                tau: *tau,
                beta: *beta,
            },
            Self::Pdd {
                tau,
                sigma,
                a,
                epsilon,
                omega,
                precond,
                ..
            } => Method::Pdd(
                PddParams::new(*tau, *sigma, *a, *epsilon, *omega)?.with_precond(precond.build(q)?),
            ),
            Self::Igahd {
                tau, alpha, beta1, ..
            } => Method::Igahd {
                tau: *tau,
                alpha: *alpha,
                beta1: *beta1,
            },
            Self::IgahdSc { tau, m1, beta2, .. } => Method::IgahdSc {
                tau: *tau,
                m1: *m1,
                beta2: match beta2 {
                    Some(b) => *b,
                    None => compute_beta2(*m1, *tau)?,
                },
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Csv,
    Svg,
}

fn default_max_iter() -> usize {
    10_000
}
fn default_grad_tol() -> f64 {
    1e-10
}
fn default_record_every() -> usize {
    1
}
fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Csv, OutputKind::Svg]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Output of [`ExperimentConfig::prepare`]: the problem, `x0` and the
/// labelled methods.
pub type Prepared = (Problem, Vector, Vec<(String, Method)>);

/// A problem, a start point and the optimizers to compare on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub problem: ProblemSpec,
    pub x0: X0Spec,
    pub optimizers: Vec<OptimizerSpec>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| PddError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| PddError::Config(e.to_string()))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            record_every: self.record_every,
        }
    }

    /// Checks everything that can be checked without running: non-empty and
    /// uniquely labelled optimizers, valid parameters, `x0` dimension.
    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    /// Builds the problem, the start point and every method.
    pub fn prepare(&self) -> Result<Prepared> {
        if self.optimizers.is_empty() {
            return Err(PddError::Config(
                "at least one optimizer is required".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(PddError::Config("max_iter must be at least 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(PddError::Config("grad_tol must be non-negative".into()));
        }
        let problem = self.problem.build()?;
        let dim = problem.objective.dim();
        let x0 = self.x0.build(dim)?;
        let mut methods = Vec::with_capacity(self.optimizers.len());
        for spec in &self.optimizers {
            let label = spec.label();
            if methods.iter().any(|(l, _): &(String, Method)| l == &label) {
                return Err(PddError::Config(format!(
                    "duplicate optimizer label `{label}`"
                )));
            }
            let method = spec.build(problem.q.as_ref())?;
            method.validate(dim)?;
            methods.push((label, method));
        }
        Ok((problem, x0, methods))
    }
}
