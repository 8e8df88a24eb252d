//! Built-in experiments with the published hyperparameters.

use std::path::PathBuf;

use super::config::{
    ExperimentConfig, OptimizerSpec, OutputKind, PrecondSpec, ProblemSpec, X0Spec,
};
use crate::linalg::sym_min_max;
use crate::objective::make_diag_dominant_q;
use crate::toynet::TrainConfig;
use crate::{PddError, Result};

pub const PRESET_NAMES: [&str; 6] = [
    "logsumexp",
    "quadcos",
    "rosenbrock2d",
    "rosenbrockNd",
    "ackley",
    "toynet",
];

/// Seed of the generated matrices in the convex presets.
pub const PRESET_SEED: u64 = 0;

/// Scale of the generated `Q` in the log-sum-exp preset. With the unscaled
/// matrix (spectrum near `[1.5, 2.5]`) the identity-preconditioned PDD
/// parameters `tau = sigma = 2/(l1+ln)`, `A = 10` put the top modes outside
/// the stable region `tau sigma A h < 2 (2 + sigma eps A) / 3`.
pub const LOGSUMEXP_SCALE: f64 = 10.0;

/// A preset is either an optimizer comparison or a training run.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Experiment(ExperimentConfig),
    Toynet(TrainConfig),
}

impl Preset {
    pub fn experiment(self) -> Option<ExperimentConfig> {
        match self {
            Self::Experiment(c) => Some(c),
            Self::Toynet(_) => None,
        }
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    let cfg = match name.to_ascii_lowercase().as_str() {
        "logsumexp" => logsumexp()?,
        "quadcos" => quadcos(),
        "rosenbrock2d" => rosenbrock2d(),
        "rosenbrocknd" => rosenbrock_nd(),
        "ackley" => ackley(),
        "toynet" => return Ok(Preset::Toynet(TrainConfig::default())),
        _ => {
            return Err(PddError::Unknown {
                kind: "preset",
                name: name.to_string(),
            })
        }
    };
    Ok(Preset::Experiment(cfg))
}

fn base(
    name: &str,
    problem: ProblemSpec,
    x0: X0Spec,
    optimizers: Vec<OptimizerSpec>,
) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(name.to_string()),
        problem,
        x0,
        optimizers,
        max_iter: 10_000,
        grad_tol: 1e-10,
        record_every: 1,
        outputs: vec![OutputKind::Csv, OutputKind::Svg],
        output_dir: PathBuf::from(name),
    }
}

fn label(s: &str) -> Option<String> {
    Some(s.to_string())
}

fn pdd(name: &str, tau: f64, a: f64, epsilon: f64, omega: f64, precond: &str) -> OptimizerSpec {
    OptimizerSpec::Pdd {
        label: label(name),
        tau,
        sigma: tau,
        a,
        epsilon,
        omega,
        precond: PrecondSpec::Named(precond.into()),
    }
}

fn gd(tau: f64) -> OptimizerSpec {
    OptimizerSpec::Gd {
        label: label("gd"),
        tau,
        precond: PrecondSpec::default(),
    }
}

fn nag(tau: f64, beta: f64) -> OptimizerSpec {
    OptimizerSpec::Nag {
        label: label("nag"),
        tau,
        beta,
    }
}

fn igahd(tau: f64, beta1: f64) -> OptimizerSpec {
    OptimizerSpec::Igahd {
        label: label("igahd"),
        tau,
        alpha: 3.0,
        beta1,
    }
}

/// `(sqrt(3k+1) - 2) / (sqrt(3k+1) + 2)`.
fn nag_beta(kappa: f64) -> f64 {
    let s = (3.0 * kappa + 1.0).sqrt();
    (s - 2.0) / (s + 2.0)
}

fn logsumexp() -> Result<ExperimentConfig> {
    let n = 100;
    let q = make_diag_dominant_q(n, PRESET_SEED)? * LOGSUMEXP_SCALE;
    let (ln, l1) = sym_min_max(&q);
    let optimizers = vec![
        gd(2.0 / (3.0 * l1 + ln)),
        OptimizerSpec::Gd {
            label: label("gd-precond"),
            tau: 0.5,
            precond: PrecondSpec::Named("diag-inverse-q".into()),
        },
        nag(4.0 / (30.0 * l1 + ln), nag_beta(10.0 * l1 / ln)),
        pdd("pdd-identity", 2.0 / (l1 + ln), 10.0, 1.0, 1.0, "identity"),
        pdd("pdd-diag", 0.5, 1.0, 1.0, 1.0, "diag-inverse-q"),
        OptimizerSpec::IgahdSc {
            label: label("igahd-sc"),
            tau: 0.0016,
            m1: ln,
            beta2: None,
        },
    ];
    Ok(base(
        "logsumexp",
        ProblemSpec::Logsumexp {
            n,
            seed: PRESET_SEED,
            scale: LOGSUMEXP_SCALE,
            normalize: false,
        },
        X0Spec::Fill { fill: 0.1 },
        optimizers,
    ))
}

fn quadcos() -> ExperimentConfig {
    let optimizers = vec![
        gd(0.5),
        nag(4.0 / (3.0 * 3.9 + 0.1), nag_beta(3.9 / 0.1)),
        pdd("pdd", 0.5, 1.0, 1.0, 1.0, "identity"),
        OptimizerSpec::IgahdSc {
            label: label("igahd-sc"),
            tau: 0.55,
            m1: 0.1,
            beta2: None,
        },
    ];
    base(
        "quadcos",
        ProblemSpec::Quadcos {
            n: 100,
            seed: PRESET_SEED,
            c_norm_sq: 1.9,
        },
        X0Spec::Fill { fill: 5.0 },
        optimizers,
    )
}

fn rosenbrock(n: usize) -> ProblemSpec {
    ProblemSpec::Rosenbrock {
        n,
        a: 1.0,
        b: 100.0,
    }
}

fn rosenbrock2d() -> ExperimentConfig {
    let tau_att: f64 = 0.00045;
    let optimizers = vec![
        gd(0.0002),
        nag(0.0002, 0.9),
        pdd("pdd", 0.005, 5.0, 1.0, 1.0, "identity"),
        igahd(tau_att, tau_att.sqrt() / 14.0),
    ];
    let mut cfg = base(
        "rosenbrock2d",
        rosenbrock(2),
        X0Spec::Values(vec![-3.0, -4.0]),
        optimizers,
    );
    cfg.max_iter = 1_000_000;
    cfg.record_every = 1000;
    cfg
}

fn rosenbrock_nd() -> ExperimentConfig {
    let tau_att: f64 = 0.0002;
    let optimizers = vec![
        gd(0.001),
        nag(0.0008, 0.95),
        pdd("pdd", 0.01, 5.0, 0.5, 1.0, "identity"),
        igahd(tau_att, 2.0 * tau_att.sqrt()),
    ];
    let mut cfg = base(
        "rosenbrockNd",
        rosenbrock(100),
        X0Spec::Fill { fill: 0.0 },
        optimizers,
    );
    cfg.max_iter = 100_000;
    cfg.record_every = 100;
    cfg
}

fn ackley() -> ExperimentConfig {
    let tau_att: f64 = 0.01;
    let optimizers = vec![
        gd(0.002),
        nag(0.002, 0.9),
        pdd("pdd", 0.002, 1.0, 1.0, 1.0, "identity"),
        igahd(tau_att, 2.0 * tau_att.sqrt()),
    ];
    let mut cfg = base(
        "ackley",
        ProblemSpec::Ackley,
        X0Spec::Values(vec![2.5, 4.0]),
        optimizers,
    );
    cfg.max_iter = 100_000;
    cfg.record_every = 10;
    cfg
}
