//! Experiment runner: configs, presets and output writers.

pub mod config;
pub mod presets;
pub mod report;
pub mod studies;

use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use config::{
    ExperimentConfig, OptimizerSpec, OutputKind, PrecondSpec, Problem, ProblemSpec, X0Spec,
};
pub use presets::{preset, Preset, PRESET_NAMES};
pub use studies::{run_analysis, run_dynamics, AnalyzeConfig, DynamicsConfig};

use crate::optimizers::{run_optimizer, Trajectory};
use crate::{PddError, Result};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub trajectory: Trajectory,
    pub wall_clock: Duration,
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub files: Vec<PathBuf>,
}

impl RunArtifact {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.trajectory.diverged)
    }

    pub fn run(&self, label: &str) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.label == label)
    }
}

/// File-name-safe version of an optimizer label.
pub fn sanitize_label(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

/// Runs every optimizer of `config` (in parallel) and writes
/// `<label>.csv` per optimizer plus `convergence.svg` into the output
/// directory. Divergence is reported through the trajectories, not as an
/// error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifact> {
    let (problem, x0, methods) = config.prepare()?;
    let opts = config.run_options();
    let obj = problem.objective.as_ref();
    let runs = methods
        .par_iter()
        .map(|(label, method)| {
            let start = Instant::now();
            let trajectory = run_optimizer(obj, method, &x0, opts)?;
            if trajectory.diverged {
                log::warn!(
                    "{label} diverged after {} iterations",
                    trajectory.iterations
                );
            }
            Ok(RunResult {
                label: label.clone(),
                trajectory,
                wall_clock: start.elapsed(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut files = Vec::new();
    if !config.outputs.is_empty() {
        let dir = &config.output_dir;
        fs::create_dir_all(dir).map_err(|e| PddError::io(dir, e))?;
        if config.outputs.contains(&OutputKind::Csv) {
            for r in &runs {
                let path = dir.join(format!("{}.csv", sanitize_label(&r.label)));
                report::emit_csv(&r.trajectory, &path)?;
                files.push(path);
            }
        }
        if config.outputs.contains(&OutputKind::Svg) {
            let path = dir.join("convergence.svg");
            let series: Vec<(&str, &Trajectory)> = runs
                .iter()
                .map(|r| (r.label.as_str(), &r.trajectory))
                .collect();
            let title = config.name.as_deref().unwrap_or("convergence");
            report::emit_svg(&series, title, &path)?;
            files.push(path);
        }
    }
    Ok(RunArtifact {
        config: config.clone(),
        runs,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_sanitized() {
        assert_eq!(sanitize_label("PDD (A=5)"), "PDD__A_5_");
        assert_eq!(sanitize_label("../x"), "_.._x");
        assert_eq!(sanitize_label(""), "_");
        assert_eq!(sanitize_label("igahd-sc"), "igahd-sc");
    }

    #[test]
    fn experiment_writes_one_csv_per_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(
            r#"
max_iter = 200
x0 = [1.0, -1.0]
[problem]
name = "quadratic"
diag = [1.0, 4.0]
[[optimizers]]
method = "gd"
tau = 0.2
[[optimizers]]
method = "pdd"
tau = 0.2
sigma = 0.2
a = 1.0
epsilon = 1.0
omega = 1.0
"#,
        )
        .unwrap();
        cfg.output_dir = dir.path().join("run");
        let art = run_experiment(&cfg).unwrap();
        assert_eq!(art.files.len(), 3);
        assert!(art.files.iter().all(|f| f.exists()));
        assert!(!art.any_diverged());
        assert!(art.run("pdd").unwrap().trajectory.converged);
    }
}
