//! `pdd`: run optimizer comparisons, presets, rate analyses and ODE
//! integrations from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pdd_core::harness::{
    preset, run_analysis, run_dynamics, run_experiment, AnalyzeConfig, DynamicsConfig,
    ExperimentConfig, Preset, RunArtifact, PRESET_NAMES,
};
use pdd_core::toynet::{mean_final, train, write_metrics_csv, StochasticMethod, TrainConfig};

const OUT_ENV: &str = "PDD_OUT_DIR";
/// Exit status when a run finished but some optimizer diverged.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pdd",
    version,
    about = "Primal-dual damping optimizer benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Seed of the generated problem data (logsumexp, quadcos, toynet data).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Output directory; defaults to the config's, under $PDD_OUT_DIR when set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizers of a TOML experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in experiment.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        name: String,
        /// Print the preset as TOML instead of running it.
        #[arg(long)]
        print_config: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Estimate constants, apply the discrete recipe and check the decay.
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Integrate the continuous-time system.
    Dynamics {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn resolve_out(flag: &Option<PathBuf>, configured: &Path) -> PathBuf {
    if let Some(out) = flag {
        return out.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if configured.is_relative() => PathBuf::from(root).join(configured),
        _ => configured.to_path_buf(),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn warn_unused(ov: &Overrides, what: &str) {
    if ov.max_iter.is_some() || ov.grad_tol.is_some() {
        log::warn!("--max-iter and --grad-tol do not apply to {what}");
    }
}

fn apply(cfg: &mut ExperimentConfig, ov: &Overrides) {
    if let Some(seed) = ov.seed {
        if cfg.problem.seed().is_none() {
            log::warn!("--seed ignored: the problem has no generated data");
        }
        cfg.problem.set_seed(seed);
    }
    if let Some(m) = ov.max_iter {
        cfg.max_iter = m;
    }
    if let Some(t) = ov.grad_tol {
        cfg.grad_tol = t;
    }
}

fn report(art: &RunArtifact) -> ExitCode {
    println!(
        "{:<16} {:>9} {:>14} {:>11} {:>10} {:>9}",
        "method", "iters", "f", "grad_norm", "status", "time"
    );
    for r in &art.runs {
        let t = &r.trajectory;
        let last = t.last();
        let status = if t.diverged {
            "diverged"
        } else if t.converged {
            "converged"
        } else {
            "max-iter"
        };
        println!(
            "{:<16} {:>9} {:>14.6e} {:>11.3e} {:>10} {:>8.3}s",
            r.label,
            t.iterations,
            last.f,
            last.grad_norm,
            status,
            r.wall_clock.as_secs_f64()
        );
    }
    for f in &art.files {
        println!("wrote {}", f.display());
    }
    if art.any_diverged() {
        eprintln!("error: at least one optimizer diverged");
        ExitCode::from(EXIT_DIVERGED)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_config(mut cfg: ExperimentConfig, ov: &Overrides) -> Result<ExitCode> {
    apply(&mut cfg, ov);
    cfg.output_dir = resolve_out(&ov.out, &cfg.output_dir);
    let art = run_experiment(&cfg)?;
    Ok(report(&art))
}

fn run_toynet(mut cfg: TrainConfig, ov: &Overrides, out: PathBuf) -> Result<ExitCode> {
    warn_unused(ov, "toynet");
    if let Some(seed) = ov.seed {
        cfg.data_seed = seed;
    }
    let rows = train(&cfg)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("metrics.csv");
    write_metrics_csv(&rows, &path)?;
    println!("{:<14} {:>11} {:>9}", "method", "train_loss", "test_acc");
    let mut diverged = false;
    for m in StochasticMethod::ALL {
        let (Some(loss), Some(acc)) = (
            mean_final(&rows, m, |r| r.train_loss),
            mean_final(&rows, m, |r| r.test_acc),
        ) else {
            continue;
        };
        diverged |= !loss.is_finite();
        println!("{:<14} {loss:>11.4} {acc:>9.4}", m.as_str());
    }
    println!("wrote {}", path.display());
    if diverged {
        eprintln!("error: at least one method diverged");
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::from_toml(&read(&config)?)
                .with_context(|| format!("parsing {}", config.display()))?;
            run_config(cfg, &overrides)
        }
        Command::Preset {
            name,
            print_config,
            overrides,
        } => {
            let root =
                std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
            let out = overrides.out.clone().unwrap_or_else(|| root.join(&name));
            match preset(&name)? {
                Preset::Experiment(mut cfg) => {
                    if print_config {
                        apply(&mut cfg, &overrides);
                        print!("{}", cfg.to_toml()?);
                        return Ok(ExitCode::SUCCESS);
                    }
                    run_config(
                        cfg,
                        &Overrides {
                            out: Some(out),
                            ..overrides
                        },
                    )
                }
                Preset::Toynet(cfg) => {
                    if print_config {
                        bail!("--print-config is only available for optimizer presets");
                    }
                    run_toynet(cfg, &overrides, out)
                }
            }
        }
        Command::Analyze { config, overrides } => {
            warn_unused(&overrides, "analyze");
            let mut cfg = AnalyzeConfig::from_toml(&read(&config)?)
                .with_context(|| format!("parsing {}", config.display()))?;
            if let Some(seed) = overrides.seed {
                cfg.problem.set_seed(seed);
            }
            cfg.output_dir = resolve_out(&overrides.out, &cfg.output_dir);
            let art = run_analysis(&cfg)?;
            let c = art.constants;
            println!("mu = {:.6e}  L = {:.6e}  L' = {:.6e}", c.mu, c.l, c.lp);
            let r = &art.report;
            let worst = r.per_step_ratios.iter().copied().fold(0.0, f64::max);
            println!(
                "tau = {:.6e}  decay factor = {:.8}  max ratio = {worst:.8}  certified = {}",
                r.tau_recipe,
                r.decay_factor.unwrap_or(f64::NAN),
                r.all_within
            );
            if let Some(s) = &art.spectral {
                println!(
                    "spectral alpha = {:.8e}  converges = {}",
                    s.alpha, s.converges
                );
            }
            for f in &art.files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Dynamics { config, overrides } => {
            warn_unused(&overrides, "dynamics");
            let mut cfg = DynamicsConfig::from_toml(&read(&config)?)
                .with_context(|| format!("parsing {}", config.display()))?;
            if let Some(seed) = overrides.seed {
                cfg.problem.set_seed(seed);
            }
            cfg.output_dir = resolve_out(&overrides.out, &cfg.output_dir);
            let art = run_dynamics(&cfg)?;
            let t = &art.trajectory;
            println!(
                "samples = {}  t_end = {:.4}",
                t.len(),
                t.times.last().copied().unwrap_or(0.0)
            );
            match art.residual {
                Some(r) => println!("second-order residual = {r:.3e}"),
                None => println!("second-order residual not applicable"),
            }
            for f in &art.files {
                println!("wrote {}", f.display());
            }
            if t.diverged {
                eprintln!("error: integration diverged");
                return Ok(ExitCode::from(EXIT_DIVERGED));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
