use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pdd(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pdd"));
    cmd.args(args).env_remove("PDD_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("PDD_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

const DIVERGENT: &str = r#"
x0 = { fill = 5.0 }
[problem]
name = "quadcos"
n = 10
[[optimizers]]
method = "gd"
tau = 10.0
"#;

#[test]
fn quadcos_preset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = pdd(&["preset", "quadcos", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        listing(&out),
        [
            "convergence.svg",
            "gd.csv",
            "igahd-sc.csv",
            "nag.csv",
            "pdd.csv"
        ]
    );
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("converged"));
}

#[test]
fn preset_honours_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdd(&["preset", "ackley", "--max-iter", "50"], Some(dir.path()));
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("ackley/pdd.csv")).unwrap();
    let last: usize = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(last <= 50);
}

#[test]
fn divergence_gives_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, DIVERGENT).unwrap();
    let o = pdd(
        &[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("diverged"));
}

#[test]
fn config_output_dir_is_relative_to_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ok.toml");
    fs::write(
        &cfg,
        DIVERGENT
            .replace("tau = 10.0", "tau = 0.2")
            .replace("[problem]", "output_dir = \"rel\"\n[problem]"),
    )
    .unwrap();
    let o = pdd(
        &["run", cfg.to_str().unwrap(), "--seed", "3"],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        listing(&dir.path().join("rel")),
        ["convergence.svg", "gd.csv"]
    );
}

#[test]
fn bad_inputs_fail() {
    assert!(!pdd(&["preset", "griewank"], None).status.success());
    assert!(!pdd(&["run", "/nonexistent/config.toml"], None)
        .status
        .success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    fs::write(
        &cfg,
        "x0 = [1.0]\noptimizers = []\n[problem]\nname = \"quadratic\"\ndiag = [1.0]\n",
    )
    .unwrap();
    let o = pdd(&["run", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least one optimizer"));
}

#[test]
fn print_config_round_trips() {
    let o = pdd(&["preset", "rosenbrock2d", "--print-config"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = pdd_core::harness::ExperimentConfig::from_toml(&text).unwrap();
    let expected = pdd_core::harness::preset("rosenbrock2d")
        .unwrap()
        .experiment()
        .unwrap();
    assert_eq!(cfg, expected);
}

#[test]
fn analyze_and_dynamics_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.toml");
    fs::write(
        &a,
        "x0 = [1.0, 1.0]\nsteps = 100\n[problem]\nname = \"quadratic\"\ndiag = [0.5, 2.0]\n[spectral]\nmus = [4.0, 1.0]\na = [1.0]\ngamma = 1.5\neps = 0.0\n",
    )
    .unwrap();
    let out = dir.path().join("an");
    let o = pdd(
        &[
            "analyze",
            a.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        listing(&out),
        ["constants.csv", "decay.csv", "spectral.csv"]
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("certified = true"));

    let d = dir.path().join("d.toml");
    fs::write(
        &d,
        "x0 = [1.0, 0.0]\nspecial = \"nesterov\"\nt_end = 5.0\ndt = 0.01\n[problem]\nname = \"quadratic\"\ndiag = [1.0, 4.0]\n",
    )
    .unwrap();
    let out = dir.path().join("dy");
    let o = pdd(
        &[
            "dynamics",
            d.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("dynamics.csv")).unwrap();
    assert!(csv.starts_with("t,f,grad_norm,lyapunov,x_norm,p_norm\n"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("second-order residual ="));
}
