//! Shared fixtures for the criterion benches.

use pdd_core::harness::presets::LOGSUMEXP_SCALE;
use pdd_core::harness::{preset, ExperimentConfig};
use pdd_core::objective::{make_diag_dominant_q, RegLogSumExp};
use pdd_core::optimizers::{PddParams, PddState};
use pdd_core::toynet::{make_blobs, MlpParams, TrainConfig};
use pdd_core::{Matrix, Vector};

/// Regularized log-sum-exp of dimension `n` with the parameters of the
/// identity-preconditioned PDD run of the logsumexp preset.
pub fn logsumexp_fixture(n: usize) -> (RegLogSumExp, PddParams, PddState) {
    let q = make_diag_dominant_q(n, 0).expect("n > 0") * LOGSUMEXP_SCALE;
    let (ln, l1) = pdd_core::linalg::sym_min_max(&q);
    let t = 2.0 / (l1 + ln);
    let params = PddParams::new(t, t, 10.0, 1.0, 1.0).expect("valid parameters");
    let obj = RegLogSumExp::new(q).expect("positive definite");
    (obj, params, PddState::new(Vector::from_element(n, 0.1)))
}

/// The rosenbrock2d preset restricted to PDD, capped at `max_iter` and
/// without file output.
pub fn rosenbrock_pdd(max_iter: usize) -> ExperimentConfig {
    let mut cfg = preset("rosenbrock2d")
        .expect("known preset")
        .experiment()
        .expect("experiment");
    cfg.optimizers.retain(|o| o.kind() == "pdd");
    cfg.outputs.clear();
    cfg.max_iter = max_iter;
    cfg.grad_tol = 0.0;
    cfg
}

/// Freshly initialized network and one training batch of the default toy
/// configuration.
pub fn mlp_fixture() -> (MlpParams, Matrix, Vec<usize>) {
    let cfg = TrainConfig::default();
    let data =
        make_blobs(cfg.data_seed, cfg.n, cfg.d_in, cfg.classes, cfg.spread).expect("valid blobs");
    let params = MlpParams::init(&cfg.sizes(), 0).expect("valid sizes");
    let (x, y) = data.batch(&data.train[..cfg.batch_size]);
    (params, x, y)
}
