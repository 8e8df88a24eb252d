//! A small ReLU classifier trained with stochastic versions of the
//! optimizers on Gaussian blobs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::all_finite;
use crate::objective::Objective;
use crate::optimizers::{igahd_update, nag_update, pdd_update, PddParams, PddState};
use crate::{Matrix, PddError, Result, Vector};

/// Labelled points with a fixed train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows `idx` as a batch.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        let x = Matrix::from_fn(idx.len(), self.dim(), |r, c| self.features[(idx[r], c)]);
        let y = idx.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    /// Per-class means of the training rows.
    pub fn train_centroids(&self) -> Matrix {
        let mut sums = Matrix::zeros(self.classes, self.dim());
        let mut counts = vec![0usize; self.classes];
        for &i in &self.train {
            let k = self.labels[i];
            counts[k] += 1;
            let mut row = sums.row_mut(k);
            row += self.features.row(i);
        }
        for (k, &c) in counts.iter().enumerate() {
            sums.row_mut(k).scale_mut(1.0 / c.max(1) as f64);
        }
        sums
    }
}

/// `k` Gaussian clusters around random unit-norm centers. Each class is split
/// 80/20 into train and test, so every class appears in both.
pub fn make_blobs(seed: u64, n: usize, d_in: usize, k: usize, spread: f64) -> Result<Dataset> {
    if k < 2 || d_in == 0 {
        return Err(PddError::invalid("blobs need k >= 2 classes and d_in >= 1"));
    }
    if n < 10 * k {
        return Err(PddError::invalid(format!(
            "blobs need n >= 10k = {}, got {n}",
            10 * k
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(PddError::invalid("spread must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Matrix::from_fn(k, d_in, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut row in centers.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let features = Matrix::from_fn(n, d_in, |r, c| {
        centers[(labels[r], c)] + spread * rng.sample::<f64, _>(StandardNormal)
    });
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..k {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let cut = (members.len() * 4).div_ceil(5);
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Dataset {
        features,
        labels,
        classes: k,
        train,
        test,
        seed,
    })
}

/// Weights (`out x in`) and biases of a fully connected ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(PddError::invalid(
                "layer sizes must have length >= 2 and be positive",
            ));
        }
        let weights = sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        let biases = sizes[1..].iter().map(|&s| Vector::zeros(s)).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut params.weights {
            let bound = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..bound));
        }
        Ok(params)
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weights (column-major) then bias, layer by layer.
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        Vector::from_vec(out)
    }

    pub fn unflatten(sizes: &[usize], flat: &Vector) -> Result<Self> {
        let mut params = Self::zeros(sizes)?;
        if flat.len() != params.num_params() {
            return Err(PddError::DimensionMismatch {
                expected: params.num_params(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for (w, b) in params.weights.iter_mut().zip(&mut params.biases) {
            let nw = w.len();
            w.as_mut_slice()
                .copy_from_slice(&flat.as_slice()[at..at + nw]);
            at += nw;
            let nb = b.len();
            b.as_mut_slice()
                .copy_from_slice(&flat.as_slice()[at..at + nb]);
            at += nb;
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Output logits, one row per sample.
    pub fn logits(&self, x: &Matrix) -> Matrix {
        self.forward(x).pop().expect("at least one layer").0
    }

    /// `(pre-activation, activation)` per layer; the last activation is
    /// unused and equals the logits.
    fn forward(&self, x: &Matrix) -> Vec<(Matrix, Matrix)> {
        let layers = self.weights.len();
        let mut out: Vec<(Matrix, Matrix)> = Vec::with_capacity(layers);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = out.last().map_or(x, |(_, a)| a);
            let mut z = input * w.transpose();
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            let a = if l + 1 < layers {
                z.map(|v| v.max(0.0))
            } else {
                z.clone()
            };
            out.push((z, a));
        }
        out
    }

    pub fn accuracy(&self, x: &Matrix, y: &[usize]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let logits = self.logits(x);
        let hits = logits
            .row_iter()
            .zip(y)
            .filter(|(row, &label)| row.transpose().argmax().0 == label)
            .count();
        hits as f64 / y.len() as f64
    }
}

/// Mean softmax cross-entropy and its gradient by backpropagation.
pub fn mlp_loss_grad(params: &MlpParams, x: &Matrix, y: &[usize]) -> Result<(f64, MlpParams)> {
    let batch = y.len();
    if batch == 0 || x.nrows() != batch {
        return Err(PddError::invalid(
            "batch must be non-empty with one label per row",
        ));
    }
    let d_in = params.sizes[0];
    if x.ncols() != d_in {
        return Err(PddError::DimensionMismatch {
            expected: d_in,
            got: x.ncols(),
        });
    }
    let k = *params.sizes.last().expect("validated sizes");
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(PddError::invalid(format!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let acts = params.forward(x);
    let logits = &acts.last().expect("at least one layer").0;
    let mut delta = Matrix::zeros(batch, k);
    let mut loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = logits.row(r);
        let m = row.max();
        let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + sum.ln();
        loss += log_z - row[label];
        for c in 0..k {
            delta[(r, c)] = (row[c] - log_z).exp();
        }
        delta[(r, label)] -= 1.0;
    }
    let inv = 1.0 / batch as f64;
    loss *= inv;
    delta *= inv;

    let mut grads = MlpParams::zeros(&params.sizes)?;
    for l in (0..params.weights.len()).rev() {
        let input = if l == 0 { x } else { &acts[l - 1].1 };
        grads.weights[l] = delta.transpose() * input;
        grads.biases[l] = delta.row_sum().transpose();
        if l > 0 {
            let mut back = &delta * &params.weights[l];
            back.zip_apply(&acts[l - 1].0, |g, z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            delta = back;
        }
    }
    Ok((loss, grads))
}

/// The loss of one mini-batch as a function of the flattened parameters.
pub struct BatchLoss<'a> {
    pub sizes: &'a [usize],
    pub x: &'a Matrix,
    pub y: &'a [usize],
}

impl BatchLoss<'_> {
    fn eval(&self, flat: &Vector) -> (f64, Vector) {
        let params = MlpParams::unflatten(self.sizes, flat).expect("length checked by caller");
        let (loss, grads) = mlp_loss_grad(&params, self.x, self.y).expect("batch validated");
        (loss, grads.flatten())
    }
}

impl Objective for BatchLoss<'_> {
    fn name(&self) -> &str {
        "mlp-batch"
    }
    fn dim(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
    fn value(&self, x: &Vector) -> f64 {
        self.eval(x).0
    }
    fn gradient(&self, x: &Vector) -> Vector {
        self.eval(x).1
    }
}

/// Optimizers available for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StochasticMethod {
    Sgd,
    NagMomentum,
    Pdd,
    Igahd,
    Adam,
}

impl StochasticMethod {
    pub const ALL: [Self; 5] = [
        Self::Sgd,
        Self::NagMomentum,
        Self::Pdd,
        Self::Igahd,
        Self::Adam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::NagMomentum => "nag_momentum",
            Self::Pdd => "pdd",
            Self::Igahd => "igahd",
            Self::Adam => "adam",
        }
    }
}

impl fmt::Display for StochasticMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StochasticMethod {
    type Err = PddError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PddError::Unknown {
                kind: "training method",
                name: s.to_string(),
            })
    }
}

/// Hyperparameters of the stochastic methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub sgd_tau: f64,
    pub nag_tau: f64,
    pub nag_momentum: f64,
    pub pdd_tau: f64,
    pub pdd_sigma: f64,
    pub pdd_epsilon: f64,
    pub pdd_omega: f64,
    pub pdd_a: f64,
    pub igahd_tau: f64,
    pub igahd_alpha: f64,
    pub igahd_beta1: f64,
    pub adam_tau: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            sgd_tau: 0.001,
            nag_tau: 0.001,
            nag_momentum: 0.9,
            pdd_tau: 0.001,
            pdd_sigma: 5.0,
            pdd_epsilon: 0.005,
            pdd_omega: 1.0,
            pdd_a: 1.0,
            igahd_tau: 0.001,
            igahd_alpha: 3.0,
            igahd_beta1: 0.01,
            adam_tau: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl Hyper {
    pub fn pdd_params(&self) -> Result<PddParams> {
        PddParams::new(
            self.pdd_tau,
            self.pdd_sigma,
            self.pdd_a,
            self.pdd_epsilon,
            self.pdd_omega,
        )
    }
}

/// Per-method memory carried across mini-batches.
#[derive(Debug, Clone, PartialEq)]
pub enum OptState {
    Sgd,
    Nag {
        y_prev: Vector,
        y_prev2: Vector,
    },
    Pdd {
        p: Vector,
    },
    Igahd {
        x_prev: Vector,
        g_prev: Option<Vector>,
        n: usize,
    },
    Adam {
        m: Vector,
        v: Vector,
        t: i32,
    },
}

impl OptState {
    /// Fresh state for parameters `theta`.
    pub fn new(method: StochasticMethod, theta: &Vector) -> Self {
        let zeros = Vector::zeros(theta.len());
        match method {
            StochasticMethod::Sgd => Self::Sgd,
            StochasticMethod::NagMomentum => Self::Nag {
                y_prev: theta.clone(),
                y_prev2: theta.clone(),
            },
            StochasticMethod::Pdd => Self::Pdd { p: zeros },
            StochasticMethod::Igahd => Self::Igahd {
                x_prev: theta.clone(),
                g_prev: None,
                n: 1,
            },
            StochasticMethod::Adam => Self::Adam {
                m: zeros.clone(),
                v: zeros,
                t: 0,
            },
        }
    }
}

/// One mini-batch update of the flattened parameters `theta`. Returns the
/// batch loss at the incoming `theta`.
///
/// IGAHD reuses the previous batch's gradient as `grad f(x^{n-1})`; on the
/// first call it is taken equal to the current gradient.
pub fn stochastic_step(
    method: StochasticMethod,
    hyper: &Hyper,
    state: &mut OptState,
    theta: &mut Vector,
    batch: &BatchLoss<'_>,
) -> Result<f64> {
    let (loss, g) = batch.eval(theta);
    if !loss.is_finite() || !all_finite(&g) {
        return Err(PddError::Diverged("loss"));
    }
    let next = match (method, &mut *state) {
        (StochasticMethod::Sgd, OptState::Sgd) => &*theta - &g * hyper.sgd_tau,
        (StochasticMethod::NagMomentum, OptState::Nag { y_prev, y_prev2 }) => {
            let (x, y) = nag_update(
                theta,
                y_prev,
                y_prev2,
                &g,
                hyper.nag_tau,
                hyper.nag_momentum,
            )?;
            *y_prev2 = std::mem::replace(y_prev, y);
            x
        }
        (StochasticMethod::Pdd, OptState::Pdd { p }) => {
            let s = PddState {
                x: std::mem::take(theta),
                p: std::mem::take(p),
                iter: 0,
            };
            let next = pdd_update(&s, &hyper.pdd_params()?, &g)?;
            *p = next.p;
            next.x
        }
        (StochasticMethod::Igahd, OptState::Igahd { x_prev, g_prev, n }) => {
            let gp = g_prev.take().unwrap_or_else(|| g.clone());
            let x = igahd_update(
                theta,
                x_prev,
                &g,
                &gp,
                *n,
                hyper.igahd_tau,
                hyper.igahd_alpha,
                hyper.igahd_beta1,
                batch,
            )?;
            *x_prev = theta.clone();
            *g_prev = Some(g);
            *n += 1;
            x
        }
        (StochasticMethod::Adam, OptState::Adam { m, v, t }) => {
            *t += 1;
            let (b1, b2) = (hyper.adam_beta1, hyper.adam_beta2);
            *m = &*m * b1 + &g * (1.0 - b1);
            *v = &*v * b2 + g.map(|gi| gi * gi) * (1.0 - b2);
            let c1 = 1.0 - b1.powi(*t);
            let c2 = 1.0 - b2.powi(*t);
            let step = m.zip_map(v, |mi, vi| (mi / c1) / ((vi / c2).sqrt() + hyper.adam_eps));
            &*theta - step * hyper.adam_tau
        }
        _ => {
            return Err(PddError::invalid(
                "optimizer state does not match the method",
            ))
        }
    };
    if !all_finite(&next) {
        return Err(PddError::Diverged("parameters"));
    }
    *theta = next;
    Ok(loss)
}

/// Synthetic data and training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub data_seed: u64,
    pub n: usize,
    pub d_in: usize,
    pub classes: usize,
    pub spread: f64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<StochasticMethod>,
    pub hyper: Hyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data_seed: 0,
            n: 2000,
            d_in: 20,
            classes: 5,
            spread: 0.5,
            hidden: vec![16, 16],
            epochs: 30,
            batch_size: 32,
            seeds: (0..10).collect(),
            methods: StochasticMethod::ALL.to_vec(),
            hyper: Hyper::default(),
        }
    }
}

impl TrainConfig {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.d_in];
        s.extend_from_slice(&self.hidden);
        s.push(self.classes);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PddError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(PddError::Config(
                "need at least one seed and one method".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub method: StochasticMethod,
    pub seed: u64,
    pub train_loss: f64,
    pub test_acc: f64,
}

/// Trains every (seed, method) pair. For a given seed all methods share the
/// initial weights and the per-epoch shuffles. A diverged run logs NaN loss
/// for its remaining epochs. Rows are ordered by seed, method, epoch.
pub fn train(config: &TrainConfig) -> Result<Vec<MetricRow>> {
    config.validate()?;
    let data = make_blobs(
        config.data_seed,
        config.n,
        config.d_in,
        config.classes,
        config.spread,
    )?;
    let sizes = config.sizes();
    MlpParams::zeros(&sizes)?;
    let jobs: Vec<(u64, StochasticMethod)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.methods.iter().map(move |&m| (s, m)))
        .collect();
    let runs: Vec<Result<Vec<MetricRow>>> = jobs
        .par_iter()
        .map(|&(seed, method)| train_one(config, &data, &sizes, seed, method))
        .collect();
    let mut rows = Vec::new();
    for r in runs {
        rows.extend(r?);
    }
    Ok(rows)
}

fn train_one(
    config: &TrainConfig,
    data: &Dataset,
    sizes: &[usize],
    seed: u64,
    method: StochasticMethod,
) -> Result<Vec<MetricRow>> {
    let mut theta = MlpParams::init(sizes, seed)?.flatten();
    let mut state = OptState::new(method, &theta);
    let (train_x, train_y) = data.batch(&data.train);
    let (test_x, test_y) = data.batch(&data.test);
    let mut order = data.train.clone();
    let mut rows = Vec::with_capacity(config.epochs);
    let mut diverged = false;
    for epoch in 1..=config.epochs {
        if !diverged {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64));
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                let (x, y) = data.batch(chunk);
                let batch = BatchLoss {
                    sizes,
                    x: &x,
                    y: &y,
                };
                match stochastic_step(method, &config.hyper, &mut state, &mut theta, &batch) {
                    Ok(_) => {}
                    Err(PddError::Diverged(_)) => {
                        log::warn!("{method} diverged at epoch {epoch} (seed {seed})");
                        diverged = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let (train_loss, test_acc) = if diverged {
            (f64::NAN, f64::NAN)
        } else {
            let params = MlpParams::unflatten(sizes, &theta)?;
            (
                mlp_loss_grad(&params, &train_x, &train_y)?.0,
                params.accuracy(&test_x, &test_y),
            )
        };
        rows.push(MetricRow {
            epoch,
            method,
            seed,
            train_loss,
            test_acc,
        });
    }
    Ok(rows)
}

/// Writes `epoch,method,seed,train_loss,test_acc`.
pub fn write_metrics_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    let csv_err = |source| PddError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PddError::io(path, e))?;
    Ok(())
}

/// Mean over seeds of the final-epoch value of `metric` for `method`.
pub fn mean_final(
    rows: &[MetricRow],
    method: StochasticMethod,
    metric: impl Fn(&MetricRow) -> f64,
) -> Option<f64> {
    let last = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| r.epoch)
        .max()?;
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.epoch == last)
        .map(metric)
        .collect();
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}
