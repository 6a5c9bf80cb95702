//! Bias-free multilayer perceptrons: construction, initialisation,
//! forward/backward passes and training on least-squares tasks.
//!
//! Data is stored one sample per column. The loss is
//! `1/2 ||Y - f(X)||_F^2`, summed over samples; [`TrainConfig::eta_scale`]
//! multiplies every step size when a per-sample normaliser is wanted.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::LeastSquaresTask;
use crate::error::{Error, Result};
use crate::gram::{feature_gram_rank, GramKind};
use crate::matrix::DenseMatrix;
use crate::rng::{mix_seed, rng_from_seed};
use crate::spectral::{matrix_effective_rank, svd};

/// Kaiming gain for ReLU networks.
pub const DEFAULT_GAIN: f64 = std::f64::consts::SQRT_2;
/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;
/// Candidate step sizes tried by [`lr_sweep`].
pub const LR_GRID: [f64; 10] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    /// Tanh approximation.
    Gelu,
    /// `sin(x)`.
    Sine,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
            Activation::Sine => x.sin(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
            }
            Activation::Sine => x.cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Gelu => "gelu",
            Activation::Sine => "sine",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "gelu" => Ok(Activation::Gelu),
            "sine" => Ok(Activation::Sine),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_dims: Vec<usize>,
    activation: Activation,
    residual: bool,
}

impl NetworkSpec {
    pub fn new(layer_dims: Vec<usize>, activation: Activation, residual: bool) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Structural("a network needs an input and an output dimension".into()));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Structural("layer dimensions must be positive".into()));
        }
        if residual && layer_dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Structural("residual layers need equal dimensions".into()));
        }
        Ok(Self {
            layer_dims,
            activation,
            residual,
        })
    }

    /// `depth` square layers of width `width`.
    pub fn uniform(width: usize, depth: usize, activation: Activation, residual: bool) -> Result<Self> {
        Self::new(vec![width; depth + 1], activation, residual)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Entries `U(-scale, scale)`.
    Uniform,
    /// Entries `N(0, scale^2)`.
    Normal,
    /// Entries `N(0, scale^2 / fan_in)`; `scale` is the gain.
    ScaledNormal,
    /// A product of `product_depth` Gaussian matrices, rescaled to Frobenius
    /// norm `scale * sqrt(n)` and split evenly across the layers.
    DeepProduct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    pub scale: f64,
    pub product_depth: u32,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(kind: InitKind, scale: f64, product_depth: u32, seed: u64) -> Result<Self> {
        let s = Self {
            kind,
            scale,
            product_depth,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(bound: f64, seed: u64) -> Self {
        Self::raw(InitKind::Uniform, bound, 1, seed)
    }

    pub fn normal(std: f64, seed: u64) -> Self {
        Self::raw(InitKind::Normal, std, 1, seed)
    }

    pub fn scaled_normal(gain: f64, seed: u64) -> Self {
        Self::raw(InitKind::ScaledNormal, gain, 1, seed)
    }

    pub fn deep_product(product_depth: u32, scale: f64, seed: u64) -> Self {
        Self::raw(InitKind::DeepProduct, scale, product_depth, seed)
    }

    fn raw(kind: InitKind, scale: f64, product_depth: u32, seed: u64) -> Self {
        Self {
            kind,
            scale,
            product_depth,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("init scale {} must be positive", self.scale)));
        }
        if self.kind == InitKind::DeepProduct && self.product_depth == 0 {
            return Err(Error::InvalidParameter("deep_product needs product_depth >= 1".into()));
        }
        Ok(())
    }
}

impl Default for InitSpec {
    fn default() -> Self {
        Self::scaled_normal(DEFAULT_GAIN, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Momentum,
    Nesterov,
    Adam,
    RandomSearch,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Nesterov => "nesterov",
            OptimizerKind::Adam => "adam",
            OptimizerKind::RandomSearch => "random_search",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(OptimizerKind::Gd),
            "momentum" => Ok(OptimizerKind::Momentum),
            "nesterov" => Ok(OptimizerKind::Nesterov),
            "adam" => Ok(OptimizerKind::Adam),
            "random_search" => Ok(OptimizerKind::RandomSearch),
            other => Err(Error::InvalidParameter(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    /// Optimizer steps, or trials for random search.
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub momentum_beta: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    /// Minibatch size; `None` is full batch.
    pub batch: Option<usize>,
    pub record_every: usize,
    pub seed: u64,
    /// Multiplies `eta`; e.g. `1 / samples` to average the loss.
    pub eta_scale: f64,
    /// Initialisation family sampled by the random-search optimizer.
    pub search_init: Option<InitSpec>,
}

impl TrainConfig {
    pub fn new(eta: f64, steps: usize, optimizer: OptimizerKind) -> Self {
        Self {
            eta,
            steps,
            optimizer,
            momentum_beta: 0.9,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            batch: None,
            record_every: 100,
            seed: 0,
            eta_scale: 1.0,
            search_init: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta {} must be positive", self.eta));
        }
        if !(self.eta_scale > 0.0 && self.eta_scale.is_finite()) {
            return bad(format!("eta_scale {} must be positive", self.eta_scale));
        }
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.momentum_beta) || !beta_ok(self.adam_betas.0) || !beta_ok(self.adam_betas.1) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be positive".into());
        }
        if self.batch == Some(0) {
            return bad("batch size must be positive".into());
        }
        if self.optimizer == OptimizerKind::RandomSearch && self.search_init.is_none() {
            return bad("random_search needs search_init".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub weights: Vec<DenseMatrix>,
    pub step_count: usize,
}

impl NetworkState {
    pub fn new(spec: NetworkSpec, weights: Vec<DenseMatrix>) -> Result<Self> {
        if weights.len() != spec.depth() {
            return Err(Error::Structural(format!(
                "{} weights for a depth-{} network",
                weights.len(),
                spec.depth()
            )));
        }
        for (i, w) in weights.iter().enumerate() {
            let want = (spec.layer_dims[i + 1], spec.layer_dims[i]);
            if w.shape() != want {
                return Err(Error::Structural(format!(
                    "weight {i} is {}x{}, expected {}x{}",
                    w.rows(),
                    w.cols(),
                    want.0,
                    want.1
                )));
            }
        }
        Ok(Self {
            spec,
            weights,
            step_count: 0,
        })
    }

    /// Collapsed linear map of a linear-activation network (`W_i + I` per layer
    /// when residual). `None` for non-linear networks.
    pub fn end_to_end(&self) -> Option<DenseMatrix> {
        if self.spec.activation != Activation::Linear {
            return None;
        }
        let mut acc: Option<DenseMatrix> = None;
        for w in &self.weights {
            let layer = if self.spec.residual {
                w + &DenseMatrix::identity(w.rows())
            } else {
                w.clone()
            };
            acc = Some(match acc {
                None => layer,
                Some(a) => &layer * &a,
            });
        }
        acc
    }
}

/// Fresh weights for `spec` drawn as described by `init`.
pub fn init_network(spec: &NetworkSpec, init: &InitSpec) -> Result<NetworkState> {
    init.validate()?;
    let mut rng = rng_from_seed(init.seed);
    let dims = &spec.layer_dims;
    let weights = match init.kind {
        InitKind::Uniform => dims
            .windows(2)
            .map(|w| DenseMatrix::random_uniform(w[1], w[0], init.scale, &mut rng))
            .collect(),
        InitKind::Normal => dims
            .windows(2)
            .map(|w| DenseMatrix::random_normal(w[1], w[0], init.scale, &mut rng))
            .collect(),
        InitKind::ScaledNormal => dims
            .windows(2)
            .map(|w| DenseMatrix::random_normal(w[1], w[0], init.scale / (w[0] as f64).sqrt(), &mut rng))
            .collect(),
        InitKind::DeepProduct => {
            let n = dims[0];
            if dims.iter().any(|&d| d != n) {
                return Err(Error::Structural("deep_product init needs square layers of one width".into()));
            }
            let mut m = DenseMatrix::random_normal(n, n, 1.0, &mut rng);
            for _ in 1..init.product_depth {
                let g = DenseMatrix::random_normal(n, n, 1.0, &mut rng);
                m = &g * &m;
                // keep magnitudes in range; only the direction of M matters here
                let norm = m.frobenius_norm();
                if norm > 0.0 {
                    m = m.scale(1.0 / norm);
                }
            }
            let norm = m.frobenius_norm();
            if !(norm > 0.0) {
                return Err(Error::Numeric("deep_product draw collapsed to zero".into()));
            }
            balanced_factors(&m.scale(init.scale * (n as f64).sqrt() / norm), spec.depth())?
        }
    };
    NetworkState::new(spec.clone(), weights)
}

/// Splits `m = U S V^T` into `d` factors `S^{1/d} V^T`, `S^{1/d}`, ...,
/// `U S^{1/d}` (input side first) whose product is `m`.
pub fn balanced_factors(m: &DenseMatrix, d: usize) -> Result<Vec<DenseMatrix>> {
    if d == 0 {
        return Err(Error::InvalidParameter("factor count must be at least 1".into()));
    }
    if d == 1 {
        return Ok(vec![m.clone()]);
    }
    let s = svd(m)?;
    let root: Vec<f64> = s.sigma().iter().map(|x| x.powf(1.0 / d as f64)).collect();
    let p = root.len();
    let first = DenseMatrix::from_fn(p, m.cols(), |r, c| root[r] * s.right[(c, r)]);
    let last = DenseMatrix::from_fn(m.rows(), p, |r, c| s.left[(r, c)] * root[c]);
    let mut out = Vec::with_capacity(d);
    out.push(first);
    for _ in 1..d - 1 {
        out.push(DenseMatrix::from_diag(p, p, &root));
    }
    out.push(last);
    Ok(out)
}

struct Cache {
    /// Input to each layer.
    inputs: Vec<DenseMatrix>,
    /// Pre-activation of each layer.
    pre: Vec<DenseMatrix>,
}

fn check_input(net: &NetworkState, x: &DenseMatrix) -> Result<()> {
    if x.rows() != net.spec.input_dim() {
        return Err(Error::Structural(format!(
            "input has {} rows, network expects {}",
            x.rows(),
            net.spec.input_dim()
        )));
    }
    Ok(())
}

/// With `keep`, returns the backward cache and no features.
fn run_forward(net: &NetworkState, x: &DenseMatrix, keep: bool) -> (DenseMatrix, Vec<DenseMatrix>, Option<Cache>) {
    let d = net.weights.len();
    let act = net.spec.activation;
    let mut h = x.clone();
    let mut features = Vec::with_capacity(if keep { 0 } else { d });
    let mut cache = keep.then(|| Cache {
        inputs: Vec::with_capacity(d),
        pre: Vec::with_capacity(d),
    });
    for (i, w) in net.weights.iter().enumerate() {
        let mut z = w * &h;
        if net.spec.residual {
            z.axpy(1.0, &h);
        }
        let next = if i + 1 < d && act != Activation::Linear {
            z.map(|v| act.apply(v))
        } else {
            z.clone()
        };
        if let Some(c) = cache.as_mut() {
            c.inputs.push(std::mem::replace(&mut h, next));
            c.pre.push(z);
        } else {
            h = next;
            features.push(h.clone());
        }
    }
    (h, features, cache)
}

/// Output and every layer's post-activation map. The last entry is the
/// network output itself.
pub fn forward(net: &NetworkState, x: &DenseMatrix) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
    check_input(net, x)?;
    let (out, features, _) = run_forward(net, x, false);
    Ok((out, features))
}

/// Network output only.
pub fn predict(net: &NetworkState, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_input(net, x)?;
    let d = net.weights.len();
    let act = net.spec.activation;
    let mut h = x.clone();
    for (i, w) in net.weights.iter().enumerate() {
        let mut z = w * &h;
        if net.spec.residual {
            z.axpy(1.0, &h);
        }
        h = if i + 1 < d && act != Activation::Linear {
            z.map(|v| act.apply(v))
        } else {
            z
        };
    }
    Ok(h)
}

fn check_target(net: &NetworkState, x: &DenseMatrix, y: &DenseMatrix) -> Result<()> {
    check_input(net, x)?;
    if y.shape() != (net.spec.output_dim(), x.cols()) {
        return Err(Error::Structural(format!(
            "targets are {}x{}, expected {}x{}",
            y.rows(),
            y.cols(),
            net.spec.output_dim(),
            x.cols()
        )));
    }
    Ok(())
}

/// `1/2 ||y - f(x)||^2`.
pub fn loss(net: &NetworkState, x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    check_target(net, x, y)?;
    Ok(half_sq(&(&predict(net, x)? - y)))
}

fn half_sq(r: &DenseMatrix) -> f64 {
    0.5 * r.as_slice().iter().map(|v| v * v).sum::<f64>()
}

fn loss_and_gradients(net: &NetworkState, x: &DenseMatrix, y: &DenseMatrix) -> (f64, Vec<DenseMatrix>) {
    let (out, _, cache) = run_forward(net, x, true);
    let cache = cache.expect("cache requested");
    let act = net.spec.activation;
    let mut delta = &out - y;
    let value = half_sq(&delta);
    let d = net.weights.len();
    let mut grads = vec![DenseMatrix::zeros(1, 1); d];
    for i in (0..d).rev() {
        grads[i] = delta.mul_t(&cache.inputs[i]);
        if i == 0 {
            break;
        }
        let mut back = net.weights[i].t_mul(&delta);
        if net.spec.residual {
            back.axpy(1.0, &delta);
        }
        if act != Activation::Linear {
            let pre = &cache.pre[i - 1];
            for (b, z) in back.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *b *= act.derivative(*z);
            }
        }
        delta = back;
    }
    (value, grads)
}

/// Gradients of `1/2 ||y - f(x)||^2` with respect to every weight.
pub fn backward(net: &NetworkState, x: &DenseMatrix, y: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    check_target(net, x, y)?;
    Ok(loss_and_gradients(net, x, y).1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    /// Full-batch training loss.
    pub loss: f64,
    /// Effective rank of the collapsed map (linear networks only).
    pub weight_rank: Option<f64>,
    /// Effective rank of the cosine Gram of the outputs on the training inputs.
    pub gram_rank: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrajectory {
    pub eta: f64,
    pub optimizer: OptimizerKind,
    pub records: Vec<TrainRecord>,
    pub final_state: NetworkState,
}

impl RunTrajectory {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }
}

fn record(net: &NetworkState, task: &LeastSquaresTask, step: usize, loss: f64) -> TrainRecord {
    let weight_rank = net.end_to_end().and_then(|w| matrix_effective_rank(&w).ok());
    let gram_rank = predict(net, &task.x)
        .ok()
        .and_then(|out| feature_gram_rank(&out, GramKind::Cosine).ok());
    TrainRecord {
        step,
        loss,
        weight_rank,
        gram_rank,
    }
}

fn diverged(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

/// Runs `cfg.optimizer` from `net` and records progress every
/// `cfg.record_every` steps and at the end.
pub fn train(net: &NetworkState, task: &LeastSquaresTask, cfg: &TrainConfig) -> Result<RunTrajectory> {
    cfg.validate()?;
    check_target(net, &task.x, &task.y)?;
    if cfg.optimizer == OptimizerKind::RandomSearch {
        return train_random_search(net, task, cfg);
    }
    let eta = cfg.eta * cfg.eta_scale;
    let mut state = net.clone();
    let mut records = Vec::new();
    let shapes: Vec<(usize, usize)> = state.weights.iter().map(|w| w.shape()).collect();
    let zeros = || shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect::<Vec<_>>();
    let mut first = zeros();
    let mut second = zeros();

    let q = task.x.cols();
    let batch = cfg.batch.filter(|&b| b < q);
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..q).collect();
    let mut cursor = q;

    let initial = loss(&state, &task.x, &task.y)?;
    if diverged(initial) {
        return Err(Error::Divergence { step: 0, loss: initial });
    }
    records.push(record(&state, task, 0, initial));

    for step in 1..=cfg.steps {
        let (batch_loss, grads) = match batch {
            None => loss_and_gradients(&state, &task.x, &task.y),
            Some(b) => {
                if cursor + b > q {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let idx = &order[cursor..cursor + b];
                cursor += b;
                loss_and_gradients(&state, &task.x.select_columns(idx), &task.y.select_columns(idx))
            }
        };
        if diverged(batch_loss) {
            return Err(Error::Divergence {
                step: step - 1,
                loss: batch_loss,
            });
        }
        apply_update(&mut state.weights, &grads, &mut first, &mut second, cfg, eta, step);
        state.step_count += 1;
        if step % cfg.record_every == 0 || step == cfg.steps {
            let l = loss(&state, &task.x, &task.y)?;
            if diverged(l) {
                return Err(Error::Divergence { step, loss: l });
            }
            records.push(record(&state, task, step, l));
        }
    }
    Ok(RunTrajectory {
        eta: cfg.eta,
        optimizer: cfg.optimizer,
        records,
        final_state: state,
    })
}

fn apply_update(
    weights: &mut [DenseMatrix],
    grads: &[DenseMatrix],
    first: &mut [DenseMatrix],
    second: &mut [DenseMatrix],
    cfg: &TrainConfig,
    eta: f64,
    step: usize,
) {
    for (i, g) in grads.iter().enumerate() {
        let w = weights[i].as_mut_slice();
        let g = g.as_slice();
        match cfg.optimizer {
            OptimizerKind::Gd => {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= eta * gi;
                }
            }
            OptimizerKind::Momentum | OptimizerKind::Nesterov => {
                let beta = cfg.momentum_beta;
                let nesterov = cfg.optimizer == OptimizerKind::Nesterov;
                for ((wi, gi), vi) in w.iter_mut().zip(g).zip(first[i].as_mut_slice()) {
                    *vi = beta * *vi + gi;
                    *wi -= eta * if nesterov { gi + beta * *vi } else { *vi };
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = cfg.adam_betas;
                let c1 = 1.0 - b1.powi(step as i32);
                let c2 = 1.0 - b2.powi(step as i32);
                let m = first[i].as_mut_slice();
                let v = second[i].as_mut_slice();
                for (k, (wi, gi)) in w.iter_mut().zip(g).enumerate() {
                    m[k] = b1 * m[k] + (1.0 - b1) * gi;
                    v[k] = b2 * v[k] + (1.0 - b2) * gi * gi;
                    *wi -= eta * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.adam_eps);
                }
            }
            OptimizerKind::RandomSearch => unreachable!("handled separately"),
        }
    }
}

fn train_random_search(net: &NetworkState, task: &LeastSquaresTask, cfg: &TrainConfig) -> Result<RunTrajectory> {
    let init = cfg.search_init.expect("validated");
    let mut best = net.clone();
    let mut best_loss = loss(&best, &task.x, &task.y)?;
    let mut records = vec![record(&best, task, 0, best_loss)];
    for trial in 1..=cfg.steps {
        let candidate = init_network(&net.spec, &init.with_seed(mix_seed(init.seed, trial as u64)))?;
        let l = loss(&candidate, &task.x, &task.y)?;
        if l < best_loss {
            best = candidate;
            best_loss = l;
        }
        if trial % cfg.record_every == 0 || trial == cfg.steps {
            records.push(record(&best, task, trial, best_loss));
        }
    }
    best.step_count = cfg.steps;
    Ok(RunTrajectory {
        eta: cfg.eta,
        optimizer: cfg.optimizer,
        records,
        final_state: best,
    })
}

/// Lowest-loss network among `trials` initialisations. Trial 0 uses
/// `init.seed`; trial `t` uses `mix_seed(init.seed, t)`.
pub fn random_search(
    spec: &NetworkSpec,
    init: &InitSpec,
    task: &LeastSquaresTask,
    trials: usize,
) -> Result<NetworkState> {
    if trials == 0 {
        return Err(Error::InvalidParameter("random search needs at least one trial".into()));
    }
    let mut best = init_network(spec, init)?;
    let mut best_loss = loss(&best, &task.x, &task.y)?;
    for t in 1..trials {
        let candidate = init_network(spec, &init.with_seed(mix_seed(init.seed, t as u64)))?;
        let l = loss(&candidate, &task.x, &task.y)?;
        if l < best_loss {
            best = candidate;
            best_loss = l;
        }
    }
    Ok(best)
}

/// Trains once per step size in [`LR_GRID`] and keeps the lowest final loss
/// (ties go to the smaller step). Diverged runs are discarded.
pub fn lr_sweep(
    spec: &NetworkSpec,
    init: &InitSpec,
    task: &LeastSquaresTask,
    cfg_base: &TrainConfig,
) -> Result<(f64, RunTrajectory)> {
    lr_sweep_over(spec, init, task, cfg_base, &LR_GRID)
}

/// [`lr_sweep`] over a caller-chosen grid.
pub fn lr_sweep_over(
    spec: &NetworkSpec,
    init: &InitSpec,
    task: &LeastSquaresTask,
    cfg_base: &TrainConfig,
    grid: &[f64],
) -> Result<(f64, RunTrajectory)> {
    let net = init_network(spec, init)?;
    let runs: Vec<Result<RunTrajectory>> = grid
        .par_iter()
        .map(|&eta| {
            let cfg = TrainConfig {
                eta,
                ..cfg_base.clone()
            };
            train(&net, task, &cfg)
        })
        .collect();
    let mut best: Option<RunTrajectory> = None;
    for run in runs {
        match run {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let (lr, lb) = (r.final_loss(), b.final_loss());
                        lr < lb || (lr == lb && r.eta < b.eta)
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(Error::Divergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or(Error::SweepFailure)?;
    Ok((best.eta, best))
}
