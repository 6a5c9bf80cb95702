//! Typed parameter tables, one per experiment. Every field has a default;
//! unknown keys are rejected.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramKind;
use crate::netsim::{Activation, InitKind, OptimizerKind, DEFAULT_GAIN, LR_GRID};

pub(crate) fn parse<P: DeserializeOwned>(table: &toml::Table) -> Result<P> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::config("params", e.message().to_string()))
}

fn need(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!("params.{path}"), message))
    }
}

fn positive_list(v: &[usize], path: &str) -> Result<()> {
    need(!v.is_empty() && v.iter().all(|&x| x > 0), path, "must be a non-empty list of positive integers")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasuresParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub task_rank: usize,
    pub samples: usize,
    pub steps: usize,
    pub record_every: usize,
    /// Step size before division by `samples`.
    pub eta: f64,
    pub gain: f64,
    pub taus: Vec<f64>,
}

impl Default for MeasuresParams {
    fn default() -> Self {
        Self {
            width: 16,
            depths: vec![1, 2, 4, 8],
            task_rank: 4,
            samples: 64,
            steps: 2000,
            record_every: 100,
            eta: 0.05,
            gain: 1.0,
            taus: vec![0.001, 0.005, 0.01],
        }
    }
}

impl MeasuresParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need(self.width > 0 && self.samples > 0, "width", "width and samples must be positive")?;
        need((1..=self.width).contains(&self.task_rank), "task_rank", "must lie in 1..=width")?;
        need(self.record_every > 0, "record_every", "must be positive")?;
        need(self.eta > 0.0 && self.gain > 0.0, "eta", "eta and gain must be positive")?;
        need(self.taus.iter().all(|t| *t > 0.0 && *t < 1.0), "taus", "thresholds must lie in (0, 1)")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Params {
    pub max_depth: u32,
    pub nodes: usize,
    /// Points per depth in the tabulated density curve.
    pub density_points: usize,
    /// Size of the finite random products compared against the limit; 0 skips them.
    pub finite_n: usize,
    pub finite_draws: usize,
}

impl Default for Theorem1Params {
    fn default() -> Self {
        Self {
            max_depth: 8,
            nodes: crate::rmt::DEFAULT_NODES,
            density_points: 200,
            finite_n: 128,
            finite_draws: 4,
        }
    }
}

impl Theorem1Params {
    pub fn validate(&self) -> Result<()> {
        need(self.max_depth >= 1, "max_depth", "must be at least 1")?;
        need(self.nodes >= 101 && self.nodes % 2 == 1, "nodes", "must be odd and at least 101")?;
        need(self.density_points >= 2, "density_points", "must be at least 2")?;
        need(self.finite_n == 0 || self.finite_draws > 0, "finite_draws", "must be positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankdistParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub inputs: usize,
    pub samples: usize,
    pub inits: Vec<InitKind>,
    /// Standard deviation, uniform bound, or gain depending on the init kind.
    pub scale: f64,
    pub product_depth: u32,
    pub kind: GramKind,
    pub activation: Activation,
    pub bins: usize,
    pub window: usize,
    pub polyorder: usize,
}

impl Default for RankdistParams {
    fn default() -> Self {
        Self {
            width: 32,
            depths: vec![1, 2, 4, 6],
            inputs: 256,
            samples: 512,
            inits: vec![InitKind::Normal, InitKind::Uniform],
            scale: 1.0,
            product_depth: 1,
            kind: GramKind::Cosine,
            activation: Activation::Linear,
            bins: crate::montecarlo::DEFAULT_BINS,
            window: crate::montecarlo::DEFAULT_WINDOW,
            polyorder: crate::montecarlo::DEFAULT_POLYORDER,
        }
    }
}

impl RankdistParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need(self.width > 0, "width", "must be positive")?;
        need(self.inputs >= 2, "inputs", "must be at least 2")?;
        need(self.samples >= 2, "samples", "must be at least 2")?;
        need(!self.inits.is_empty(), "inits", "must not be empty")?;
        need(self.scale > 0.0, "scale", "must be positive")?;
        need(self.bins >= 8, "bins", "must be at least 8")?;
        need(
            self.window % 2 == 1 && self.window > self.polyorder && self.window <= self.bins,
            "window",
            "must be odd, above polyorder and at most bins",
        )
    }
}

/// Which study the least-squares experiment runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeastsqVariant {
    /// Final training loss over a depth x task-rank grid.
    #[default]
    LossGrid,
    /// Converged Gram rank per depth, under default and deep-product init.
    TrainedRank,
    /// Converged Gram rank per depth for several optimizers.
    Optimizers,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramInputs {
    Train,
    #[default]
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossGridParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub task_ranks: Vec<usize>,
    /// Restricts the grid to these `[depth, task_rank]` cells.
    pub cells: Option<Vec<[usize; 2]>>,
    pub samples: usize,
    pub steps: usize,
    /// 24000 steps with a tenfold step-size drop at 18000.
    pub full_length: bool,
    pub seeds: usize,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub gain: f64,
    pub lr_grid: Vec<f64>,
    pub record_every: usize,
    pub zero_loss_threshold: f64,
}

impl Default for LossGridParams {
    fn default() -> Self {
        Self {
            width: 64,
            depths: vec![1, 8, 32],
            task_ranks: vec![1, 16, 64],
            cells: None,
            samples: 128,
            steps: 5000,
            full_length: false,
            seeds: 3,
            activation: Activation::Relu,
            optimizer: OptimizerKind::Momentum,
            gain: DEFAULT_GAIN,
            lr_grid: LR_GRID.to_vec(),
            record_every: 500,
            zero_loss_threshold: 1e-4,
        }
    }
}

impl LossGridParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        positive_list(&self.task_ranks, "task_ranks")?;
        need(self.task_ranks.iter().all(|&r| r <= self.width), "task_ranks", "must not exceed width")?;
        if let Some(cells) = &self.cells {
            need(
                cells.iter().all(|c| c[0] > 0 && (1..=self.width).contains(&c[1])),
                "cells",
                "cells are [depth, task_rank] pairs",
            )?;
        }
        need(self.samples > 0 && self.seeds > 0, "samples", "samples and seeds must be positive")?;
        need(self.optimizer != OptimizerKind::RandomSearch, "optimizer", "use the optimizers variant")?;
        need(!self.lr_grid.is_empty() && self.lr_grid.iter().all(|e| *e > 0.0), "lr_grid", "must be positive")?;
        need(self.record_every > 0 && self.gain > 0.0, "record_every", "record_every and gain must be positive")
    }

    /// `(depth, task_rank)` pairs to run, in output order.
    pub fn grid(&self) -> Vec<(usize, usize)> {
        match &self.cells {
            Some(c) => c.iter().map(|c| (c[0], c[1])).collect(),
            None => self
                .depths
                .iter()
                .flat_map(|&d| self.task_ranks.iter().map(move |&r| (d, r)))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitChoice {
    Default,
    DeepProduct,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainedRankParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub task_rank: usize,
    pub samples: usize,
    pub test_samples: usize,
    pub steps: usize,
    pub seeds: usize,
    pub gain: f64,
    pub init: InitChoice,
    pub product_depth: u32,
    pub lr_grid: Vec<f64>,
    pub zero_loss_threshold: f64,
    pub gram_inputs: GramInputs,
    pub kind: GramKind,
}

impl Default for TrainedRankParams {
    fn default() -> Self {
        Self {
            width: 32,
            depths: vec![1, 2, 4, 8],
            task_rank: 24,
            samples: 8,
            test_samples: 256,
            steps: 4000,
            seeds: 5,
            gain: 1.0,
            init: InitChoice::Both,
            product_depth: 32,
            lr_grid: LR_GRID.to_vec(),
            zero_loss_threshold: 1e-4,
            gram_inputs: GramInputs::Test,
            kind: GramKind::Cosine,
        }
    }
}

impl TrainedRankParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need((1..=self.width).contains(&self.task_rank), "task_rank", "must lie in 1..=width")?;
        need(self.samples >= 2 && self.test_samples >= 2, "samples", "need at least 2 samples")?;
        need(self.seeds > 0 && self.gain > 0.0, "seeds", "seeds and gain must be positive")?;
        need(self.product_depth > 0, "product_depth", "must be positive")?;
        need(!self.lr_grid.is_empty() && self.lr_grid.iter().all(|e| *e > 0.0), "lr_grid", "must be positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub task_rank: usize,
    pub samples: usize,
    pub test_samples: usize,
    pub steps: usize,
    pub repeats: usize,
    pub optimizers: Vec<OptimizerKind>,
    pub search_trials: usize,
    pub gain: f64,
    pub lr_grid: Vec<f64>,
    pub zero_loss_threshold: f64,
    pub gram_inputs: GramInputs,
    pub kind: GramKind,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            width: 32,
            depths: vec![1, 2, 4, 8],
            task_rank: 24,
            samples: 8,
            test_samples: 256,
            steps: 4000,
            repeats: 5,
            optimizers: vec![
                OptimizerKind::Gd,
                OptimizerKind::Momentum,
                OptimizerKind::Adam,
                OptimizerKind::RandomSearch,
            ],
            search_trials: 10_000,
            gain: 1.0,
            lr_grid: LR_GRID.to_vec(),
            zero_loss_threshold: 1e-4,
            gram_inputs: GramInputs::Test,
            kind: GramKind::Cosine,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need((1..=self.width).contains(&self.task_rank), "task_rank", "must lie in 1..=width")?;
        need(self.samples >= 2 && self.test_samples >= 2, "samples", "need at least 2 samples")?;
        need(self.repeats > 0 && self.search_trials > 0, "repeats", "repeats and search_trials must be positive")?;
        need(!self.optimizers.is_empty(), "optimizers", "must not be empty")?;
        need(!self.lr_grid.is_empty() && self.lr_grid.iter().all(|e| *e > 0.0), "lr_grid", "must be positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub samples: usize,
    pub etas: Vec<f64>,
    pub instances: usize,
    /// Factored gradient steps in the effective-rank trajectory table.
    pub trajectory_steps: usize,
    pub trajectory_eta: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            width: 6,
            depths: vec![1, 2, 3, 4],
            samples: 12,
            etas: vec![1e-2, 1e-3, 1e-4],
            instances: 3,
            trajectory_steps: 40,
            trajectory_eta: 2e-3,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need(self.width > 0 && self.samples > 0, "width", "width and samples must be positive")?;
        need(self.etas.len() >= 2 && self.etas.iter().all(|e| *e > 0.0), "etas", "need at least two positive step sizes")?;
        need(self.instances > 0, "instances", "must be positive")?;
        need(self.trajectory_eta > 0.0, "trajectory_eta", "must be positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeParams {
    pub width: usize,
    pub grid: usize,
    pub span: f64,
    /// Also tabulate the Gram-rank surface of two- and four-layer ReLU nets.
    pub kernel: bool,
    pub kernel_inputs: usize,
}

impl Default for LandscapeParams {
    fn default() -> Self {
        Self {
            width: 16,
            grid: 41,
            span: 1.0,
            kernel: false,
            kernel_inputs: 128,
        }
    }
}

impl LandscapeParams {
    pub fn validate(&self) -> Result<()> {
        need(self.width > 0, "width", "must be positive")?;
        need(self.grid >= 2 && self.grid % 2 == 1, "grid", "must be odd so the origin is a grid point")?;
        need(self.span > 0.0, "span", "must be positive")?;
        need(self.kernel_inputs >= 2, "kernel_inputs", "must be at least 2")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResnetParams {
    pub width: usize,
    pub depths: Vec<usize>,
    pub draws: usize,
    /// Residual branch multiplier; `1/sqrt(depth)` when absent.
    pub branch_scale: Option<f64>,
}

impl Default for ResnetParams {
    fn default() -> Self {
        Self {
            width: 32,
            depths: vec![2, 4, 8, 16, 32],
            draws: 16,
            branch_scale: None,
        }
    }
}

impl ResnetParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need(self.width > 0 && self.draws > 0, "width", "width and draws must be positive")?;
        need(self.branch_scale.is_none_or(|s| s >= 0.0), "branch_scale", "must be non-negative")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpandParams {
    pub rows: usize,
    pub cols: usize,
    pub depths: Vec<usize>,
    /// Hidden width; the layer's input size when absent.
    pub width: Option<usize>,
    pub bottleneck_width: usize,
    pub conv_in: usize,
    pub conv_out: usize,
    pub kernel: usize,
    pub image: usize,
    pub probes: usize,
}

impl Default for ExpandParams {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 12,
            depths: vec![1, 2, 3, 4],
            width: None,
            bottleneck_width: 4,
            conv_in: 3,
            conv_out: 8,
            kernel: 3,
            image: 9,
            probes: 32,
        }
    }
}

impl ExpandParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need(self.rows > 0 && self.cols > 0, "rows", "layer shape must be positive")?;
        need(self.width != Some(0) && self.bottleneck_width > 0, "width", "must be positive")?;
        need(self.conv_in > 0 && self.conv_out > 0 && self.kernel > 0, "kernel", "conv shape must be positive")?;
        need(self.image >= self.kernel, "image", "must be at least the kernel size")?;
        need(self.probes > 0, "probes", "must be positive")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankRelationParams {
    /// Directory holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
    pub mnist_dir: Option<String>,
    pub samples: usize,
    pub width: usize,
    pub depths: Vec<usize>,
    pub draws: usize,
    pub gain: f64,
    /// Input size of the synthetic stand-in data.
    pub synthetic_dim: usize,
}

impl Default for RankRelationParams {
    fn default() -> Self {
        Self {
            mnist_dir: None,
            samples: 256,
            width: 64,
            depths: (1..=8).collect(),
            draws: 8,
            gain: 1.0,
            synthetic_dim: 784,
        }
    }
}

impl RankRelationParams {
    pub fn validate(&self) -> Result<()> {
        positive_list(&self.depths, "depths")?;
        need(self.samples >= 2, "samples", "must be at least 2")?;
        need(self.width > 0 && self.draws > 0, "width", "width and draws must be positive")?;
        need(self.gain > 0.0, "gain", "must be positive")?;
        need(self.synthetic_dim >= self.samples, "synthetic_dim", "must be at least samples")
    }
}
