use rayon::prelude::*;
use serde_json::json;

use super::{int, json_num, json_nums, median, num, sub_seed, weakly_decreasing, Outcome, Table};
use crate::dynamics::LeastSquaresTask;
use crate::error::Result;
use crate::gram::{feature_gram_rank, GramKind};
use crate::harness::params::{GramInputs, InitChoice, LossGridParams, OptimizerParams, TrainedRankParams};
use crate::netsim::{
    init_network, lr_sweep_over, predict, train, Activation, InitSpec, NetworkSpec, OptimizerKind, RunTrajectory,
    TrainConfig,
};
use crate::rng::stream;

/// Tolerance for ties in the weak depth ordering of trained ranks.
pub const ORDER_TOLERANCE: f64 = 1e-9;

/// Step counts of the two phases of a full-length run.
const FULL_LENGTH: (usize, usize) = (18_000, 6_000);

/// Final training losses of one `(depth, task_rank)` cell, one per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct LossCell {
    pub depth: usize,
    pub task_rank: usize,
    /// Per-sample training loss at the end of the best run of the sweep.
    pub losses: Vec<f64>,
    /// Step size the sweep selected, per seed.
    pub etas: Vec<f64>,
    /// `(step, loss)` of the selected run, per seed.
    pub curves: Vec<Vec<(usize, f64)>>,
}

impl LossCell {
    pub fn median(&self) -> f64 {
        median(&self.losses)
    }
}

fn curve(traj: &RunTrajectory, q: f64, offset: usize) -> Vec<(usize, f64)> {
    traj.records.iter().map(|r| (r.step + offset, r.loss / q)).collect()
}

/// Trains each cell of the depth x task-rank grid with a step-size sweep.
/// Tasks depend only on the task rank and seed, so every depth sees the same
/// data.
pub fn loss_grid(p: &LossGridParams, seed: u64) -> Result<Vec<LossCell>> {
    let cells = p.grid();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..p.seeds).map(move |s| (c, s))).collect();
    let q = p.samples as f64;
    let runs: Vec<Result<(f64, Vec<(usize, f64)>)>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let (depth, rank) = cells[c];
            let s = s as u64;
            let task =
                LeastSquaresTask::synthetic(p.width, p.width, p.samples, rank, &mut stream(sub_seed(seed, 10, rank as u64), s))?;
            let spec = NetworkSpec::uniform(p.width, depth, p.activation, false)?;
            let init = InitSpec::scaled_normal(p.gain, sub_seed(seed, 20 + depth as u64, s));
            let first_steps = if p.full_length { FULL_LENGTH.0 } else { p.steps };
            let mut cfg = TrainConfig::new(p.lr_grid[0], first_steps, p.optimizer);
            // steps follow the gradient of the mean over all output entries
            cfg.eta_scale = 2.0 / (q * p.width as f64);
            cfg.record_every = p.record_every;
            cfg.seed = sub_seed(seed, 30, s);
            let (eta, traj) = lr_sweep_over(&spec, &init, &task, &cfg, &p.lr_grid)?;
            let mut points = curve(&traj, q, 0);
            if p.full_length {
                let tail = TrainConfig {
                    eta: eta / 10.0,
                    steps: FULL_LENGTH.1,
                    ..cfg
                };
                let more = train(&traj.final_state, &task, &tail)?;
                points.extend(curve(&more, q, FULL_LENGTH.0).into_iter().skip(1));
            }
            Ok((eta, points))
        })
        .collect();
    let mut out: Vec<LossCell> = cells
        .iter()
        .map(|&(depth, task_rank)| LossCell {
            depth,
            task_rank,
            losses: Vec::new(),
            etas: Vec::new(),
            curves: Vec::new(),
        })
        .collect();
    for (&(c, _), r) in jobs.iter().zip(runs) {
        let (eta, points) = r?;
        let cell = &mut out[c];
        cell.losses.push(points.last().map_or(f64::NAN, |x| x.1));
        cell.etas.push(eta);
        cell.curves.push(points);
    }
    Ok(out)
}

pub fn loss_grid_outcome(p: &LossGridParams, seed: u64) -> Result<Outcome> {
    let cells = loss_grid(p, seed)?;
    let mut finals = Table::new("loss_grid", &["depth", "task_rank", "seed", "eta", "final_loss"]);
    let mut meds = Table::new("loss_grid_median", &["depth", "task_rank", "median_loss"]);
    let mut curves = Table::new("loss_curves", &["depth", "task_rank", "seed", "step", "loss"]);
    let mut stats = Vec::new();
    for c in &cells {
        for (s, (loss, eta)) in c.losses.iter().zip(&c.etas).enumerate() {
            finals.push(vec![int(c.depth), int(c.task_rank), int(s), num(*eta), num(*loss)]);
            for (step, l) in &c.curves[s] {
                curves.push(vec![int(c.depth), int(c.task_rank), int(s), int(step), num(*l)]);
            }
        }
        meds.push(vec![int(c.depth), int(c.task_rank), num(c.median())]);
        stats.push(json!({
            "depth": c.depth,
            "task_rank": c.task_rank,
            "median_loss": json_num(c.median()),
            "below_threshold": c.median() <= p.zero_loss_threshold,
        }));
    }
    let mut out = Outcome::default();
    out.stat("cells", stats);
    out.stat("zero_loss_threshold", json_num(p.zero_loss_threshold));
    out.stat("steps", if p.full_length { FULL_LENGTH.0 + FULL_LENGTH.1 } else { p.steps });
    out.notes.push(format!(
        "{} nets of width {}, {} optimizer, step size chosen per cell from {:?}",
        p.activation.name(),
        p.width,
        p.optimizer.name(),
        p.lr_grid
    ));
    if p.full_length {
        out.notes.push("full length: step size divided by 10 after 18000 steps".into());
    }
    out.tables.extend([finals, meds, curves]);
    Ok(out)
}

/// Gram ranks of trained linear nets for one label (init or optimizer) and depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RankCell {
    pub label: String,
    pub depth: usize,
    pub ranks: Vec<f64>,
    pub train_losses: Vec<f64>,
    pub etas: Vec<f64>,
}

impl RankCell {
    pub fn median_rank(&self) -> f64 {
        median(&self.ranks)
    }

    pub fn converged(&self, threshold: f64) -> usize {
        self.train_losses.iter().filter(|l| **l <= threshold).count()
    }
}

struct Setup {
    width: usize,
    task_rank: usize,
    samples: usize,
    test_samples: usize,
    gram_inputs: GramInputs,
    kind: GramKind,
}

impl Setup {
    fn tasks(&self, seed: u64, s: u64) -> Result<(LeastSquaresTask, LeastSquaresTask)> {
        let task = LeastSquaresTask::synthetic(
            self.width,
            self.width,
            self.samples,
            self.task_rank,
            &mut stream(sub_seed(seed, 40, 0), s),
        )?;
        let test = task.held_out(self.test_samples, &mut stream(sub_seed(seed, 41, 0), s))?;
        Ok((task, test))
    }

    fn rank(&self, traj: &RunTrajectory, task: &LeastSquaresTask, test: &LeastSquaresTask) -> Result<f64> {
        let x = match self.gram_inputs {
            GramInputs::Train => &task.x,
            GramInputs::Test => &test.x,
        };
        feature_gram_rank(&predict(&traj.final_state, x)?, self.kind)
    }
}

fn collect_cells(labels: &[String], depths: &[usize], reps: usize, runs: Vec<Result<(f64, f64, f64)>>) -> Result<Vec<RankCell>> {
    let mut cells = Vec::new();
    let mut it = runs.into_iter();
    for label in labels {
        for &depth in depths {
            let mut cell = RankCell {
                label: label.clone(),
                depth,
                ranks: Vec::new(),
                train_losses: Vec::new(),
                etas: Vec::new(),
            };
            for _ in 0..reps {
                let (rank, loss, eta) = it.next().expect("one run per job")?;
                cell.ranks.push(rank);
                cell.train_losses.push(loss);
                cell.etas.push(eta);
            }
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// Gradient descent with a step-size sweep on a low-rank task, under the
/// default and/or deep-product initialisation.
pub fn trained_rank(p: &TrainedRankParams, seed: u64) -> Result<Vec<RankCell>> {
    let setup = Setup {
        width: p.width,
        task_rank: p.task_rank,
        samples: p.samples,
        test_samples: p.test_samples,
        gram_inputs: p.gram_inputs,
        kind: p.kind,
    };
    let labels: Vec<&str> = match p.init {
        InitChoice::Default => vec!["default"],
        InitChoice::DeepProduct => vec!["deep_product"],
        InitChoice::Both => vec!["default", "deep_product"],
    };
    let jobs: Vec<(&str, usize, usize)> = labels
        .iter()
        .flat_map(|&l| p.depths.iter().flat_map(move |&d| (0..p.seeds).map(move |s| (l, d, s))))
        .collect();
    let q = p.samples as f64;
    let runs: Vec<Result<(f64, f64, f64)>> = jobs
        .par_iter()
        .map(|&(label, d, s)| {
            let s = s as u64;
            let (task, test) = setup.tasks(seed, s)?;
            let spec = NetworkSpec::uniform(p.width, d, Activation::Linear, false)?;
            let init_seed = sub_seed(seed, 50 + d as u64, s);
            let init = if label == "deep_product" {
                InitSpec::deep_product(p.product_depth, p.gain, init_seed)
            } else {
                InitSpec::scaled_normal(p.gain, init_seed)
            };
            let mut cfg = TrainConfig::new(p.lr_grid[0], p.steps, OptimizerKind::Gd);
            cfg.eta_scale = 1.0 / q;
            cfg.record_every = p.steps.max(1);
            let (eta, traj) = lr_sweep_over(&spec, &init, &task, &cfg, &p.lr_grid)?;
            Ok((setup.rank(&traj, &task, &test)?, traj.final_loss() / q, eta))
        })
        .collect();
    let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    collect_cells(&labels, &p.depths, p.seeds, runs)
}

/// The trained-rank study repeated for several optimizers from the default
/// initialisation. Random search keeps the best of `search_trials` draws.
pub fn optimizer_ranks(p: &OptimizerParams, seed: u64) -> Result<Vec<RankCell>> {
    let setup = Setup {
        width: p.width,
        task_rank: p.task_rank,
        samples: p.samples,
        test_samples: p.test_samples,
        gram_inputs: p.gram_inputs,
        kind: p.kind,
    };
    let jobs: Vec<(OptimizerKind, usize, usize)> = p
        .optimizers
        .iter()
        .flat_map(|&o| p.depths.iter().flat_map(move |&d| (0..p.repeats).map(move |s| (o, d, s))))
        .collect();
    let q = p.samples as f64;
    let runs: Vec<Result<(f64, f64, f64)>> = jobs
        .par_iter()
        .map(|&(opt, d, s)| {
            let s = s as u64;
            let (task, test) = setup.tasks(seed, s)?;
            let spec = NetworkSpec::uniform(p.width, d, Activation::Linear, false)?;
            let init = InitSpec::scaled_normal(p.gain, sub_seed(seed, 60 + d as u64, s));
            if opt == OptimizerKind::RandomSearch {
                let mut cfg = TrainConfig::new(1.0, p.search_trials, opt);
                cfg.search_init = Some(init);
                cfg.record_every = p.search_trials;
                let traj = train(&init_network(&spec, &init)?, &task, &cfg)?;
                return Ok((setup.rank(&traj, &task, &test)?, traj.final_loss() / q, f64::NAN));
            }
            let mut cfg = TrainConfig::new(p.lr_grid[0], p.steps, opt);
            // Adam normalises the gradient scale away, so only the others see 1/q
            cfg.eta_scale = if opt == OptimizerKind::Adam { 1.0 } else { 1.0 / q };
            cfg.record_every = p.steps.max(1);
            let (eta, traj) = lr_sweep_over(&spec, &init, &task, &cfg, &p.lr_grid)?;
            Ok((setup.rank(&traj, &task, &test)?, traj.final_loss() / q, eta))
        })
        .collect();
    let labels: Vec<String> = p.optimizers.iter().map(|o| o.name().to_string()).collect();
    collect_cells(&labels, &p.depths, p.repeats, runs)
}

fn rank_outcome(name: &str, cells: &[RankCell], threshold: f64, inputs: GramInputs) -> Outcome {
    let mut runs = Table::new(name, &["label", "depth", "run", "eta", "train_loss", "gram_rank"]);
    let mut meds = Table::new(format!("{name}_median"), &["label", "depth", "median_rank", "converged"]);
    let mut out = Outcome::default();
    for c in cells {
        for (k, ((r, l), e)) in c.ranks.iter().zip(&c.train_losses).zip(&c.etas).enumerate() {
            let eta = if e.is_nan() { String::new() } else { num(*e) };
            runs.push(vec![c.label.clone(), int(c.depth), int(k), eta, num(*l), num(*r)]);
        }
        meds.push(vec![c.label.clone(), int(c.depth), num(c.median_rank()), int(c.converged(threshold))]);
    }
    let mut labels: Vec<&str> = cells.iter().map(|c| c.label.as_str()).collect();
    labels.dedup();
    for label in labels {
        let m: Vec<f64> = cells.iter().filter(|c| c.label == label).map(|c| c.median_rank()).collect();
        out.stat(&format!("{label}_median_rank"), json_nums(&m));
        out.stat(&format!("{label}_weakly_decreasing"), weakly_decreasing(&m, ORDER_TOLERANCE));
    }
    out.stat("zero_loss_threshold", json_num(threshold));
    out.stat(
        "gram_inputs",
        match inputs {
            GramInputs::Train => "train",
            GramInputs::Test => "test",
        },
    );
    out.notes.push("converged counts runs whose final per-sample loss is at most the threshold".into());
    out.tables.extend([runs, meds]);
    out
}

pub fn trained_rank_outcome(p: &TrainedRankParams, seed: u64) -> Result<Outcome> {
    let cells = trained_rank(p, seed)?;
    let mut out = rank_outcome("trained_rank", &cells, p.zero_loss_threshold, p.gram_inputs);
    out.stat("depths", p.depths.clone());
    Ok(out)
}

pub fn optimizer_outcome(p: &OptimizerParams, seed: u64) -> Result<Outcome> {
    let cells = optimizer_ranks(p, seed)?;
    let mut out = rank_outcome("optimizer_rank", &cells, p.zero_loss_threshold, p.gram_inputs);
    out.stat("depths", p.depths.clone());
    out.notes.push(format!("random search keeps the best of {} draws", p.search_trials));
    Ok(out)
}
