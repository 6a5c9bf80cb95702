use std::path::Path;

use rayon::prelude::*;

use super::{int, json_num, json_nums, num, strictly_decreasing, sub_seed, Outcome, Table};
use crate::dynamics::{ls_loss, random_orthogonal, LeastSquaresTask};
use crate::error::Result;
use crate::gram::{feature_gram_rank, weight_vs_kernel_rank, GramKind};
use crate::harness::idx::load_idx_first;
use crate::harness::params::{LandscapeParams, MeasuresParams, RankRelationParams, Theorem1Params};
use crate::matrix::DenseMatrix;
use crate::netsim::{
    balanced_factors, init_network, predict, train, Activation, InitSpec, NetworkSpec, NetworkState, OptimizerKind,
    TrainConfig, DEFAULT_GAIN,
};
use crate::rmt::{sigma_max, ProductDensity};
use crate::rng::stream;
use crate::spectral::{matrix_effective_rank, measures_of, singular_values, threshold_rank};

/// Rank measures of the collapsed map of linear nets of several depths
/// during full-batch gradient descent on one low-rank task.
pub fn measures(p: &MeasuresParams, seed: u64) -> Result<Outcome> {
    let task = LeastSquaresTask::synthetic(p.width, p.width, p.samples, p.task_rank, &mut stream(seed, 0))?;
    let q = p.samples as f64;
    let mut header: Vec<String> = ["depth", "step", "loss", "effective_rank", "stable_rank", "nuclear_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(p.taus.iter().map(|t| format!("threshold_rank_{t}")));

    let per_depth: Vec<Result<Vec<Vec<String>>>> = p
        .depths
        .par_iter()
        .map(|&d| {
            let spec = NetworkSpec::uniform(p.width, d, Activation::Linear, false)?;
            let mut state = init_network(&spec, &InitSpec::scaled_normal(p.gain, sub_seed(seed, 1, d as u64)))?;
            let row = |state: &NetworkState, step: usize| -> Result<Vec<String>> {
                let w = state.end_to_end().expect("linear network");
                let s = singular_values(&w)?;
                let m = measures_of(&s, p.taus.first().copied().unwrap_or(0.01))?;
                let mut r = vec![
                    int(d),
                    int(step),
                    num(ls_loss(&w, &task)? / q),
                    num(m.effective_rank),
                    num(m.stable_rank),
                    num(m.nuclear_norm),
                ];
                for &t in &p.taus {
                    r.push(int(threshold_rank(&s, t)?));
                }
                Ok(r)
            };
            let mut rows = vec![row(&state, 0)?];
            let mut step = 0;
            while step < p.steps {
                let chunk = p.record_every.min(p.steps - step);
                let mut cfg = TrainConfig::new(p.eta, chunk, OptimizerKind::Gd);
                cfg.eta_scale = 1.0 / q;
                cfg.record_every = chunk;
                state = train(&state, &task, &cfg)?.final_state;
                step += chunk;
                rows.push(row(&state, step)?);
            }
            Ok(rows)
        })
        .collect();

    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new("measures", &refs);
    let mut final_loss = Vec::new();
    let mut final_rank = Vec::new();
    for rows in per_depth {
        let rows = rows?;
        let last = rows.last().expect("at least the initial row");
        final_loss.push(last[2].parse::<f64>().unwrap_or(f64::NAN));
        final_rank.push(last[3].parse::<f64>().unwrap_or(f64::NAN));
        for r in rows {
            table.push(r);
        }
    }
    let mut out = Outcome::default();
    out.stat("depths", p.depths.clone());
    out.stat("task_rank", p.task_rank);
    out.stat("final_loss", json_nums(&final_loss));
    out.stat("final_effective_rank", json_nums(&final_rank));
    out.notes.push("loss is 1/2 ||W X - Y||^2 divided by the sample count".into());
    out.tables.push(table);
    Ok(out)
}

/// Asymptotic effective rank of Gaussian products by depth, with optional
/// finite-size comparison.
pub fn theorem1(p: &Theorem1Params, seed: u64) -> Result<Outcome> {
    let mut table = Table::new(
        "theorem1",
        &["depth", "differential_effective_rank", "normalization", "mean_sigma", "sigma_max", "finite_rank"],
    );
    let mut density = Table::new("density", &["depth", "phi", "sigma", "density"]);
    let mut ranks = Vec::new();
    let mut worst_norm: f64 = 0.0;
    for depth in 1..=p.max_depth {
        let pd = ProductDensity::new(depth, p.nodes)?;
        let rank = pd.differential_effective_rank()?;
        let norm = pd.density_normalization()?;
        worst_norm = worst_norm.max((norm - 1.0).abs());
        ranks.push(rank);
        let finite = if p.finite_n > 0 { num(finite_rank(depth, p.finite_n, p.finite_draws, seed)?) } else { String::new() };
        table.push(vec![
            int(depth),
            num(rank),
            num(norm),
            num(pd.mean_singular_value()?),
            num(sigma_max(depth)),
            finite,
        ]);
        for i in 0..p.density_points {
            let phi = pd.phi_max() * (i as f64 + 0.5) / p.density_points as f64;
            let (s, f) = pd.sv_parametric(phi)?;
            density.push(vec![int(depth), num(phi), num(s), num(f)]);
        }
    }
    let mut out = Outcome::default();
    out.stat("differential_effective_rank", json_nums(&ranks));
    out.stat("strictly_decreasing", strictly_decreasing(&ranks));
    out.stat("max_normalization_error", json_num(worst_norm));
    if p.finite_n > 0 {
        out.notes.push(format!(
            "finite_rank is the mean effective rank of {} products of {n}x{n} Gaussians minus ln {n}",
            p.finite_draws,
            n = p.finite_n
        ));
    }
    out.tables.push(table);
    out.tables.push(density);
    Ok(out)
}

fn finite_rank(depth: u32, n: usize, draws: usize, seed: u64) -> Result<f64> {
    let std = 1.0 / (n as f64).sqrt();
    let ranks: Vec<Result<f64>> = (0..draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(sub_seed(seed, 2, depth as u64), k);
            let mut m = DenseMatrix::random_normal(n, n, std, &mut rng);
            for _ in 1..depth {
                m = &DenseMatrix::random_normal(n, n, std, &mut rng) * &m;
            }
            Ok(matrix_effective_rank(&m)? - (n as f64).ln())
        })
        .collect();
    let ranks = ranks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ranks.iter().sum::<f64>() / ranks.len() as f64)
}

fn direction_like(w: &DenseMatrix, rng: &mut crate::rng::Rng) -> DenseMatrix {
    let d = DenseMatrix::random_normal(w.rows(), w.cols(), 1.0, rng);
    let scale = w.frobenius_norm() / d.frobenius_norm();
    d.scale(scale)
}

fn perturbed(w: &DenseMatrix, u: &DenseMatrix, v: &DenseMatrix, a: f64, b: f64) -> DenseMatrix {
    let mut m = w.clone();
    m.axpy(a, u);
    m.axpy(b, v);
    m
}

/// Effective rank over a two-dimensional slice of weight space through a
/// random layer, for the layer itself and for a balanced two-factor split.
pub fn landscape(p: &LandscapeParams, seed: u64) -> Result<Outcome> {
    let n = p.width;
    let mut rng = stream(seed, 0);
    let w = DenseMatrix::random_normal(n, n, 1.0 / (n as f64).sqrt(), &mut rng);
    let (u, v) = (direction_like(&w, &mut rng), direction_like(&w, &mut rng));
    let f = balanced_factors(&w, 2)?;
    let dirs: Vec<(DenseMatrix, DenseMatrix)> =
        f.iter().map(|fi| (direction_like(fi, &mut rng), direction_like(fi, &mut rng))).collect();
    let coords: Vec<f64> =
        (0..p.grid).map(|i| -p.span + 2.0 * p.span * i as f64 / (p.grid - 1) as f64).collect();

    let rows: Vec<Result<Vec<Vec<String>>>> = coords
        .par_iter()
        .map(|&a| {
            coords
                .iter()
                .map(|&b| {
                    let single = matrix_effective_rank(&perturbed(&w, &u, &v, a, b))?;
                    let w1 = perturbed(&f[0], &dirs[0].0, &dirs[0].1, a, b);
                    let w2 = perturbed(&f[1], &dirs[1].0, &dirs[1].1, a, b);
                    let two = matrix_effective_rank(&(&w2 * &w1))?;
                    Ok(vec![num(a), num(b), num(single), num(two)])
                })
                .collect()
        })
        .collect();
    let mut table = Table::new("landscape", &["alpha", "beta", "single_layer_rank", "two_layer_rank"]);
    for r in rows {
        for row in r? {
            table.push(row);
        }
    }
    let center = p.grid / 2;
    let center_row = &table.rows[center * p.grid + center];
    let mut out = Outcome::default();
    out.stat("rank_at_origin", json_num(matrix_effective_rank(&w)?));
    out.stat("single_layer_center", json_num(center_row[2].parse().unwrap_or(f64::NAN)));
    out.stat("two_layer_center", json_num(center_row[3].parse().unwrap_or(f64::NAN)));
    for col in ["single_layer_rank", "two_layer_rank"] {
        let v = table.column(col).expect("column exists");
        out.stat(&format!("{col}_min"), json_num(v.iter().copied().fold(f64::INFINITY, f64::min)));
        out.stat(&format!("{col}_max"), json_num(v.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    }
    out.tables.push(table);
    if p.kernel {
        out.tables.push(kernel_landscape(p, &coords, seed)?);
        out.notes.push("landscape_kernel holds cosine Gram ranks of 2- and 4-layer ReLU nets".into());
    }
    Ok(out)
}

fn kernel_landscape(p: &LandscapeParams, coords: &[f64], seed: u64) -> Result<Table> {
    let n = p.width;
    let x = DenseMatrix::random_normal(n, p.kernel_inputs, 1.0, &mut stream(seed, 1));
    let mut nets = Vec::new();
    for (k, depth) in [2usize, 4].into_iter().enumerate() {
        let spec = NetworkSpec::uniform(n, depth, Activation::Relu, false)?;
        let net = init_network(&spec, &InitSpec::scaled_normal(DEFAULT_GAIN, sub_seed(seed, 3, k as u64)))?;
        let mut rng = stream(seed, 4 + k as u64);
        let dirs: Vec<(DenseMatrix, DenseMatrix)> = net
            .weights
            .iter()
            .map(|w| (direction_like(w, &mut rng), direction_like(w, &mut rng)))
            .collect();
        nets.push((net, dirs));
    }
    let rows: Vec<Result<Vec<Vec<String>>>> = coords
        .par_iter()
        .map(|&a| {
            coords
                .iter()
                .map(|&b| {
                    let mut row = vec![num(a), num(b)];
                    for (net, dirs) in &nets {
                        let weights =
                            net.weights.iter().zip(dirs).map(|(w, (u, v))| perturbed(w, u, v, a, b)).collect();
                        let moved = NetworkState::new(net.spec.clone(), weights)?;
                        row.push(num(feature_gram_rank(&predict(&moved, &x)?, GramKind::Cosine)?));
                    }
                    Ok(row)
                })
                .collect()
        })
        .collect();
    let mut table = Table::new("landscape_kernel", &["alpha", "beta", "depth2_gram_rank", "depth4_gram_rank"]);
    for r in rows {
        for row in r? {
            table.push(row);
        }
    }
    Ok(table)
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Weight effective rank against linear-kernel effective rank for random
/// products of increasing depth applied to a fixed input set.
pub fn rank_relation(p: &RankRelationParams, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::default();
    let files = p.mnist_dir.as_ref().map(|d| {
        let d = Path::new(d);
        (d.join("train-images-idx3-ubyte"), d.join("train-labels-idx1-ubyte"))
    });
    let (data, source) = match files {
        Some((images, labels)) if images.exists() && labels.exists() => {
            let ds = load_idx_first(&images, &labels, p.samples)?;
            (ds.images, format!("mnist:{}", images.display()))
        }
        _ => {
            if p.mnist_dir.is_some() {
                out.notes.push("IDX files not found; using synthetic data".into());
            }
            let q = random_orthogonal(p.synthetic_dim, &mut stream(seed, 0));
            (q.column_range(0, p.samples), "synthetic_orthogonal".to_string())
        }
    };
    let dim = data.rows();
    let jobs: Vec<(usize, usize)> =
        p.depths.iter().flat_map(|&d| (0..p.draws).map(move |k| (d, k))).collect();
    let pairs: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(d, k)| {
            let mut rng = stream(sub_seed(seed, 1, d as u64), k as u64);
            let mut w = DenseMatrix::random_normal(p.width, dim, p.gain / (dim as f64).sqrt(), &mut rng);
            for _ in 1..d {
                w = &DenseMatrix::random_normal(p.width, p.width, p.gain / (p.width as f64).sqrt(), &mut rng) * &w;
            }
            weight_vs_kernel_rank(&w, &data)
        })
        .collect();
    let mut table = Table::new("rank_relation", &["depth", "draw", "weight_rank", "kernel_rank"]);
    let (mut wr, mut kr) = (Vec::new(), Vec::new());
    for (&(d, k), r) in jobs.iter().zip(pairs) {
        let (a, b) = r?;
        wr.push(a);
        kr.push(b);
        table.push(vec![int(d), int(k), num(a), num(b)]);
    }
    out.stat("data_source", source);
    out.stat("input_dim", dim);
    out.stat("samples", data.cols());
    out.stat("pearson", json_num(pearson(&wr, &kr)));
    out.tables.push(table);
    Ok(out)
}
