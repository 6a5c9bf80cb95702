//! Distributions of Gram effective rank over random network draws.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::{feature_gram_rank, GramKind};
use crate::matrix::DenseMatrix;
use crate::netsim::{init_network, predict, InitSpec, NetworkSpec};
use crate::rng::mix_seed;

pub const DEFAULT_BINS: usize = 128;
pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_POLYORDER: usize = 3;
/// Largest tolerated share of degenerate draws.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerMeta {
    pub spec: NetworkSpec,
    pub init: InitSpec,
    pub kind: GramKind,
    pub input_count: usize,
    pub seed: u64,
    pub requested: usize,
    pub degenerate: usize,
    pub bins: usize,
    pub window: usize,
    pub polyorder: usize,
    /// `ln p`, the largest possible effective rank.
    pub max_rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    /// Ascending.
    pub samples: Vec<f64>,
    pub cdf_grid: Vec<(f64, f64)>,
    pub pdf_grid: Vec<(f64, f64)>,
    /// Savitzky-Golay smoothed densities on the `pdf_grid` abscissae, clipped at 0.
    pub smoothed_pdf: Vec<f64>,
    pub meta: SamplerMeta,
}

impl RankDistribution {
    pub fn mean(&self) -> f64 {
        mean_and_se(&self.samples).0
    }

    pub fn standard_error(&self) -> f64 {
        mean_and_se(&self.samples).1
    }

    /// Writes `samples.csv`, `pdf.csv` and `meta.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let samples = dir.join("samples.csv");
        let mut out = String::from("index,value\n");
        for (i, v) in self.samples.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", crate::csv::num(*v)));
        }
        crate::csv::write(&samples, &out)?;

        let pdf = dir.join("pdf.csv");
        let mut out = String::from("grid_value,raw_pdf,smoothed_pdf\n");
        for ((x, p), s) in self.pdf_grid.iter().zip(&self.smoothed_pdf) {
            out.push_str(&format!("{},{},{}\n", crate::csv::num(*x), crate::csv::num(*p), crate::csv::num(*s)));
        }
        crate::csv::write(&pdf, &out)?;

        let meta = dir.join("meta.json");
        let mut f = std::fs::File::create(&meta).map_err(|e| Error::io(format!("creating {}", meta.display()), e))?;
        serde_json::to_writer_pretty(&mut f, &self.meta).map_err(|e| Error::Numeric(e.to_string()))?;
        f.write_all(b"\n").map_err(|e| Error::io(format!("writing {}", meta.display()), e))?;
        Ok(vec![samples, pdf, meta])
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Gram effective rank of the outputs of one network drawn with seed
/// `mix_seed(init.seed, index)`.
pub fn sample_rank(spec: &NetworkSpec, init: &InitSpec, data: &DenseMatrix, kind: GramKind, index: u64) -> Result<f64> {
    let net = init_network(spec, &init.with_seed(mix_seed(init.seed, index)))?;
    feature_gram_rank(&predict(&net, data)?, kind)
}

/// Draws `n_samples` networks, skipping draws with degenerate features, and
/// builds the CDF and density estimates with the default smoothing settings.
pub fn sample_rank_distribution(
    spec: &NetworkSpec,
    init: &InitSpec,
    data: &DenseMatrix,
    n_samples: usize,
    kind: GramKind,
) -> Result<RankDistribution> {
    sample_rank_distribution_with(spec, init, data, n_samples, kind, DEFAULT_BINS, DEFAULT_WINDOW, DEFAULT_POLYORDER)
}

#[allow(clippy::too_many_arguments)]
pub fn sample_rank_distribution_with(
    spec: &NetworkSpec,
    init: &InitSpec,
    data: &DenseMatrix,
    n_samples: usize,
    kind: GramKind,
    bins: usize,
    window: usize,
    polyorder: usize,
) -> Result<RankDistribution> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples".into()));
    }
    if data.cols() < 2 {
        return Err(Error::InvalidInput("need at least 2 input columns".into()));
    }
    let draws: Vec<Result<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| sample_rank(spec, init, data, kind, i))
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    let mut degenerate = 0;
    for d in draws {
        match d {
            Ok(v) => samples.push(v),
            Err(Error::DegenerateFeature { .. }) | Err(Error::DegenerateSpectrum(_)) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if degenerate as f64 > MAX_DEGENERATE_FRACTION * n_samples as f64 || samples.len() < 2 {
        return Err(Error::Sampling {
            degenerate,
            total: n_samples,
        });
    }
    samples.sort_by(f64::total_cmp);
    let cdf_grid = empirical_cdf(&samples)?;
    let pdf_grid = pdf_from_cdf(&cdf_grid, bins)?;
    let raw: Vec<f64> = pdf_grid.iter().map(|p| p.1).collect();
    let smoothed_pdf = savitzky_golay(&raw, window, polyorder)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    Ok(RankDistribution {
        samples,
        cdf_grid,
        pdf_grid,
        smoothed_pdf,
        meta: SamplerMeta {
            spec: spec.clone(),
            init: *init,
            kind,
            input_count: data.cols(),
            seed: init.seed,
            requested: n_samples,
            degenerate,
            bins,
            window,
            polyorder,
            max_rank: (data.cols() as f64).ln(),
        },
    })
}

/// Right-continuous step CDF: one `(value, P(X <= value))` pair per distinct
/// sample value, ascending.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput("CDF needs at least 2 samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut grid: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match grid.last_mut() {
            Some(last) if last.0 == v => last.1 = p,
            _ => grid.push((v, p)),
        }
    }
    Ok(grid)
}

/// Evaluates a step CDF at `x`.
pub fn cdf_at(grid: &[(f64, f64)], x: f64) -> f64 {
    match grid.partition_point(|p| p.0 <= x) {
        0 => 0.0,
        k => grid[k - 1].1,
    }
}

/// Density on `bins` evenly spaced points from the smallest to the largest
/// sample: central differences of the CDF, negatives clipped to 0.
pub fn pdf_from_cdf(cdf: &[(f64, f64)], bins: usize) -> Result<Vec<(f64, f64)>> {
    if bins < 8 {
        return Err(Error::InvalidParameter(format!("bins = {bins} must be at least 8")));
    }
    let (lo, hi) = match (cdf.first(), cdf.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::InvalidInput("empty CDF".into())),
    };
    if !(hi > lo) {
        return Err(Error::DegenerateRange { value: lo });
    }
    let h = (hi - lo) / (bins - 1) as f64;
    let xs: Vec<f64> = (0..bins).map(|i| if i + 1 == bins { hi } else { lo + h * i as f64 }).collect();
    // the CDF is 0 below the range and 1 above it
    let f = |i: isize| -> f64 {
        if i < 0 {
            0.0
        } else if i as usize >= bins {
            1.0
        } else {
            cdf_at(cdf, xs[i as usize])
        }
    };
    Ok((0..bins as isize)
        .map(|i| (xs[i as usize], ((f(i + 1) - f(i - 1)) / (2.0 * h)).max(0.0)))
        .collect())
}

/// Weights over window offsets `-m..=m` of the least-squares polynomial of
/// degree `order`, evaluated at offset `at`.
fn sg_weights(window: usize, order: usize, at: f64) -> Vec<f64> {
    let m = (window / 2) as f64;
    let k = order + 1;
    let pos: Vec<f64> = (0..window).map(|j| j as f64 - m).collect();
    // normal matrix A^T A with A_jk = pos_j^k, solved against e(at)
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, row) in a.iter_mut().enumerate() {
        for c in 0..k {
            row[c] = pos.iter().map(|p| p.powi((r + c) as i32)).sum();
        }
        row[k] = at.powi(r as i32);
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let z: Vec<f64> = (0..k).map(|r| a[r][k] / a[r][r]).collect();
    pos.iter()
        .map(|p| z.iter().enumerate().map(|(i, zi)| zi * p.powi(i as i32)).sum())
        .collect()
}

/// Local least-squares polynomial smoothing. Points within half a window of
/// either end are read off the polynomial fitted to the first (or last)
/// full window.
pub fn savitzky_golay(values: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window <= polyorder {
        return Err(Error::InvalidParameter(format!(
            "window {window} must be odd and larger than polyorder {polyorder}"
        )));
    }
    if values.len() < window {
        return Err(Error::InvalidParameter(format!(
            "{} values are fewer than the window {window}",
            values.len()
        )));
    }
    let m = window / 2;
    let n = values.len();
    let apply = |w: &[f64], start: usize| -> f64 { w.iter().zip(&values[start..start + window]).map(|(a, b)| a * b).sum() };
    let centre = sg_weights(window, polyorder, 0.0);
    let mut out = vec![0.0; n];
    for i in m..n - m {
        out[i] = apply(&centre, i - m);
    }
    for i in 0..m {
        out[i] = apply(&sg_weights(window, polyorder, i as f64 - m as f64), 0);
        out[n - 1 - i] = apply(&sg_weights(window, polyorder, m as f64 - i as f64), n - window);
    }
    Ok(out)
}
