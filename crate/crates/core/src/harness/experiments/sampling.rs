use rayon::prelude::*;

use super::{int, json_num, json_nums, median, num, strictly_decreasing, sub_seed, Outcome, Table};
use crate::error::Result;
use crate::harness::params::{RankdistParams, ResnetParams};
use crate::matrix::DenseMatrix;
use crate::montecarlo::{sample_rank_distribution_with, RankDistribution};
use crate::netsim::{InitKind, InitSpec, NetworkSpec};
use crate::rng::stream;
use crate::spectral::matrix_effective_rank;

#[derive(Clone, Debug)]
pub struct DepthDistribution {
    pub init: InitKind,
    pub depth: usize,
    pub dist: RankDistribution,
}

fn init_name(k: InitKind) -> &'static str {
    match k {
        InitKind::Uniform => "uniform",
        InitKind::Normal => "normal",
        InitKind::ScaledNormal => "scaled_normal",
        InitKind::DeepProduct => "deep_product",
    }
}

/// Gram-rank distributions at initialisation for every `(init, depth)` pair,
/// init-major. All cells share one input set.
pub fn rankdist(p: &RankdistParams, seed: u64) -> Result<Vec<DepthDistribution>> {
    let data = DenseMatrix::random_normal(p.width, p.inputs, 1.0, &mut stream(seed, 0));
    let mut out = Vec::new();
    for (i, &kind) in p.inits.iter().enumerate() {
        let init = InitSpec::new(kind, p.scale, p.product_depth, sub_seed(seed, 1, i as u64))?;
        for &depth in &p.depths {
            let spec = NetworkSpec::uniform(p.width, depth, p.activation, false)?;
            let dist = sample_rank_distribution_with(
                &spec,
                &init,
                &data,
                p.samples,
                p.kind,
                p.bins,
                p.window,
                p.polyorder,
            )?;
            out.push(DepthDistribution { init: kind, depth, dist });
        }
    }
    Ok(out)
}

pub fn rankdist_outcome(p: &RankdistParams, seed: u64) -> Result<Outcome> {
    let cells = rankdist(p, seed)?;
    let mut summary = Table::new("rankdist_summary", &["init", "depth", "mean", "standard_error", "degenerate"]);
    let mut samples = Table::new("rankdist_samples", &["init", "depth", "index", "value"]);
    let mut pdf = Table::new("rankdist_pdf", &["init", "depth", "grid_value", "raw_pdf", "smoothed_pdf"]);
    let mut out = Outcome::default();
    for c in &cells {
        let name = init_name(c.init);
        summary.push(vec![
            name.into(),
            int(c.depth),
            num(c.dist.mean()),
            num(c.dist.standard_error()),
            int(c.dist.meta.degenerate),
        ]);
        for (i, v) in c.dist.samples.iter().enumerate() {
            samples.push(vec![name.into(), int(c.depth), int(i), num(*v)]);
        }
        for ((x, raw), smooth) in c.dist.pdf_grid.iter().zip(&c.dist.smoothed_pdf) {
            pdf.push(vec![name.into(), int(c.depth), num(*x), num(*raw), num(*smooth)]);
        }
    }
    for &kind in &p.inits {
        let row: Vec<&DepthDistribution> = cells.iter().filter(|c| c.init == kind).collect();
        let means: Vec<f64> = row.iter().map(|c| c.dist.mean()).collect();
        // smallest gap between consecutive depths, in combined standard errors
        let margin = row
            .windows(2)
            .map(|w| {
                let se = w[0].dist.standard_error().hypot(w[1].dist.standard_error());
                (w[0].dist.mean() - w[1].dist.mean()) / se
            })
            .fold(f64::INFINITY, f64::min);
        let name = init_name(kind);
        out.stat(&format!("{name}_means"), json_nums(&means));
        out.stat(&format!("{name}_strictly_decreasing"), strictly_decreasing(&means));
        out.stat(&format!("{name}_min_gap_in_se"), json_num(margin));
    }
    out.stat("depths", p.depths.clone());
    out.stat("kernel", p.kind.name());
    out.notes.push("gap statistics combine the two standard errors in quadrature".into());
    out.tables.extend([summary, samples, pdf]);
    Ok(out)
}

/// Effective ranks of plain and residual Gaussian products, one list of
/// draws per depth.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualStudy {
    pub depths: Vec<usize>,
    pub plain: Vec<Vec<f64>>,
    pub residual: Vec<Vec<f64>>,
}

impl ResidualStudy {
    pub fn plain_medians(&self) -> Vec<f64> {
        self.plain.iter().map(|v| median(v)).collect()
    }

    pub fn residual_medians(&self) -> Vec<f64> {
        self.residual.iter().map(|v| median(v)).collect()
    }
}

/// `prod W_i` against `prod (I + s W_i)` on the same draws, with
/// `W_i ~ N(0, 1/n)` and `s` the branch scale (`1/sqrt(depth)` by default).
pub fn residual_vs_plain(p: &ResnetParams, seed: u64) -> Result<ResidualStudy> {
    let n = p.width;
    let jobs: Vec<(usize, usize)> = p.depths.iter().flat_map(|&d| (0..p.draws).map(move |k| (d, k))).collect();
    let ranks: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(d, k)| {
            let s = p.branch_scale.unwrap_or(1.0 / (d as f64).sqrt());
            let mut rng = stream(sub_seed(seed, 0, d as u64), k as u64);
            let mut plain = DenseMatrix::identity(n);
            let mut res = DenseMatrix::identity(n);
            for _ in 0..d {
                let w = DenseMatrix::random_normal(n, n, 1.0 / (n as f64).sqrt(), &mut rng);
                let mut branch = w.scale(s);
                branch.axpy(1.0, &DenseMatrix::identity(n));
                plain = &w * &plain;
                res = &branch * &res;
            }
            Ok((matrix_effective_rank(&plain)?, matrix_effective_rank(&res)?))
        })
        .collect();
    let mut study = ResidualStudy {
        depths: p.depths.clone(),
        plain: vec![Vec::new(); p.depths.len()],
        residual: vec![Vec::new(); p.depths.len()],
    };
    for (j, r) in ranks.into_iter().enumerate() {
        let (a, b) = r?;
        study.plain[j / p.draws].push(a);
        study.residual[j / p.draws].push(b);
    }
    Ok(study)
}

pub fn resnet_outcome(p: &ResnetParams, seed: u64) -> Result<Outcome> {
    let study = residual_vs_plain(p, seed)?;
    let mut draws = Table::new("resnet_rank", &["depth", "draw", "plain_rank", "residual_rank"]);
    let mut meds = Table::new("resnet_rank_median", &["depth", "plain_median", "residual_median"]);
    let (pm, rm) = (study.plain_medians(), study.residual_medians());
    for (i, &d) in study.depths.iter().enumerate() {
        for (k, (a, b)) in study.plain[i].iter().zip(&study.residual[i]).enumerate() {
            draws.push(vec![int(d), int(k), num(*a), num(*b)]);
        }
        meds.push(vec![int(d), num(pm[i]), num(rm[i])]);
    }
    let mut out = Outcome::default();
    out.stat("depths", study.depths.clone());
    out.stat("plain_median", json_nums(&pm));
    out.stat("residual_median", json_nums(&rm));
    out.stat("plain_strictly_decreasing", strictly_decreasing(&pm));
    out.stat("deepest_gap", json_num(rm.last().copied().unwrap_or(f64::NAN) - pm.last().copied().unwrap_or(f64::NAN)));
    out.notes.push(match p.branch_scale {
        Some(s) => format!("residual branch scale {s}"),
        None => "residual branch scale 1/sqrt(depth)".into(),
    });
    out.tables.extend([draws, meds]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_branch_gives_identity_rank() {
        let p = ResnetParams { width: 5, depths: vec![1, 3], draws: 2, branch_scale: Some(0.0) };
        let s = residual_vs_plain(&p, 1).unwrap();
        for v in s.residual.iter().flatten() {
            assert!((v - 5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rankdist_tables_are_consistent() {
        let p = RankdistParams { width: 6, depths: vec![1, 3], inputs: 12, samples: 40, bins: 16, window: 5, polyorder: 2, ..Default::default() };
        let out = rankdist_outcome(&p, 2).unwrap();
        assert_eq!(out.table("rankdist_summary").unwrap().len(), 4);
        assert_eq!(out.table("rankdist_samples").unwrap().len(), 4 * 40);
        assert_eq!(out.table("rankdist_pdf").unwrap().len(), 4 * 16);
    }
}
