//! Gram (kernel) matrices over a set of feature vectors and their spectra.
//!
//! Features are stored one sample per column. Every supported kernel factors
//! as `K = F^T F` for a column-transformed copy `F` of the features, so the
//! spectrum of `K` is the squared spectrum of `F`. [`feature_gram_rank`] uses
//! that to avoid forming `K` at all.

use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::spectral::{effective_rank, singular_values, SpectralSummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramKind {
    Cosine,
    Linear,
    Correlation,
}

impl GramKind {
    pub fn name(self) -> &'static str {
        match self {
            GramKind::Cosine => "cosine",
            GramKind::Linear => "linear",
            GramKind::Correlation => "correlation",
        }
    }
}

impl FromStr for GramKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cosine" => Ok(GramKind::Cosine),
            "linear" => Ok(GramKind::Linear),
            "correlation" => Ok(GramKind::Correlation),
            other => Err(Error::InvalidParameter(format!("unknown kernel `{other}`"))),
        }
    }
}

impl std::fmt::Display for GramKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    k: DenseMatrix,
    kind: GramKind,
}

impl GramMatrix {
    /// Checks symmetry (and the unit diagonal for normalised kinds) to 1e-10.
    pub fn new(k: DenseMatrix, kind: GramKind) -> Result<Self> {
        let p = k.rows();
        if k.cols() != p {
            return Err(Error::Structural(format!("Gram matrix must be square, got {}x{}", p, k.cols())));
        }
        for i in 0..p {
            for j in 0..i {
                if (k[(i, j)] - k[(j, i)]).abs() > 1e-10 {
                    return Err(Error::InvalidInput(format!("Gram matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        if kind != GramKind::Linear {
            if let Some(i) = (0..p).find(|&i| (k[(i, i)] - 1.0).abs() > 1e-10) {
                return Err(Error::InvalidInput(format!(
                    "{kind} Gram diagonal entry {i} is {} rather than 1",
                    k[(i, i)]
                )));
            }
        }
        Ok(Self { k, kind })
    }

    pub fn k(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn sample_count(&self) -> usize {
        self.k.rows()
    }

    /// Rows and columns permuted by `order`.
    pub fn permuted(&self, order: &[usize]) -> DenseMatrix {
        DenseMatrix::from_fn(order.len(), order.len(), |r, c| self.k[(order[r], order[c])])
    }

    /// Header `kind,p` followed by `p` comma-separated rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{},{}", self.kind, self.sample_count())?;
        let mut line = String::new();
        for r in 0..self.sample_count() {
            line.clear();
            for (c, v) in self.k.row(r).iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&crate::csv::num(*v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let bad = |m: String| Error::InvalidInput(format!("Gram CSV: {m}"));
        let header = lines
            .next()
            .ok_or_else(|| bad("empty file".into()))?
            .map_err(|e| Error::io("reading Gram CSV", e))?;
        let (kind, p) = header
            .split_once(',')
            .ok_or_else(|| bad(format!("header `{header}` is not `kind,p`")))?;
        let kind: GramKind = kind.parse()?;
        let p: usize = p.trim().parse().map_err(|_| bad(format!("bad size `{p}`")))?;
        let mut data = Vec::with_capacity(p * p);
        for (r, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("reading Gram CSV", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let before = data.len();
            for field in line.split(',') {
                data.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("row {r}: bad number `{field}`")))?,
                );
            }
            if data.len() - before != p {
                return Err(bad(format!("row {r} has {} values, expected {p}", data.len() - before)));
            }
        }
        if data.len() != p * p {
            return Err(bad(format!("expected {p} rows, found {}", data.len() / p.max(1))));
        }
        Self::new(DenseMatrix::new(p, p, data)?, kind)
    }
}

/// Column transform `F` with `K = F^T F`.
fn kernel_factor(features: &DenseMatrix, kind: GramKind) -> Result<DenseMatrix> {
    let (n, p) = features.shape();
    if p < 2 {
        return Err(Error::InvalidInput(format!("a Gram matrix needs at least 2 samples, got {p}")));
    }
    if !features.is_finite() {
        return Err(Error::InvalidInput("features contain non-finite values".into()));
    }
    let mut f = features.clone();
    match kind {
        GramKind::Linear => {}
        GramKind::Cosine => {
            for c in 0..p {
                let norm = column_norm(&f, c);
                if !(norm > 0.0) {
                    return Err(Error::DegenerateFeature {
                        column: c,
                        reason: "zero-norm feature vector",
                    });
                }
                scale_column(&mut f, c, 1.0 / norm);
            }
        }
        GramKind::Correlation => {
            for c in 0..p {
                let raw = column_norm(&f, c);
                let mean = (0..n).map(|r| f[(r, c)]).sum::<f64>() / n as f64;
                for r in 0..n {
                    f[(r, c)] -= mean;
                }
                let norm = column_norm(&f, c);
                if !(norm > 1e-12 * raw) || norm == 0.0 {
                    return Err(Error::DegenerateFeature {
                        column: c,
                        reason: "constant feature vector",
                    });
                }
                scale_column(&mut f, c, 1.0 / norm);
            }
        }
    }
    Ok(f)
}

fn column_norm(m: &DenseMatrix, c: usize) -> f64 {
    (0..m.rows()).map(|r| m[(r, c)] * m[(r, c)]).sum::<f64>().sqrt()
}

fn scale_column(m: &mut DenseMatrix, c: usize, s: f64) {
    for r in 0..m.rows() {
        m[(r, c)] *= s;
    }
}

/// Kernel matrix over the columns of `features`.
pub fn build_gram(features: &DenseMatrix, kind: GramKind) -> Result<GramMatrix> {
    let f = kernel_factor(features, kind)?;
    let mut k = f.t_mul(&f);
    let p = k.rows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        if kind != GramKind::Linear {
            k[(i, i)] = 1.0;
        }
    }
    GramMatrix::new(k, kind)
}

/// Effective rank of the full `p x p` kernel.
pub fn gram_effective_rank(g: &GramMatrix) -> Result<f64> {
    effective_rank(&singular_values(&g.k)?)
}

/// Kernel spectrum from the feature factor: squares of its singular values,
/// padded with zeros to length `p`.
pub fn feature_gram_spectrum(features: &DenseMatrix, kind: GramKind) -> Result<SpectralSummary> {
    let f = kernel_factor(features, kind)?;
    let p = f.cols();
    let mut sigma: Vec<f64> = singular_values(&f)?.sigma().iter().map(|s| s * s).collect();
    sigma.resize(p, 0.0);
    SpectralSummary::new(sigma, p, p)
}

/// Same value as `gram_effective_rank(&build_gram(features, kind)?)` without
/// forming the kernel; cost scales with `min(features.rows(), p)`.
pub fn feature_gram_rank(features: &DenseMatrix, kind: GramKind) -> Result<f64> {
    effective_rank(&feature_gram_spectrum(features, kind)?)
}

/// `(effective_rank(W), effective rank of the linear kernel of W X)`.
pub fn weight_vs_kernel_rank(w: &DenseMatrix, x: &DenseMatrix) -> Result<(f64, f64)> {
    let wx = w.matmul(x)?;
    let weight = effective_rank(&singular_values(w)?)?;
    let kernel = gram_effective_rank(&build_gram(&wx, GramKind::Linear)?)?;
    Ok((weight, kernel))
}

/// Dendrogram leaf order of average-linkage clustering on `1 - K`.
///
/// Each merge joins the closest pair of clusters (ties go to the pair with the
/// smallest indices); the cluster holding the smaller original index is placed
/// first, so the order is fully deterministic.
pub fn hierarchical_order(g: &GramMatrix) -> Vec<usize> {
    let p = g.sample_count();
    let mut dist: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| 1.0 - g.k[(i, j)]).collect())
        .collect();
    // slot -> (leaf order, size, smallest member); None once absorbed
    let mut clusters: Vec<Option<(Vec<usize>, usize, usize)>> = (0..p).map(|i| Some((vec![i], 1, i))).collect();

    for _ in 1..p {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..p {
            if clusters[i].is_none() {
                continue;
            }
            for j in i + 1..p {
                if clusters[j].is_none() {
                    continue;
                }
                if best.is_none_or(|(d, _, _)| dist[i][j] < d) {
                    best = Some((dist[i][j], i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two clusters remain");
        let (li, ni, mi) = clusters[i].take().expect("live cluster");
        let (lj, nj, mj) = clusters[j].take().expect("live cluster");
        let (first, second) = if mi <= mj { (li, lj) } else { (lj, li) };
        let mut leaves = first;
        leaves.extend(second);
        for k in 0..p {
            if k == i || clusters[k].is_none() {
                continue;
            }
            let d = (ni as f64 * dist[i][k] + nj as f64 * dist[j][k]) / (ni + nj) as f64;
            dist[i][k] = d;
            dist[k][i] = d;
        }
        clusters[i] = Some((leaves, ni + nj, mi.min(mj)));
    }
    clusters
        .into_iter()
        .flatten()
        .next()
        .map(|c| c.0)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::random_orthogonal;
    use crate::rng::rng_from_seed;

    #[test]
    fn identical_columns_give_rank_zero() {
        let col = [1.0, -2.0, 0.5];
        let f = DenseMatrix::from_fn(3, 5, |r, _| col[r]);
        let g = build_gram(&f, GramKind::Cosine).unwrap();
        assert!((g.k() - &DenseMatrix::new(5, 5, vec![1.0; 25]).unwrap()).max_abs() < 1e-12);
        assert!(gram_effective_rank(&g).unwrap() < 1e-9);
        assert!(feature_gram_rank(&f, GramKind::Cosine).unwrap() < 1e-9);
    }

    #[test]
    fn orthonormal_columns_give_identity() {
        let mut rng = rng_from_seed(1);
        let q = random_orthogonal(6, &mut rng);
        let g = build_gram(&q, GramKind::Cosine).unwrap();
        assert!((g.k() - &DenseMatrix::identity(6)).max_abs() < 1e-12);
        assert!((gram_effective_rank(&g).unwrap() - 6f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn linear_kernel_is_psd() {
        let mut rng = rng_from_seed(2);
        let f = DenseMatrix::random_normal(5, 12, 1.0, &mut rng);
        let g = build_gram(&f, GramKind::Linear).unwrap();
        // eigenvalues of F^T F from the SVD of F^T: sigma^2 >= 0, and K v = sigma^2 v
        let s = crate::spectral::svd(&f.transpose()).unwrap();
        for (c, sig) in s.sigma().iter().enumerate() {
            let v: Vec<f64> = (0..12).map(|r| s.left[(r, c)]).collect();
            let kv: Vec<f64> = (0..12).map(|r| (0..12).map(|j| g.k()[(r, j)] * v[j]).sum()).collect();
            let lambda: f64 = v.iter().zip(&kv).map(|(a, b)| a * b).sum();
            assert!((lambda - sig * sig).abs() < 1e-9 * sig.max(1.0).powi(2));
            assert!(lambda >= -1e-9);
        }
    }

    #[test]
    fn degenerate_columns_are_named() {
        let mut f = DenseMatrix::from_fn(3, 4, |r, c| (r + c) as f64 + 1.0);
        for r in 0..3 {
            f[(r, 2)] = 0.0;
        }
        assert!(matches!(
            build_gram(&f, GramKind::Cosine),
            Err(Error::DegenerateFeature { column: 2, .. })
        ));
        for r in 0..3 {
            f[(r, 1)] = 7.0;
        }
        assert!(matches!(
            build_gram(&f, GramKind::Correlation),
            Err(Error::DegenerateFeature { column: 1, .. })
        ));
        assert!(build_gram(&DenseMatrix::zeros(3, 1), GramKind::Linear).is_err());
    }

    #[test]
    fn correlation_matches_pearson() {
        let mut rng = rng_from_seed(3);
        let f = DenseMatrix::random_normal(7, 4, 1.0, &mut rng);
        let g = build_gram(&f, GramKind::Correlation).unwrap();
        let col = |c: usize| f.column(c);
        let pearson = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        for i in 0..4 {
            for j in 0..4 {
                assert!((g.k()[(i, j)] - pearson(&col(i), &col(j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fast_route_matches_full_kernel() {
        let mut rng = rng_from_seed(4);
        for kind in [GramKind::Cosine, GramKind::Linear, GramKind::Correlation] {
            for (n, p) in [(4, 20), (20, 6)] {
                let f = DenseMatrix::random_normal(n, p, 1.0, &mut rng);
                let full = gram_effective_rank(&build_gram(&f, kind).unwrap()).unwrap();
                let fast = feature_gram_rank(&f, kind).unwrap();
                assert!((full - fast).abs() < 1e-9, "{kind} {n}x{p}: {full} vs {fast}");
            }
        }
    }

    #[test]
    fn clustering_small_cases() {
        let g = build_gram(&DenseMatrix::identity(2), GramKind::Cosine).unwrap();
        assert_eq!(hierarchical_order(&g), vec![0, 1]);

        // columns a, b, a, b
        let a = [1.0, 0.2, 0.0];
        let b = [0.0, 0.3, 1.0];
        let f = DenseMatrix::from_fn(3, 4, |r, c| if c % 2 == 0 { a[r] } else { b[r] });
        let g = build_gram(&f, GramKind::Cosine).unwrap();
        assert_eq!(hierarchical_order(&g), vec![0, 2, 1, 3]);
    }

    #[test]
    fn clustering_recovers_shuffled_blocks() {
        let blocks = [0usize, 0, 0, 1, 1, 2, 2, 2, 2];
        let strength = [0.9, 0.8, 0.7];
        let k = DenseMatrix::from_fn(9, 9, |i, j| {
            if i == j {
                1.0
            } else if blocks[i] == blocks[j] {
                strength[blocks[i]]
            } else {
                0.1
            }
        });
        let shuffle = [4usize, 7, 0, 5, 2, 8, 3, 1, 6];
        let shuffled = DenseMatrix::from_fn(9, 9, |i, j| k[(shuffle[i], shuffle[j])]);
        let g = GramMatrix::new(shuffled, GramKind::Cosine).unwrap();
        let order = hierarchical_order(&g);
        let labels: Vec<usize> = order.iter().map(|&i| blocks[shuffle[i]]).collect();
        let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 2, "{labels:?}");
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn weight_and_kernel_rank() {
        let mut rng = rng_from_seed(5);
        let x = random_orthogonal(5, &mut rng);
        let (w, k) = weight_vs_kernel_rank(&DenseMatrix::identity(5), &x).unwrap();
        // identity map: both spectra are flat
        assert!((w - 5f64.ln()).abs() < 1e-10);
        assert!((k - 5f64.ln()).abs() < 1e-10);

        let u = DenseMatrix::random_normal(5, 1, 1.0, &mut rng);
        let v = DenseMatrix::random_normal(1, 5, 1.0, &mut rng);
        let (w, k) = weight_vs_kernel_rank(&(&u * &v), &DenseMatrix::random_normal(5, 8, 1.0, &mut rng)).unwrap();
        assert!(w < 1e-6);
        assert!(k < 1e-6);

        // kernel spectrum is the squared spectrum of W X
        let w = DenseMatrix::random_normal(4, 5, 1.0, &mut rng);
        let x = DenseMatrix::random_normal(5, 9, 1.0, &mut rng);
        let wx = &w * &x;
        let sq: Vec<f64> = singular_values(&wx).unwrap().sigma().iter().map(|s| s * s).collect();
        let ks = singular_values(build_gram(&wx, GramKind::Linear).unwrap().k()).unwrap();
        for (a, b) in sq.iter().zip(ks.sigma()) {
            assert!((a - b).abs() <= 1e-8 * a.max(1.0));
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = rng_from_seed(6);
        let f = DenseMatrix::random_normal(3, 5, 1.0, &mut rng);
        let g = build_gram(&f, GramKind::Cosine).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("cosine,5\n"));
        let back = GramMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(GramMatrix::read_csv("cosine,2\n1,0\n".as_bytes()).is_err());
    }
}
