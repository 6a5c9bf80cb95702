//! Singular value decomposition and the scalar rank measures built on it.
//!
//! The central measure is the effective rank: the Shannon entropy (natural
//! log) of the singular values normalised to sum to one. It is zero for a
//! rank-one matrix and `ln p` for a flat spectrum of length `p`.

mod rate;
mod svd;

pub use rate::{effective_rank_rate, effective_rank_recurrence, SingularTrajectory};
pub use svd::{singular_values, svd, Svd};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Descending singular values of a `source_rows x source_cols` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    sigma: Vec<f64>,
    source_rows: usize,
    source_cols: usize,
}

impl SpectralSummary {
    pub fn new(sigma: Vec<f64>, source_rows: usize, source_cols: usize) -> Result<Self> {
        if source_rows == 0 || source_cols == 0 {
            return Err(Error::InvalidInput("source shape must be positive".into()));
        }
        if sigma.len() != source_rows.min(source_cols) {
            return Err(Error::InvalidInput(format!(
                "{} singular values for a {source_rows}x{source_cols} source",
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidInput("singular values must be finite and non-negative".into()));
        }
        if sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("singular values must be descending".into()));
        }
        Ok(Self {
            sigma,
            source_rows,
            source_cols,
        })
    }

    /// Summary of a square source whose spectrum is given in any order.
    pub fn from_values(mut sigma: Vec<f64>) -> Result<Self> {
        sigma.sort_by(|a, b| b.total_cmp(a));
        let p = sigma.len();
        Self::new(sigma, p, p)
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn source_shape(&self) -> (usize, usize) {
        (self.source_rows, self.source_cols)
    }

    /// Singular values divided by their sum. `None` for an all-zero spectrum.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        let total: f64 = self.sigma.iter().sum();
        (total > 0.0).then(|| self.sigma.iter().map(|s| s / total).collect())
    }
}

/// Spectral entropy `-sum(s_i ln s_i)` of the normalised singular values.
pub fn effective_rank(s: &SpectralSummary) -> Result<f64> {
    let p = s
        .normalized()
        .ok_or_else(|| Error::DegenerateSpectrum("all singular values are zero".into()))?;
    Ok(entropy(&p).clamp(0.0, (s.len() as f64).ln()))
}

/// Entropy of a probability vector with the `0 ln 0 = 0` convention.
pub(crate) fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
        .sum::<f64>()
}

/// Number of normalised singular values at or above `tau`, for `tau` in (0, 1).
pub fn threshold_rank(s: &SpectralSummary, tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {tau} outside (0, 1)")));
    }
    let p = s
        .normalized()
        .ok_or_else(|| Error::DegenerateSpectrum("all singular values are zero".into()))?;
    Ok(p.iter().filter(|&&x| x >= tau).count())
}

/// Squared Frobenius norm over squared spectral norm.
pub fn stable_rank(s: &SpectralSummary) -> Result<f64> {
    let top = s.sigma.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::DegenerateSpectrum("leading singular value is zero".into()));
    }
    let fro: f64 = s.sigma.iter().map(|x| x * x).sum();
    Ok(fro / (top * top))
}

pub fn nuclear_norm(s: &SpectralSummary) -> f64 {
    s.sigma.iter().sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankMeasures {
    pub effective_rank: f64,
    pub threshold_rank: usize,
    pub stable_rank: f64,
    pub nuclear_norm: f64,
}

/// All four measures from a single decomposition.
pub fn rank_measures(a: &DenseMatrix, tau: f64) -> Result<RankMeasures> {
    let s = singular_values(a)?;
    measures_of(&s, tau)
}

pub fn measures_of(s: &SpectralSummary, tau: f64) -> Result<RankMeasures> {
    Ok(RankMeasures {
        effective_rank: effective_rank(s)?,
        threshold_rank: threshold_rank(s, tau)?,
        stable_rank: stable_rank(s)?,
        nuclear_norm: nuclear_norm(s),
    })
}

/// Effective rank of a matrix.
pub fn matrix_effective_rank(a: &DenseMatrix) -> Result<f64> {
    effective_rank(&singular_values(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn summary(v: &[f64]) -> SpectralSummary {
        SpectralSummary::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn effective_rank_examples() {
        let flat = effective_rank(&summary(&[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!((flat - 4f64.ln()).abs() < 1e-12);
        assert_eq!(effective_rank(&summary(&[5.0, 0.0, 0.0])).unwrap(), 0.0);
        // -(0.6 ln 0.6 + 0.3 ln 0.3 + 0.1 ln 0.1), summed by hand
        let direct = -(0.6f64 * 0.6f64.ln() + 0.3 * 0.3f64.ln() + 0.1 * 0.1f64.ln());
        let e = effective_rank(&summary(&[0.6, 0.3, 0.1])).unwrap();
        assert!((e - direct).abs() < 1e-14);
        assert!((e - 0.8979).abs() < 1e-4);
        assert!(matches!(
            effective_rank(&summary(&[0.0, 0.0])),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn threshold_rank_examples() {
        assert_eq!(threshold_rank(&summary(&[0.5, 0.3, 0.15, 0.05]), 0.1).unwrap(), 3);
        assert_eq!(threshold_rank(&summary(&[1.0; 8]), 0.01).unwrap(), 8);
        for tau in [0.0, 1.0, -0.5, 1.5] {
            assert!(matches!(
                threshold_rank(&summary(&[1.0]), tau),
                Err(Error::InvalidParameter(_))
            ));
        }
        let mut rng = rng_from_seed(3);
        let a = DenseMatrix::random_normal(40, 40, 1.0, &mut rng);
        let b = DenseMatrix::random_normal(40, 40, 1.0, &mut rng);
        let s = singular_values(&(&a * &b)).unwrap();
        let counts: Vec<usize> = [0.001, 0.005, 0.01]
            .iter()
            .map(|&t| threshold_rank(&s, t).unwrap())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    }

    #[test]
    fn stable_and_nuclear_examples() {
        assert_eq!(stable_rank(&summary(&[1.0; 6])).unwrap(), 6.0);
        assert_eq!(stable_rank(&summary(&[5.0, 0.0, 0.0])).unwrap(), 1.0);
        assert_eq!(stable_rank(&summary(&[2.0, 1.0])).unwrap(), 1.25);
        assert!(stable_rank(&summary(&[0.0, 0.0])).is_err());
        assert_eq!(nuclear_norm(&summary(&[1.0; 4])), 4.0);
        assert_eq!(nuclear_norm(&summary(&[2.0, 1.0, 0.0])), 3.0);
    }

    #[test]
    fn summary_invariants() {
        assert!(SpectralSummary::new(vec![1.0, 2.0], 2, 2).is_err());
        assert!(SpectralSummary::new(vec![1.0], 2, 2).is_err());
        assert!(SpectralSummary::new(vec![1.0, -1.0], 2, 3).is_err());
        assert!(SpectralSummary::new(vec![2.0, 1.0], 2, 3).is_ok());
    }

    #[test]
    fn rank_measures_bundle() {
        let m = rank_measures(&DenseMatrix::identity(5), 0.1).unwrap();
        assert!((m.effective_rank - 5f64.ln()).abs() < 1e-12);
        assert_eq!(m.threshold_rank, 5);
        assert!((m.stable_rank - 5.0).abs() < 1e-12);
        assert!((m.nuclear_norm - 5.0).abs() < 1e-12);
    }
}
