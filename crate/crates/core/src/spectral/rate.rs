//! Time evolution of the effective rank when the (diagonal) singular value
//! matrix `S` moves along a trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::entropy;

/// Singular values along a trajectory together with their first and
/// (optionally) second time derivatives or differences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularTrajectory {
    s: Vec<f64>,
    s_dot: Vec<f64>,
    s_ddot: Option<Vec<f64>>,
}

impl SingularTrajectory {
    pub fn new(s: Vec<f64>, s_dot: Vec<f64>, s_ddot: Option<Vec<f64>>) -> Result<Self> {
        if s.is_empty() || s.len() != s_dot.len() || s_ddot.as_ref().is_some_and(|d| d.len() != s.len()) {
            return Err(Error::InvalidInput("trajectory lists must share one non-zero length".into()));
        }
        if let Some(bad) = s.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("singular value {bad} is not strictly positive")));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&s) || !finite(&s_dot) || !s_ddot.as_deref().is_none_or(finite) {
            return Err(Error::InvalidInput("trajectory contains non-finite values".into()));
        }
        Ok(Self { s, s_dot, s_ddot })
    }

    /// Backward differences at time `t` from the spectra at `t`, `t-1`, `t-2`.
    pub fn from_backward(current: &[f64], previous: &[f64], before: &[f64]) -> Result<Self> {
        if current.len() != previous.len() || current.len() != before.len() {
            return Err(Error::InvalidInput("spectra have different lengths".into()));
        }
        let s_dot = current.iter().zip(previous).map(|(a, b)| a - b).collect();
        let s_ddot = current
            .iter()
            .zip(previous)
            .zip(before)
            .map(|((a, b), c)| a - 2.0 * b + c)
            .collect();
        Self::new(current.to_vec(), s_dot, Some(s_ddot))
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn s_dot(&self) -> &[f64] {
        &self.s_dot
    }

    pub fn s_ddot(&self) -> Option<&[f64]> {
        self.s_ddot.as_deref()
    }

    fn trace(&self) -> f64 {
        self.s.iter().sum()
    }

    fn current_rank(&self) -> f64 {
        let t = self.trace();
        entropy(&self.s.iter().map(|x| x / t).collect::<Vec<_>>())
    }
}

/// `de/dt = (-Tr(S' log(S / Tr S)) - e Tr S') / Tr S`.
pub fn effective_rank_rate(t: &SingularTrajectory) -> Result<f64> {
    let tr = t.trace();
    let e = t.current_rank();
    let tr_dot: f64 = t.s_dot.iter().sum();
    let weighted: f64 = t.s.iter().zip(&t.s_dot).map(|(s, d)| d * (s / tr).ln()).sum();
    Ok((-weighted - e * tr_dot) / tr)
}

/// Solves the discretised second-order effective-rank equation for `e_t`
/// given `e_{t-1}` and `e_{t-2}`. `S`, `S'`, `S''` are taken at time `t`.
///
/// The `S'^2 S^-1` term is read as the elementwise product `S' S' / S`.
pub fn effective_rank_recurrence(t: &SingularTrajectory, e_prev: f64, e_prev2: f64) -> Result<f64> {
    let s_ddot = t
        .s_ddot
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("recurrence needs second differences".into()))?;
    let tr: f64 = t.trace();
    let tr_dot: f64 = t.s_dot.iter().sum();
    let tr_ddot: f64 = s_ddot.iter().sum();

    let denominator = tr + 2.0 * tr_dot + tr_ddot;
    if denominator.abs() <= 1e-12 * tr {
        return Err(Error::SingularRecurrence { denominator });
    }
    let accel_log: f64 = t.s.iter().zip(s_ddot).map(|(s, dd)| dd * (s / tr).ln()).sum();
    let velocity_sq: f64 = t.s.iter().zip(&t.s_dot).map(|(s, d)| d * d / s).sum();

    let numerator = 2.0 * e_prev * (tr + tr_dot) - e_prev2 * tr - accel_log - velocity_sq + tr_dot * tr_dot / tr;
    Ok(numerator / denominator)
}
