//! One-sided (Hestenes) Jacobi SVD.
//!
//! Columns of a working copy are rotated pairwise until every pair is
//! numerically orthogonal; the column norms are then the singular values.
//! Accuracy is relative to each singular value, which matters here because the
//! rank measures look at the whole spectrum, not just the top of it.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::spectral::SpectralSummary;

const MAX_SWEEPS: usize = 60;
const MAX_DIM: usize = 1024;

/// Thin SVD `a = left * diag(sigma) * right^T`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows x p` with orthonormal columns.
    pub left: DenseMatrix,
    pub summary: SpectralSummary,
    /// `cols x p` with orthonormal columns.
    pub right: DenseMatrix,
}

impl Svd {
    pub fn sigma(&self) -> &[f64] {
        self.summary.sigma()
    }

    /// `left * diag(sigma) * right^T`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.left.clone();
        let sigma = self.summary.sigma();
        for r in 0..us.rows() {
            for (c, s) in sigma.iter().enumerate() {
                us[(r, c)] *= s;
            }
        }
        us.mul_t(&self.right)
    }
}

/// Full thin decomposition with both singular-vector factors.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    validate(a)?;
    if a.rows() >= a.cols() {
        let t = jacobi_tall(a.rows(), a.cols(), column_major(a), true)?;
        Ok(Svd {
            left: t.left,
            summary: SpectralSummary::new(t.sigma, a.rows(), a.cols())?,
            right: t.right.expect("right factor requested"),
        })
    } else {
        let at = a.transpose();
        let t = jacobi_tall(at.rows(), at.cols(), column_major(&at), true)?;
        Ok(Svd {
            left: t.right.expect("right factor requested"),
            summary: SpectralSummary::new(t.sigma, a.rows(), a.cols())?,
            right: t.left,
        })
    }
}

/// Singular values only; skips accumulating the right factor.
pub fn singular_values(a: &DenseMatrix) -> Result<SpectralSummary> {
    validate(a)?;
    let sigma = if a.rows() >= a.cols() {
        jacobi_sigma(a.rows(), a.cols(), column_major(a))?
    } else {
        let at = a.transpose();
        jacobi_sigma(at.rows(), at.cols(), column_major(&at))?
    };
    SpectralSummary::new(sigma, a.rows(), a.cols())
}

fn validate(a: &DenseMatrix) -> Result<()> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if a.rows().min(a.cols()) > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "min dimension {} exceeds {MAX_DIM}",
            a.rows().min(a.cols())
        )));
    }
    Ok(())
}

fn column_major(a: &DenseMatrix) -> Vec<f64> {
    a.transpose().into_vec()
}

struct TallSvd {
    sigma: Vec<f64>,
    left: DenseMatrix,
    right: Option<DenseMatrix>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn rotate(cols: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q * len);
    let xp = &mut head[p * len..(p + 1) * len];
    let xq = &mut tail[..len];
    for (x, y) in xp.iter_mut().zip(xq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Orthogonalises the `n` columns (each of length `m`) in place. Returns the
/// number of sweeps used.
fn orthogonalise(m: usize, n: usize, cols: &mut [f64], mut v: Option<&mut [f64]>) -> Result<usize> {
    let tol = 4.0 * f64::EPSILON * (m as f64).sqrt();
    let mut norms: Vec<f64> = (0..n).map(|j| dot(&cols[j * m..(j + 1) * m], &cols[j * m..(j + 1) * m])).collect();
    let mut off = 0.0f64;
    for sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        off = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p * m..(p + 1) * m], &cols[q * m..(q + 1) * m]);
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cols, m, p, q, c, s);
                if let Some(v) = v.as_deref_mut() {
                    rotate(v, n, p, q, c, s);
                }
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        // refresh cached norms to stop drift from the incremental updates
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = dot(&cols[j * m..(j + 1) * m], &cols[j * m..(j + 1) * m]);
        }
        if !rotated {
            return Ok(sweep + 1);
        }
    }
    Err(Error::Convergence {
        sweeps: MAX_SWEEPS,
        off_norm: off,
    })
}

fn descending_order(norms: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    order
}

fn jacobi_sigma(m: usize, n: usize, mut cols: Vec<f64>) -> Result<Vec<f64>> {
    orthogonalise(m, n, &mut cols, None)?;
    let mut sigma: Vec<f64> = (0..n).map(|j| dot(&cols[j * m..(j + 1) * m], &cols[j * m..(j + 1) * m]).sqrt()).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(sigma)
}

fn jacobi_tall(m: usize, n: usize, mut cols: Vec<f64>, want_right: bool) -> Result<TallSvd> {
    let mut v = if want_right {
        let mut id = vec![0.0; n * n];
        for j in 0..n {
            id[j * n + j] = 1.0;
        }
        Some(id)
    } else {
        None
    };
    orthogonalise(m, n, &mut cols, v.as_deref_mut())?;

    let raw: Vec<f64> = (0..n).map(|j| dot(&cols[j * m..(j + 1) * m], &cols[j * m..(j + 1) * m]).sqrt()).collect();
    let order = descending_order(&raw);
    let sigma: Vec<f64> = order.iter().map(|&j| raw[j]).collect();
    let cutoff = sigma.first().copied().unwrap_or(0.0) * f64::EPSILON;

    // left singular vectors, column-major; null directions filled in below
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut null_slots = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = raw[j];
        if s > cutoff && s > 0.0 {
            u.push(cols[j * m..(j + 1) * m].iter().map(|x| x / s).collect());
        } else {
            u.push(vec![0.0; m]);
            null_slots.push(k);
        }
    }
    complete_basis(&mut u, &null_slots, m);

    let left = DenseMatrix::from_fn(m, n, |r, c| u[c][r]);
    let right = v.map(|v| DenseMatrix::from_fn(n, n, |r, c| v[order[c] * n + r]));
    Ok(TallSvd { sigma, left, right })
}

/// Replaces the vectors at `slots` by unit vectors orthogonal to all others.
/// Each slot takes the standard basis vector with the largest residual after
/// two passes of Gram-Schmidt; with k filled vectors that residual is at least
/// `sqrt((m - k) / m)`.
fn complete_basis(u: &mut [Vec<f64>], slots: &[usize], m: usize) {
    let mut filled: Vec<bool> = (0..u.len()).map(|k| !slots.contains(&k)).collect();
    for &slot in slots {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for candidate in 0..m {
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            for _ in 0..2 {
                for (uk, _) in u.iter().zip(&filled).filter(|(_, f)| **f) {
                    let proj = dot(&e, uk);
                    for (ei, ui) in e.iter_mut().zip(uk) {
                        *ei -= proj * ui;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|b| norm > b.0) {
                best = Some((norm, e));
            }
        }
        let (norm, e) = best.expect("completion needs m >= 1");
        u[slot] = e.iter().map(|x| x / norm).collect();
        filled[slot] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn orthonormality_error(q: &DenseMatrix) -> f64 {
        let g = q.t_mul(q);
        (&g - &DenseMatrix::identity(g.rows())).max_abs()
    }

    fn relative_reconstruction(a: &DenseMatrix, s: &Svd) -> f64 {
        (&s.reconstruct() - a).frobenius_norm() / a.frobenius_norm()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let s = svd(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(s.sigma(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_with_zero() {
        let a = DenseMatrix::from_diag(2, 2, &[3.0, 0.0]);
        let s = svd(&a).unwrap();
        assert_eq!(s.sigma(), &[3.0, 0.0]);
        assert!(orthonormality_error(&s.left) < 1e-12);
        assert!(orthonormality_error(&s.right) < 1e-12);
    }

    #[test]
    fn random_tall_and_wide_reconstruct() {
        let mut rng = rng_from_seed(11);
        for &(r, c) in &[(8, 5), (5, 8), (1, 4), (4, 1), (30, 30)] {
            let a = DenseMatrix::random_normal(r, c, 1.0, &mut rng);
            let s = svd(&a).unwrap();
            assert!(relative_reconstruction(&a, &s) < 1e-10, "{r}x{c}");
            assert!(orthonormality_error(&s.left) < 1e-10);
            assert!(orthonormality_error(&s.right) < 1e-10);
            let only = singular_values(&a).unwrap();
            for (x, y) in only.sigma().iter().zip(s.sigma()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_factors_stay_orthonormal() {
        let ones = DenseMatrix::new(3, 3, vec![1.0; 9]).unwrap();
        let s = svd(&ones).unwrap();
        assert!((s.sigma()[0] - 3.0).abs() < 1e-12);
        assert!(s.sigma()[1] < 1e-12);
        assert!(orthonormality_error(&s.left) < 1e-10);
        assert!(relative_reconstruction(&ones, &s) < 1e-12);

        let z = DenseMatrix::zeros(4, 3);
        let s = svd(&z).unwrap();
        assert_eq!(s.sigma(), &[0.0, 0.0, 0.0]);
        assert!(orthonormality_error(&s.left) < 1e-12);
    }

    #[test]
    fn single_null_direction_in_a_rotated_basis() {
        let mut rng = rng_from_seed(8);
        let n = 64;
        let q = crate::dynamics::random_orthogonal(n, &mut rng);
        let d: Vec<f64> = (0..n).map(|i| if i == n - 1 { 0.0 } else { 1.0 + i as f64 }).collect();
        let a = q.matmul(&DenseMatrix::from_diag(n, n, &d)).unwrap().mul_t(&q);
        let s = svd(&a).unwrap();
        assert!(orthonormality_error(&s.left) < 1e-10);
        assert!(relative_reconstruction(&a, &s) < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = DenseMatrix::identity(2);
        a.as_mut_slice()[1] = f64::NAN;
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }
}
