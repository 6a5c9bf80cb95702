//! Gradient descent on a factored linear map `W_e = W_d ... W_1` for least
//! squares, and the first-order "preconditioned" update it induces on `W_e`.
//!
//! Loss convention: `L(W_e) = 1/2 ||Y - W_e X||_F^2`, summed over samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::spectral::{singular_values, threshold_rank};

/// Chain of factors, input side first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactoredLinear {
    factors: Vec<DenseMatrix>,
}

impl FactoredLinear {
    /// Validated chain; every intermediate width must be at least
    /// `min(input_dim, output_dim)`.
    pub fn new(factors: Vec<DenseMatrix>) -> Result<Self> {
        let f = Self::with_bottleneck(factors)?;
        let floor = f.input_dim().min(f.output_dim());
        for (i, w) in f.factors.iter().enumerate().skip(1) {
            if w.cols() < floor {
                return Err(Error::Structural(format!(
                    "intermediate width {} before factor {i} is below min(in, out) = {floor}",
                    w.cols()
                )));
            }
        }
        Ok(f)
    }

    /// Chain check only; intermediate widths may bottleneck the rank.
    pub fn with_bottleneck(factors: Vec<DenseMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Structural("a factored map needs at least one factor".into()));
        }
        for (i, pair) in factors.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::Structural(format!(
                    "factor {} is {}x{} but factor {i} outputs {} rows",
                    i + 1,
                    pair[1].rows(),
                    pair[1].cols(),
                    pair[0].rows()
                )));
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[DenseMatrix] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<DenseMatrix> {
        self.factors
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    pub fn input_dim(&self) -> usize {
        self.factors[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.factors[self.factors.len() - 1].rows()
    }

    /// `W_{hi-1} ... W_{lo}` (0-based, half-open); `None` stands for identity.
    fn span(&self, lo: usize, hi: usize) -> Option<DenseMatrix> {
        let mut acc: Option<DenseMatrix> = None;
        for w in &self.factors[lo..hi] {
            acc = Some(match acc {
                None => w.clone(),
                Some(a) => w * &a,
            });
        }
        acc
    }

    /// Products below and above each factor: `below[i] = W_{i-1}...W_1`,
    /// `above[i] = W_d...W_{i+1}` (0-based).
    fn partial_products(&self) -> (Vec<Option<DenseMatrix>>, Vec<Option<DenseMatrix>>) {
        let d = self.depth();
        let mut below = Vec::with_capacity(d);
        let mut acc: Option<DenseMatrix> = None;
        for w in &self.factors {
            below.push(acc.clone());
            acc = Some(match acc {
                None => w.clone(),
                Some(a) => w * &a,
            });
        }
        let mut above = vec![None; d];
        let mut acc: Option<DenseMatrix> = None;
        for i in (0..d).rev() {
            above[i] = acc.clone();
            acc = Some(match acc {
                None => self.factors[i].clone(),
                Some(a) => &a * &self.factors[i],
            });
        }
        (below, above)
    }
}

/// `W_d ... W_1`.
pub fn end_to_end(f: &FactoredLinear) -> DenseMatrix {
    f.span(0, f.depth()).expect("non-empty chain")
}

/// Regression data `Y` (m x q) from inputs `X` (n x q).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresTask {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub w_star: Option<DenseMatrix>,
    pub task_rank: Option<usize>,
}

impl LeastSquaresTask {
    pub fn new(x: DenseMatrix, y: DenseMatrix) -> Result<Self> {
        if x.cols() != y.cols() {
            return Err(Error::Structural(format!(
                "{} input samples but {} targets",
                x.cols(),
                y.cols()
            )));
        }
        Ok(Self {
            x,
            y,
            w_star: None,
            task_rank: None,
        })
    }

    /// Targets `Y = W* X`; the task rank is the 1e-8 threshold rank of `W*`.
    pub fn from_generator(w_star: DenseMatrix, x: DenseMatrix) -> Result<Self> {
        let y = w_star.matmul(&x)?;
        let rank = threshold_rank(&singular_values(&w_star)?, 1e-8)?;
        Ok(Self {
            x,
            y,
            w_star: Some(w_star),
            task_rank: Some(rank),
        })
    }

    /// Random rank-`rank` generator `W* = A B / sqrt(n)` with Gaussian `A`
    /// (m x rank), `B` (rank x n), and standard Gaussian inputs.
    pub fn synthetic<R: rand::Rng + ?Sized>(
        output_dim: usize,
        input_dim: usize,
        samples: usize,
        rank: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if rank == 0 || rank > output_dim.min(input_dim) {
            return Err(Error::InvalidParameter(format!(
                "task rank {rank} must lie in 1..={}",
                output_dim.min(input_dim)
            )));
        }
        let a = DenseMatrix::random_normal(output_dim, rank, 1.0 / (input_dim as f64).sqrt(), rng);
        let b = DenseMatrix::random_normal(rank, input_dim, 1.0 / (rank as f64).sqrt(), rng);
        let x = DenseMatrix::random_normal(input_dim, samples, 1.0, rng);
        Self::from_generator(&a * &b, x)
    }

    pub fn samples(&self) -> usize {
        self.x.cols()
    }

    /// Fresh inputs and targets from the same generator.
    pub fn held_out<R: rand::Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<Self> {
        let w = self
            .w_star
            .clone()
            .ok_or_else(|| Error::InvalidInput("task has no generator to draw from".into()))?;
        let x = DenseMatrix::random_normal(self.x.rows(), samples, 1.0, rng);
        Self::from_generator(w, x)
    }

    fn check(&self, w_e: &DenseMatrix) -> Result<()> {
        if w_e.cols() != self.x.rows() || w_e.rows() != self.y.rows() {
            return Err(Error::Structural(format!(
                "map is {}x{} but task is {} -> {}",
                w_e.rows(),
                w_e.cols(),
                self.x.rows(),
                self.y.rows()
            )));
        }
        Ok(())
    }
}

/// `1/2 ||Y - W_e X||^2`.
pub fn ls_loss(w_e: &DenseMatrix, task: &LeastSquaresTask) -> Result<f64> {
    task.check(w_e)?;
    let r = &(w_e * &task.x) - &task.y;
    Ok(0.5 * r.as_slice().iter().map(|v| v * v).sum::<f64>())
}

/// `W_e X X^T - Y X^T`.
pub fn ls_gradient(w_e: &DenseMatrix, task: &LeastSquaresTask) -> Result<DenseMatrix> {
    task.check(w_e)?;
    let residual = &(w_e * &task.x) - &task.y;
    Ok(residual.mul_t(&task.x))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("step size {eta} must be positive")));
    }
    Ok(())
}

/// Per-factor gradients `above_i^T * grad * below_i^T`.
pub fn factor_gradients(f: &FactoredLinear, task: &LeastSquaresTask) -> Result<Vec<DenseMatrix>> {
    let grad = ls_gradient(&end_to_end(f), task)?;
    let (below, above) = f.partial_products();
    Ok(below
        .iter()
        .zip(&above)
        .map(|(b, a)| {
            let left = match a {
                Some(a) => a.t_mul(&grad),
                None => grad.clone(),
            };
            match b {
                Some(b) => left.mul_t(b),
                None => left,
            }
        })
        .collect())
}

/// One simultaneous gradient step on every factor.
pub fn factored_step(f: &FactoredLinear, task: &LeastSquaresTask, eta: f64) -> Result<FactoredLinear> {
    check_eta(eta)?;
    let grads = factor_gradients(f, task)?;
    let factors = f
        .factors
        .iter()
        .zip(&grads)
        .map(|(w, g)| {
            let mut w = w.clone();
            w.axpy(-eta, g);
            w
        })
        .collect();
    Ok(FactoredLinear { factors })
}

/// `W_e - eta * sum_i (above_i above_i^T) grad (below_i^T below_i)`: the
/// factored step with every term of order `eta^2` and higher dropped.
pub fn preconditioned_prediction(f: &FactoredLinear, task: &LeastSquaresTask, eta: f64) -> Result<DenseMatrix> {
    check_eta(eta)?;
    let w_e = end_to_end(f);
    let grad = ls_gradient(&w_e, task)?;
    let (below, above) = f.partial_products();
    let mut out = w_e;
    for (b, a) in below.iter().zip(&above) {
        let left = match a {
            Some(a) => &a.mul_t(a) * &grad,
            None => grad.clone(),
        };
        let term = match b {
            Some(b) => &left * &b.t_mul(b),
            None => left,
        };
        out.axpy(-eta, &term);
    }
    Ok(out)
}

/// Frobenius gap between the true factored step and its first-order prediction.
pub fn equivalence_residual(f: &FactoredLinear, task: &LeastSquaresTask, eta: f64) -> Result<f64> {
    let stepped = end_to_end(&factored_step(f, task, eta)?);
    let predicted = preconditioned_prediction(f, task, eta)?;
    Ok((&stepped - &predicted).frobenius_norm())
}

/// Off-diagonal share of the Frobenius mass of every left (`above above^T`)
/// and right (`below^T below`) preconditioner. Near zero when the
/// preconditioners are close to diagonal.
pub fn preconditioner_offdiag_ratio(f: &FactoredLinear) -> f64 {
    let (below, above) = f.partial_products();
    let mut off = 0.0;
    let mut total = 0.0;
    let mut accumulate = |m: &DenseMatrix| {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let v = m[(r, c)] * m[(r, c)];
                total += v;
                if r != c {
                    off += v;
                }
            }
        }
    };
    for a in above.iter().flatten() {
        accumulate(&a.mul_t(a));
    }
    for b in below.iter().flatten() {
        accumulate(&b.t_mul(b));
    }
    if total == 0.0 {
        0.0
    } else {
        off / total
    }
}

/// Random orthogonal `n x n` matrix (Gram-Schmidt on a Gaussian draw).
pub fn random_orthogonal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> DenseMatrix {
    loop {
        let g = DenseMatrix::random_normal(n, n, 1.0, rng);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for c in 0..n {
            let mut v = g.column(c);
            for _ in 0..2 {
                for q in &cols {
                    let p: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= p * qi;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
        if ok {
            return DenseMatrix::from_fn(n, n, |r, c| cols[c][r]);
        }
    }
}
