//! Asymptotic singular-value law of a product of `L` square Gaussian matrices.
//!
//! The density has no closed form in `sigma`, but both `sigma` and the density
//! are explicit in an angle `phi` in `(0, pi / (L + 1))`. Every integral over
//! the spectrum is therefore done in `phi` with the Jacobian `-d sigma / d phi`
//! (sigma decreases from `sigma_max` to 0 as `phi` sweeps the interval).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset keeping quadrature nodes off the endpoints, where the factors of the
/// integrand are 0/0 even though their product is smooth.
pub const BOUNDARY_EPS: f64 = 1e-9;
pub const DEFAULT_NODES: usize = 20_001;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductDensity {
    depth: u32,
    nodes: usize,
}

impl ProductDensity {
    pub fn new(depth: u32, nodes: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidParameter("product depth must be at least 1".into()));
        }
        if nodes < 101 || nodes % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "Simpson rule needs an odd node count >= 101, got {nodes}"
            )));
        }
        Ok(Self { depth, nodes })
    }

    pub fn with_depth(depth: u32) -> Result<Self> {
        Self::new(depth, DEFAULT_NODES)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Upper end of the `phi` interval.
    pub fn phi_max(&self) -> f64 {
        PI / (self.depth as f64 + 1.0)
    }

    /// `(sigma(phi), p(sigma(phi)))` for `phi` strictly inside the interval.
    pub fn sv_parametric(&self, phi: f64) -> Result<(f64, f64)> {
        self.check_phi(phi)?;
        Ok((self.sigma_at(phi), self.density_at(phi)))
    }

    fn check_phi(&self, phi: f64) -> Result<()> {
        if !(phi > 0.0 && phi < self.phi_max()) {
            return Err(Error::Domain(format!(
                "phi = {phi} outside (0, pi/{})",
                self.depth + 1
            )));
        }
        Ok(())
    }

    fn log_sines(&self, phi: f64) -> (f64, f64, f64) {
        let l = self.depth as f64;
        (phi.sin().ln(), (l * phi).sin().ln(), ((l + 1.0) * phi).sin().ln())
    }

    fn sigma_at(&self, phi: f64) -> f64 {
        let l = self.depth as f64;
        let (s1, sl, sl1) = self.log_sines(phi);
        (0.5 * ((l + 1.0) * sl1 - s1 - l * sl)).exp()
    }

    fn density_at(&self, phi: f64) -> f64 {
        let l = self.depth as f64;
        let (s1, sl, sl1) = self.log_sines(phi);
        2.0 / PI * (0.5 * (3.0 * s1 + (l - 2.0) * sl - (l - 1.0) * sl1)).exp()
    }

    /// `d sigma / d phi` from the logarithmic derivative of `sigma(phi)`.
    fn sigma_derivative(&self, phi: f64) -> f64 {
        let l = self.depth as f64;
        let cot = |x: f64| x.cos() / x.sin();
        let log_deriv = 0.5 * ((l + 1.0) * (l + 1.0) * cot((l + 1.0) * phi) - cot(phi) - l * l * cot(l * phi));
        self.sigma_at(phi) * log_deriv
    }

    /// Probability mass per unit `phi`: `p(sigma(phi)) * (-sigma'(phi))`.
    pub fn mass_per_phi(&self, phi: f64) -> Result<f64> {
        self.check_phi(phi)?;
        Ok(self.density_at(phi) * -self.sigma_derivative(phi))
    }

    /// Composite Simpson rule of `f(sigma(phi)) * mass(phi)` over the interior grid.
    fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let a = BOUNDARY_EPS;
        let b = self.phi_max() - BOUNDARY_EPS;
        let n = self.nodes;
        let h = (b - a) / (n - 1) as f64;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let phi = a + h * i as f64;
            let sigma = self.sigma_at(phi);
            let v = f(sigma) * self.density_at(phi) * -self.sigma_derivative(phi);
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite integrand {v} at phi = {phi} (L = {})",
                    self.depth
                )));
            }
            values.push(v);
        }
        let weighted: f64 = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * v
            })
            .sum();
        Ok(weighted * h / 3.0)
    }

    /// Total probability mass; 1 up to quadrature error.
    pub fn density_normalization(&self) -> Result<f64> {
        self.integrate(|_| 1.0)
    }

    /// Mean singular value `c = E[sigma]`.
    pub fn mean_singular_value(&self) -> Result<f64> {
        self.integrate(|s| s)
    }

    /// `-E[(sigma / c) ln(sigma / c)]`, the continuum analogue of effective rank
    /// after removing the `ln n` offset of an `n x n` matrix.
    pub fn differential_effective_rank(&self) -> Result<f64> {
        let c = self.mean_singular_value()?;
        self.integrate(|s| {
            let x = s / c;
            if x > 0.0 {
                -x * x.ln()
            } else {
                0.0
            }
        })
    }
}

/// `sqrt(L^-L (L+1)^(L+1))`, evaluated as `sqrt((1 + 1/L)^L (L + 1))`.
pub fn sigma_max(depth: u32) -> f64 {
    let l = depth as f64;
    ((1.0 + 1.0 / l).powi(depth as i32) * (l + 1.0)).sqrt()
}
