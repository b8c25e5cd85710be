//! Gaussian ECH profile parameterization shared by the plant, the pipeline,
//! the GP inputs and the actuation model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to Gaussian widths everywhere.
pub const SIGMA_MIN: f64 = 0.02;

/// Gaussian heating profile `w * exp(-(rho - mu)^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchParams {
    pub mu: f64,
    pub sigma: f64,
    pub w: f64,
}

impl EchParams {
    pub fn new(mu: f64, sigma: f64, w: f64) -> Result<Self> {
        let p = EchParams { mu, sigma, w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) || !self.mu.is_finite() {
            return Err(Error::validation("mu_q", format!("center {} outside [0, 1]", self.mu)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::validation("sigma_q", format!("width {} must be positive", self.sigma)));
        }
        if !(self.w >= 0.0) || !self.w.is_finite() {
            return Err(Error::validation("w_q", format!("amplitude {} must be nonnegative", self.w)));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mu, self.sigma, self.w]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        EchParams { mu: a[0], sigma: a[1], w: a[2] }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        gaussian(rho, self.mu, self.sigma, self.w)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&r| self.eval(r)).collect()
    }
}

pub fn gaussian(rho: f64, mu: f64, sigma: f64, w: f64) -> f64 {
    let d = rho - mu;
    w * (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Uniform grid of `n` points on `[0, 1]` in normalized minor radius.
pub fn radial_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
