use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cholesky::Cholesky;
use super::kernel::Kernel;
use crate::ech::EchParams;
use crate::error::{Error, Result};
use crate::pipeline::ShotSummary;

/// GP inputs: pressure context plus the three ECH parameters.
pub const GP_INPUT_DIM: usize = 4;

/// Prior mean of time-to-tearing-mode (seconds).
pub trait PriorMean: Send + Sync + Debug {
    fn mean(&self, beta_n: f64, ech: &EchParams) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroPrior;

impl PriorMean for ZeroPrior {
    fn mean(&self, _: f64, _: &EchParams) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPrior(pub f64);

impl ConstantPrior {
    /// Mean of the observed targets.
    pub fn of_rows(rows: &[GpRow]) -> Self {
        ConstantPrior(rows.iter().map(|r| r.t_tm).sum::<f64>() / rows.len().max(1) as f64)
    }
}

impl PriorMean for ConstantPrior {
    fn mean(&self, _: f64, _: &EchParams) -> f64 {
        self.0
    }
}

/// Any prior shifted by a constant.
#[derive(Debug, Clone)]
pub struct ShiftedPrior(pub Arc<dyn PriorMean>, pub f64);

impl PriorMean for ShiftedPrior {
    fn mean(&self, beta_n: f64, ech: &EchParams) -> f64 {
        self.0.mean(beta_n, ech) + self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpRow {
    pub beta_n_bar: f64,
    pub ech: EchParams,
    pub t_tm: f64,
    pub campaign: u32,
}

impl From<&ShotSummary> for GpRow {
    fn from(s: &ShotSummary) -> Self {
        GpRow { beta_n_bar: s.beta_n_bar, ech: s.ech(), t_tm: s.t_tm_seconds, campaign: s.campaign }
    }
}

/// Affine map of `(beta_n, mu, sigma, w)` onto `[0, 1]` per axis. A
/// zero-width axis maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub lo: [f64; GP_INPUT_DIM],
    pub hi: [f64; GP_INPUT_DIM],
}

impl InputScaler {
    pub fn identity() -> Self {
        InputScaler { lo: [0.0; GP_INPUT_DIM], hi: [1.0; GP_INPUT_DIM] }
    }

    /// Bounds from the observed min/max of each axis.
    pub fn from_rows(rows: &[GpRow]) -> Self {
        let mut lo = [f64::INFINITY; GP_INPUT_DIM];
        let mut hi = [f64::NEG_INFINITY; GP_INPUT_DIM];
        for r in rows {
            for (d, v) in raw(r.beta_n_bar, &r.ech).into_iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        if rows.is_empty() {
            return InputScaler::identity();
        }
        InputScaler { lo, hi }
    }

    pub fn scale(&self, beta_n: f64, ech: &EchParams) -> [f64; GP_INPUT_DIM] {
        let mut x = raw(beta_n, ech);
        for (d, v) in x.iter_mut().enumerate() {
            let span = self.hi[d] - self.lo[d];
            *v = if span > 1e-12 { (*v - self.lo[d]) / span } else { 0.0 };
        }
        x
    }
}

fn raw(beta_n: f64, ech: &EchParams) -> [f64; GP_INPUT_DIM] {
    [beta_n, ech.mu, ech.sigma, ech.w]
}

/// Hyperparameters: kernel, noise variance and input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub kernel: Kernel,
    pub noise_variance: f64,
    pub scaler: InputScaler,
}

impl GpModel {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.kernel.lengthscales.len() != GP_INPUT_DIM {
            return Err(Error::Config(format!(
                "GP kernel needs {GP_INPUT_DIM} lengthscales, got {}",
                self.kernel.lengthscales.len()
            )));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::Config("noise variance must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn input(&self, beta_n: f64, ech: &EchParams, campaign: u32) -> Vec<f64> {
        let mut x = self.scaler.scale(beta_n, ech).to_vec();
        if self.kernel.is_time_augmented() {
            x.push(campaign as f64);
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Exact posterior given the rows, with the prior mean subtracted from the
/// targets before the solve and added back at prediction.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    model: GpModel,
    prior: Arc<dyn PriorMean>,
    rows: Vec<GpRow>,
    inputs: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    chol: Cholesky,
    alpha: Vec<f64>,
}

impl GpPosterior {
    pub fn fit(model: GpModel, prior: Arc<dyn PriorMean>, rows: Vec<GpRow>) -> Result<Self> {
        model.validate()?;
        let inputs: Vec<Vec<f64>> = rows.iter().map(|r| model.input(r.beta_n_bar, &r.ech, r.campaign)).collect();
        let residuals: Vec<f64> = rows.iter().map(|r| r.t_tm - prior.mean(r.beta_n_bar, &r.ech)).collect();
        let k = &model.kernel;
        let noise = model.noise_variance;
        let chol = Cholesky::factor(rows.len(), |i, j| {
            k.eval_unchecked(&inputs[i], &inputs[j]) + if i == j { noise } else { 0.0 }
        })?;
        let alpha = chol.solve(&residuals);
        Ok(GpPosterior { model, prior, rows, inputs, residuals, chol, alpha })
    }

    pub fn model(&self) -> &GpModel {
        &self.model
    }

    pub fn prior(&self) -> &Arc<dyn PriorMean> {
        &self.prior
    }

    pub fn rows(&self) -> &[GpRow] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    pub fn prior_mean(&self, beta_n: f64, ech: &EchParams) -> f64 {
        self.prior.mean(beta_n, ech)
    }

    pub fn predict(&self, beta_n: f64, ech: &EchParams, campaign: u32) -> Prediction {
        let x = self.model.input(beta_n, ech, campaign);
        let m0 = self.prior.mean(beta_n, ech);
        self.predict_input(&x, m0)
    }

    /// Predict at an already-scaled input with a given prior value.
    pub fn predict_input(&self, x: &[f64], prior_mean: f64) -> Prediction {
        let k = &self.model.kernel;
        let noise = self.model.noise_variance;
        let kss = k.eval_unchecked(x, x);
        if self.rows.is_empty() {
            return Prediction { mean: prior_mean, variance: kss + noise };
        }
        let ks: Vec<f64> = self.inputs.iter().map(|xi| k.eval_unchecked(xi, x)).collect();
        let mean = prior_mean + ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = self.chol.solve_lower(&ks);
        let reduction: f64 = v.iter().map(|x| x * x).sum();
        Prediction { mean, variance: (kss - reduction).max(0.0) + noise }
    }

    /// Latent posterior mean and covariance (no observation noise) at scaled
    /// inputs `xs` with prior values `prior_means`.
    pub fn predict_joint(&self, xs: &[Vec<f64>], prior_means: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = &self.model.kernel;
        let cross: Vec<Vec<f64>> =
            xs.iter().map(|x| self.inputs.iter().map(|xi| k.eval_unchecked(xi, x)).collect()).collect();
        let mean = cross
            .iter()
            .zip(prior_means)
            .map(|(ks, m0)| m0 + ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let v: Vec<Vec<f64>> = cross.iter().map(|ks| self.chol.solve_lower(ks)).collect();
        let cov = (0..xs.len())
            .map(|i| {
                (0..xs.len())
                    .map(|j| k.eval_unchecked(&xs[i], &xs[j]) - v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum::<f64>())
                    .collect()
            })
            .collect();
        (mean, cov)
    }

    /// Append one row by a rank-one extension of the factor; falls back to a
    /// full refit if the extension is not positive definite.
    pub fn add_observation(&mut self, row: GpRow) -> Result<()> {
        let x = self.model.input(row.beta_n_bar, &row.ech, row.campaign);
        let k = &self.model.kernel;
        let col: Vec<f64> = self.inputs.iter().map(|xi| k.eval_unchecked(xi, &x)).collect();
        let diag = k.eval_unchecked(&x, &x) + self.model.noise_variance;
        let residual = row.t_tm - self.prior.mean(row.beta_n_bar, &row.ech);
        if self.chol.append(&col, diag) {
            self.rows.push(row);
            self.inputs.push(x);
            self.residuals.push(residual);
            self.alpha = self.chol.solve(&self.residuals);
            Ok(())
        } else {
            tracing::warn!(n = self.rows.len(), "rank-one update failed, refitting");
            let mut rows = std::mem::take(&mut self.rows);
            rows.push(row);
            *self = GpPosterior::fit(self.model.clone(), self.prior.clone(), rows)?;
            Ok(())
        }
    }

    /// `log p(y | X)` under the current hyperparameters and prior.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.rows.len() as f64;
        let fit: f64 = self.residuals.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * fit - 0.5 * self.chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Pick the isotropic lengthscale and signal variance maximizing the log
/// marginal likelihood over a grid. Ties keep the earliest candidate.
pub fn select_hyperparameters(
    base: &GpModel,
    prior: Arc<dyn PriorMean>,
    rows: &[GpRow],
    lengthscales: &[f64],
    signal_variances: &[f64],
) -> Result<GpModel> {
    let mut best: Option<(f64, GpModel)> = None;
    for &ls in lengthscales {
        for &sv in signal_variances {
            let mut m = base.clone();
            m.kernel.lengthscales = vec![ls; GP_INPUT_DIM];
            m.kernel.signal_variance = sv;
            let lml = GpPosterior::fit(m.clone(), prior.clone(), rows.to_vec())?.log_marginal_likelihood();
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, m));
            }
        }
    }
    best.map(|(_, m)| m).ok_or_else(|| Error::Config("empty hyperparameter grid".into()))
}
