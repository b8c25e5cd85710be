use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::config::RpnnConfig;
use super::net::{forward_step, Architecture, ParamGroup, StepTrace};
use crate::error::{check_len, Error, Result};

/// Diagonal Gaussian over the next-state delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// `sum_i 0.5 [ln 2 pi + ln v_i + (t_i - m_i)^2 / v_i]`.
pub fn nll_loss(pred: &GaussianPrediction, target: &[f64]) -> Result<f64> {
    check_len("NLL target", target.len(), pred.mean.len())?;
    check_len("NLL variance", pred.variance.len(), pred.mean.len())?;
    Ok(pred
        .mean
        .iter()
        .zip(&pred.variance)
        .zip(target)
        .map(|((m, v), t)| 0.5 * ((2.0 * std::f64::consts::PI).ln() + v.ln() + (t - m).powi(2) / v))
        .sum())
}

/// Per-channel affine standardization of states, actions and deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state_mean: Vec<f64>,
    pub state_scale: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_scale: Vec<f64>,
    pub delta_mean: Vec<f64>,
    pub delta_scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Normalizer {
            state_mean: vec![0.0; state_dim],
            state_scale: vec![1.0; state_dim],
            action_mean: vec![0.0; action_dim],
            action_scale: vec![1.0; action_dim],
            delta_mean: vec![0.0; state_dim],
            delta_scale: vec![1.0; state_dim],
        }
    }

    /// Moments of the given rows; near-constant channels keep scale 1.
    pub fn fit(states: &[&[f64]], actions: &[&[f64]], deltas: &[Vec<f64>]) -> Self {
        let moments = |rows: &mut dyn Iterator<Item = &[f64]>, dim: usize| {
            let mut n = 0.0;
            let mut sum = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            for r in rows {
                n += 1.0;
                for (i, v) in r.iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
            }
            let n: f64 = f64::max(n, 1.0);
            let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let scale = sq
                .iter()
                .zip(&mean)
                .map(|(q, m)| {
                    let var = (q / n - m * m).max(0.0);
                    if var.sqrt() > 1e-9 * (1.0 + m.abs()) { var.sqrt() } else { 1.0 }
                })
                .collect();
            (mean, scale)
        };
        let sd = states.first().map_or(0, |s| s.len());
        let ad = actions.first().map_or(0, |a| a.len());
        let (state_mean, state_scale) = moments(&mut states.iter().copied(), sd);
        let (action_mean, action_scale) = moments(&mut actions.iter().copied(), ad);
        let (delta_mean, delta_scale) = moments(&mut deltas.iter().map(Vec::as_slice), sd);
        Normalizer { state_mean, state_scale, action_mean, action_scale, delta_mean, delta_scale }
    }

    pub fn input(&self, s: &[f64], a: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(s.iter().zip(&self.state_mean).zip(&self.state_scale).map(|((x, m), c)| (x - m) / c));
        out.extend(a.iter().zip(&self.action_mean).zip(&self.action_scale).map(|((x, m), c)| (x - m) / c));
    }

    pub fn delta(&self, d: &[f64]) -> Vec<f64> {
        d.iter().zip(&self.delta_mean).zip(&self.delta_scale).map(|((x, m), c)| (x - m) / c).collect()
    }
}

/// Trained (or freshly initialized) dynamics model. Parameters live in one
/// flat vector addressed through [`Architecture`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rpnn {
    pub config: RpnnConfig,
    pub params: Vec<f64>,
    pub norm: Normalizer,
    arch: Architecture,
}

#[derive(Serialize, Deserialize)]
struct RpnnFile {
    format: String,
    config: RpnnConfig,
    groups: Vec<TensorRecord>,
    normalizer: Normalizer,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

const FORMAT: &str = "dynabo.rpnn.v1";

impl Rpnn {
    pub fn zeros(config: RpnnConfig) -> Result<Self> {
        config.validate()?;
        let arch = Architecture::new(&config);
        let norm = Normalizer::identity(config.state_dim, config.action_dim);
        Ok(Rpnn { params: vec![0.0; arch.n_params], config, norm, arch })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: RpnnConfig, rng: &mut R) -> Result<Self> {
        let mut m = Rpnn::zeros(config)?;
        for g in m.arch.groups.clone() {
            if g.cols == 1 {
                continue;
            }
            let limit = (6.0 / (g.rows + g.cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for v in &mut m.params[g.range()] {
                *v = dist.sample(rng);
            }
        }
        Ok(m)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.arch.groups
    }

    pub fn hidden_dim(&self) -> usize {
        self.arch.hidden
    }

    pub fn zero_hidden(&self) -> Vec<f64> {
        vec![0.0; self.arch.hidden]
    }

    /// Prediction over the next-state delta in state units, and the next
    /// hidden state.
    pub fn forward(&self, hidden: &[f64], s: &[f64], a: &[f64]) -> Result<(GaussianPrediction, Vec<f64>)> {
        let mut scratch = Scratch::default();
        let pred = self.forward_with(&mut scratch, hidden, s, a)?;
        Ok((pred, scratch.trace.h.clone()))
    }

    pub(crate) fn forward_with(
        &self,
        scratch: &mut Scratch,
        hidden: &[f64],
        s: &[f64],
        a: &[f64],
    ) -> Result<GaussianPrediction> {
        check_len("RPNN state", s.len(), self.config.state_dim)?;
        check_len("RPNN action", a.len(), self.config.action_dim)?;
        check_len("RPNN hidden", hidden.len(), self.arch.hidden)?;
        self.norm.input(s, a, &mut scratch.x);
        forward_step(&self.arch, &self.params, &scratch.x, hidden, &mut scratch.trace);
        let tr = &scratch.trace;
        let n = &self.norm;
        let mean = (0..self.config.state_dim).map(|i| n.delta_mean[i] + n.delta_scale[i] * tr.mean[i]).collect();
        let variance =
            (0..self.config.state_dim).map(|i| n.delta_scale[i].powi(2) * tr.logvar(&self.arch, i).exp()).collect();
        Ok(GaussianPrediction { mean, variance })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = RpnnFile {
            format: FORMAT.into(),
            config: self.config.clone(),
            groups: self
                .arch
                .groups
                .iter()
                .map(|g| TensorRecord {
                    name: g.name.clone(),
                    shape: [g.rows, g.cols],
                    values: self.params[g.range()].to_vec(),
                })
                .collect(),
            normalizer: self.norm.clone(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: RpnnFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != FORMAT {
            return Err(Error::schema(format!("unknown model format `{}`", file.format)));
        }
        let mut m = Rpnn::zeros(file.config)?;
        if file.groups.len() != m.arch.groups.len() {
            return Err(Error::schema("tensor count does not match the configured architecture"));
        }
        for (g, t) in m.arch.groups.clone().iter().zip(file.groups) {
            if t.name != g.name || t.shape != [g.rows, g.cols] || t.values.len() != g.len() {
                return Err(Error::schema(format!("tensor `{}` does not match `{}`", t.name, g.name)));
            }
            m.params[g.range()].copy_from_slice(&t.values);
        }
        m.norm = file.normalizer;
        Ok(m)
    }
}

#[derive(Debug, Default)]
pub(crate) struct Scratch {
    pub x: Vec<f64>,
    pub trace: StepTrace,
}
