use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RpnnConfig;
use super::model::{Normalizer, Rpnn};
use super::net::{backward_sequence, forward_step, Architecture, StepTrace};
use crate::error::{Error, Result};
use crate::pipeline::ShotSequence;
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation NLL.
    pub model: Rpnn,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_shots: Vec<u64>,
    pub val_shots: Vec<u64>,
}

/// Normalized one-step transitions of a single sequence.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

pub(crate) fn prepare(norm: &Normalizer, seq: &ShotSequence) -> Prepared {
    let n = seq.len().saturating_sub(1);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for t in 0..n {
        let mut x = Vec::new();
        norm.input(&seq.states[t], &seq.actions[t], &mut x);
        inputs.push(x);
        let d: Vec<f64> = seq.states[t + 1].iter().zip(&seq.states[t]).map(|(a, b)| a - b).collect();
        targets.push(norm.delta(&d));
    }
    Prepared { inputs, targets }
}

/// Summed NLL of one sequence in normalized units; with `grad` also the
/// gradient, scaled by `weight`, accumulated into it.
pub(crate) fn sequence_loss(
    arch: &Architecture,
    p: &[f64],
    seq: &Prepared,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let mut traces: Vec<StepTrace> = Vec::with_capacity(seq.inputs.len());
    let mut h = vec![0.0; arch.hidden];
    let mut loss = 0.0;
    let mut d_out = Vec::new();
    let want_grad = grad.is_some();
    for (x, y) in seq.inputs.iter().zip(&seq.targets) {
        let mut tr = StepTrace::default();
        forward_step(arch, p, x, &h, &mut tr);
        let mut dm = Vec::with_capacity(y.len());
        let mut dl = Vec::with_capacity(y.len());
        for (i, yi) in y.iter().enumerate() {
            let lv = tr.logvar(arch, i);
            let inv = (-lv).exp();
            let r = yi - tr.mean[i];
            loss += 0.5 * (LN_2PI + lv + r * r * inv);
            if want_grad {
                dm.push(-r * inv);
                let raw = tr.raw_logvar[i];
                let active = raw > arch.logvar_min && raw < arch.logvar_max;
                dl.push(if active { 0.5 * (1.0 - r * r * inv) } else { 0.0 });
            }
        }
        h.clone_from(&tr.h);
        if want_grad {
            d_out.push((dm, dl));
            traces.push(tr);
        }
    }
    if let Some((g, weight)) = grad {
        for (dm, dl) in &mut d_out {
            dm.iter_mut().chain(dl.iter_mut()).for_each(|v| *v *= weight);
        }
        backward_sequence(arch, p, &traces, &d_out, g);
    }
    loss
}

/// Mean per-step NLL over `seqs` and its gradient.
pub(crate) fn batch_loss_grad(arch: &Architecture, p: &[f64], seqs: &[&Prepared]) -> (f64, Vec<f64>) {
    let steps: usize = seqs.iter().map(|s| s.inputs.len()).sum();
    let w = 1.0 / steps.max(1) as f64;
    let parts: Vec<(f64, Vec<f64>)> = seqs
        .par_iter()
        .map(|s| {
            let mut g = vec![0.0; arch.n_params];
            let l = sequence_loss(arch, p, s, Some((&mut g, w)));
            (l, g)
        })
        .collect();
    let mut grad = vec![0.0; arch.n_params];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (loss * w, grad)
}

pub(crate) fn batch_loss(arch: &Architecture, p: &[f64], seqs: &[&Prepared]) -> f64 {
    let steps: usize = seqs.iter().map(|s| s.inputs.len()).sum();
    let total: f64 = seqs.par_iter().map(|s| sequence_loss(arch, p, s, None)).collect::<Vec<_>>().iter().sum();
    total / steps.max(1) as f64
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        AdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64, wd: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..p.len() {
            p[i] *= 1.0 - lr * wd;
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g[i];
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            p[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Train on the transitions of `seqs`, holding out whole sequences for
/// validation and early stopping.
pub fn train(seqs: &[ShotSequence], cfg: &RpnnConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let usable: Vec<&ShotSequence> = seqs.iter().filter(|s| s.len() >= 2).collect();
    if usable.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "need at least 2 sequences of length >= 2, got {}",
            usable.len()
        )));
    }
    for s in &usable {
        if s.states.iter().any(|x| x.len() != cfg.state_dim) || s.actions.iter().any(|a| a.len() != cfg.action_dim) {
            return Err(Error::schema(format!("sequence {} does not match the model dimensions", s.shot_id)));
        }
    }

    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut split_rng = rng::stream(seed, 0);
    order.shuffle(&mut split_rng);
    let n_val = ((usable.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, usable.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let mut states: Vec<&[f64]> = Vec::new();
    let mut actions: Vec<&[f64]> = Vec::new();
    let mut deltas: Vec<Vec<f64>> = Vec::new();
    for &i in train_idx {
        let s = usable[i];
        for t in 0..s.len() - 1 {
            states.push(&s.states[t]);
            actions.push(&s.actions[t]);
            deltas.push(s.states[t + 1].iter().zip(&s.states[t]).map(|(a, b)| a - b).collect());
        }
    }
    let norm = Normalizer::fit(&states, &actions, &deltas);

    let mut model = Rpnn::init(cfg.clone(), &mut rng::stream(seed, 1))?;
    model.norm = norm;
    let train_set: Vec<Prepared> = train_idx.iter().map(|&i| prepare(&model.norm, usable[i])).collect();
    let val_set: Vec<Prepared> = val_idx.iter().map(|&i| prepare(&model.norm, usable[i])).collect();
    let val_refs: Vec<&Prepared> = val_set.iter().collect();

    let arch = model.architecture().clone();
    let mut opt = AdamW::new(arch.n_params);
    let mut shuffle_rng = rng::stream(seed, 2);
    let mut batch_order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params.clone());

    for epoch in 0..cfg.max_epochs {
        batch_order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        let mut steps = 0usize;
        for chunk in batch_order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grad) = batch_loss_grad(&arch, &model.params, &batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, detail: format!("training batch loss {loss}") });
            }
            if cfg.grad_clip > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.grad_clip {
                    let s = cfg.grad_clip / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            opt.step(&mut model.params, &grad, cfg.learning_rate, cfg.weight_decay);
            let n: usize = batch.iter().map(|b| b.inputs.len()).sum();
            weighted += loss * n as f64;
            steps += n;
        }
        let train_nll = weighted / steps.max(1) as f64;
        let val_nll = batch_loss(&arch, &model.params, &val_refs);
        if !val_nll.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, detail: format!("validation loss {val_nll}") });
        }
        log.push(EpochLog { epoch, train_nll, val_nll });
        tracing::debug!(epoch, train_nll, val_nll, "epoch");
        if val_nll < best.0 {
            best = (val_nll, epoch, model.params.clone());
        } else if epoch - best.1 > cfg.patience {
            break;
        }
    }
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch: best.1,
        train_shots: train_idx.iter().map(|&i| usable[i].shot_id).collect(),
        val_shots: val_idx.iter().map(|&i| usable[i].shot_id).collect(),
    })
}

/// Mean per-step NLL of `model` on `seqs`, in normalized units.
pub fn evaluate_nll(model: &Rpnn, seqs: &[ShotSequence]) -> f64 {
    let prepared: Vec<Prepared> = seqs.iter().map(|s| prepare(&model.norm, s)).collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    batch_loss(model.architecture(), &model.params, &refs)
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-group outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub group: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub groups: Vec<GroupCheck>,
}

/// Gradient magnitudes below this are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compare the analytic gradient of the mean batch NLL with central finite
/// differences. Checks every coordinate of each group, or `per_group` of them
/// drawn with `seed` when given.
pub fn gradient_check(
    model: &Rpnn,
    batch: &[ShotSequence],
    eps: f64,
    per_group: Option<usize>,
    seed: u64,
) -> GradientCheck {
    let arch = model.architecture();
    let prepared: Vec<Prepared> = batch.iter().map(|s| prepare(&model.norm, s)).collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    let (_, analytic) = batch_loss_grad(arch, &model.params, &refs);
    let mut pick = rng::from_seed(seed);

    let groups: Vec<GroupCheck> = arch
        .groups
        .iter()
        .map(|g| {
            let coords: Vec<usize> = match per_group {
                Some(k) if k < g.len() => (0..k).map(|_| g.offset + pick.random_range(0..g.len())).collect(),
                _ => g.range().collect(),
            };
            let errs: Vec<f64> = coords
                .par_iter()
                .map(|&i| {
                    let numeric = central_difference(arch, &model.params, &refs, i, eps);
                    relative_error(analytic[i], numeric)
                })
                .collect();
            GroupCheck { group: g.name.clone(), checked: coords.len(), max_rel_error: errs.iter().copied().fold(0.0, f64::max) }
        })
        .collect();
    GradientCheck { max_rel_error: groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max), groups }
}

/// Central difference of the mean batch NLL along coordinate `i`.
pub(crate) fn central_difference(arch: &Architecture, p: &[f64], seqs: &[&Prepared], i: usize, eps: f64) -> f64 {
    let mut q = p.to_vec();
    q[i] = p[i] + eps;
    let up = batch_loss(arch, &q, seqs);
    q[i] = p[i] - eps;
    let down = batch_loss(arch, &q, seqs);
    (up - down) / (2.0 * eps)
}

/// Analytic gradient of the mean batch NLL, for external checks.
pub fn analytic_gradient(model: &Rpnn, batch: &[ShotSequence]) -> (f64, Vec<f64>) {
    let prepared: Vec<Prepared> = batch.iter().map(|s| prepare(&model.norm, s)).collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    batch_loss_grad(model.architecture(), &model.params, &refs)
}

/// Central-difference derivative of the mean batch NLL along one coordinate.
pub fn numeric_derivative(model: &Rpnn, batch: &[ShotSequence], index: usize, eps: f64) -> f64 {
    let prepared: Vec<Prepared> = batch.iter().map(|s| prepare(&model.norm, s)).collect();
    let refs: Vec<&Prepared> = prepared.iter().collect();
    central_difference(model.architecture(), &model.params, &refs, index, eps)
}
