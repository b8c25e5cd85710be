use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{Rpnn, Scratch};
use crate::error::{Error, Result};
use crate::forest::TmProbability;

/// One sampled trajectory: `states[0]` is the initial state and
/// `tm_probability[t]` is the classifier output at `(states[t], actions[t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub tm_probability: Vec<f64>,
}

impl Rollout {
    /// First step whose probability reaches `threshold`.
    pub fn first_trip(&self, threshold: f64) -> Option<usize> {
        self.tm_probability.iter().position(|&p| p >= threshold)
    }
}

/// Autoregressive sampling: `s_{t+1} = s_t + N(mean, diag variance)`.
pub fn rollout<R: Rng + ?Sized>(
    model: &Rpnn,
    classifier: &dyn TmProbability,
    s0: &[f64],
    actions: &[Vec<f64>],
    horizon: usize,
    rng: &mut R,
) -> Result<Rollout> {
    rollout_until(model, classifier, s0, actions, horizon, None, rng)
}

/// As [`rollout`], but stops right after the first step whose probability
/// reaches `stop_at`. Draws before the stop are identical to the full rollout.
pub fn rollout_until<R: Rng + ?Sized>(
    model: &Rpnn,
    classifier: &dyn TmProbability,
    s0: &[f64],
    actions: &[Vec<f64>],
    horizon: usize,
    stop_at: Option<f64>,
    rng: &mut R,
) -> Result<Rollout> {
    if actions.len() < horizon {
        return Err(Error::schema(format!("action schedule has {} steps, horizon is {horizon}", actions.len())));
    }
    let mut scratch = Scratch::default();
    let mut h = model.zero_hidden();
    let mut s = s0.to_vec();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut probs = Vec::with_capacity(horizon);
    states.push(s.clone());
    for a in &actions[..horizon] {
        let p = classifier.tm_probability(&s, a)?;
        probs.push(p);
        if stop_at.is_some_and(|th| p >= th) {
            break;
        }
        let pred = model.forward_with(&mut scratch, &h, &s, a)?;
        h.clone_from(&scratch.trace.h);
        for ((x, m), v) in s.iter_mut().zip(&pred.mean).zip(&pred.variance) {
            let z: f64 = rng.sample(StandardNormal);
            *x += m + v.sqrt() * z;
        }
        states.push(s.clone());
    }
    Ok(Rollout { states, tm_probability: probs })
}
