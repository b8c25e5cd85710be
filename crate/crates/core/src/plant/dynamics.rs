use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{PlantConfig, ACTION_DIM, ACT_ECH_MU, ACT_ECH_SIGMA, ACT_ECH_W, ST_BETA_N};
use crate::error::{check_len, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub s: Vec<f64>,
    pub t: usize,
    pub tm_latched: bool,
}

impl PlantState {
    pub fn new(s: Vec<f64>) -> Self {
        PlantState { s, t: 0, tm_latched: false }
    }

    pub fn beta_n(&self) -> f64 {
        self.s[ST_BETA_N]
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logit of the per-step tearing probability.
pub fn hazard_logit(beta_n: f64, mu: f64, sigma: f64, w: f64, cfg: &PlantConfig) -> f64 {
    let h = &cfg.hazard;
    let width = h.c3 * sigma.max(h.sigma_min);
    let d = mu - h.rational_surface;
    let alignment = (-(d * d) / (2.0 * width * width)).exp();
    h.c0 + h.c1 * beta_n - h.c2 * w * alignment
}

/// Per-step probability that a tearing mode starts at `(state, action)`.
pub fn hazard(state: &PlantState, action: &[f64], cfg: &PlantConfig) -> Result<f64> {
    check_len("plant state", state.s.len(), cfg.state_dim)?;
    check_len("plant action", action.len(), ACTION_DIM)?;
    Ok(logistic(hazard_logit(
        state.beta_n(),
        action[ACT_ECH_MU],
        action[ACT_ECH_SIGMA],
        action[ACT_ECH_W],
        cfg,
    )))
}

/// Noise-free part of the transition map.
pub fn transition_mean(s: &[f64], action: &[f64], cfg: &PlantConfig) -> Vec<f64> {
    let d = &cfg.dynamics;
    (0..cfg.state_dim)
        .map(|i| {
            let lin: f64 = d.state_weights[i].iter().zip(s).map(|(w, x)| w * x).sum::<f64>()
                + d.action_weights[i].iter().zip(action).map(|(w, x)| w * x).sum::<f64>();
            let sat = d.saturation[i];
            d.bias[i] + sat * (lin / sat).tanh()
        })
        .collect()
}

/// Advance one step. The returned flag is this step's Bernoulli draw; the
/// latch in the returned state also carries earlier events.
pub fn step<R: Rng + ?Sized>(
    state: &PlantState,
    action: &[f64],
    cfg: &PlantConfig,
    rng: &mut R,
) -> Result<(PlantState, bool)> {
    let p = hazard(state, action, cfg)?;
    let u: f64 = rng.random();
    let tm = u < p;
    let mut next = transition_mean(&state.s, action, cfg);
    for (x, &sd) in next.iter_mut().zip(&cfg.dynamics.process_noise) {
        let z: f64 = rng.sample(StandardNormal);
        *x += sd * z;
    }
    Ok((
        PlantState { s: next, t: state.t + 1, tm_latched: state.tm_latched || tm },
        tm,
    ))
}

/// Campaign `k` configuration: hazard coefficients, rational surface and
/// dynamics bias shifted by `amplitude * k` schedule steps.
pub fn drift(cfg: &PlantConfig, campaign_index: u32) -> PlantConfig {
    if campaign_index == 0 {
        return cfg.clone();
    }
    let m = cfg.drift.amplitude * campaign_index as f64;
    let mut out = cfg.clone();
    out.hazard.c0 += m * cfg.drift.c0_step;
    out.hazard.c1 += m * cfg.drift.c1_step;
    out.hazard.c2 += m * cfg.drift.c2_step;
    out.hazard.rational_surface =
        (cfg.hazard.rational_surface + m * cfg.drift.rational_surface_step).clamp(0.0, 1.0);
    for (b, s) in out.dynamics.bias.iter_mut().zip(&cfg.drift.bias_step) {
        *b += m * s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn state(cfg: &PlantConfig, beta: f64) -> PlantState {
        let mut s = cfg.initial_state.clone();
        s[ST_BETA_N] = beta;
        PlantState::new(s)
    }

    fn action(mu: f64, sigma: f64, w: f64) -> Vec<f64> {
        vec![1.0, 1.0, 0.0, 0.0, mu, sigma, w]
    }

    #[test]
    fn zero_coefficients_give_one_half() {
        let mut cfg = PlantConfig::default();
        cfg.hazard.c0 = 0.0;
        cfg.hazard.c1 = 0.0;
        cfg.hazard.c2 = 0.0;
        let p = hazard(&state(&cfg, 3.3), &action(0.4, 0.05, 1.0), &cfg).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn saturated_offset_is_negligible() {
        let mut cfg = PlantConfig::default();
        cfg.hazard.c0 = -20.0;
        cfg.hazard.c1 = 0.0;
        cfg.hazard.c2 = 0.0;
        let p = hazard(&state(&cfg, 3.3), &action(0.4, 0.05, 1.0), &cfg).unwrap();
        assert!(p < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_schema_error() {
        let cfg = PlantConfig::default();
        let err = hazard(&state(&cfg, 3.0), &[0.0; 3], &cfg).unwrap_err();
        assert_eq!(err.code(), "schema_error");
        let short = PlantState::new(vec![3.0; 2]);
        assert!(hazard(&short, &action(0.4, 0.05, 1.0), &cfg).is_err());
    }

    #[test]
    fn hazard_decreases_with_aligned_amplitude() {
        let cfg = PlantConfig::default();
        let s = state(&cfg, 3.3);
        let rho = cfg.hazard.rational_surface;
        let mut last = 1.0;
        for k in 0..20 {
            let p = hazard(&s, &action(rho, 0.05, k as f64 * 0.1), &cfg).unwrap();
            assert!(p > 0.0 && p < 1.0);
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn zero_weights_and_noise_return_bias() {
        let mut cfg = PlantConfig::default();
        let n = cfg.state_dim;
        cfg.dynamics.state_weights = vec![vec![0.0; n]; n];
        cfg.dynamics.action_weights = vec![vec![0.0; ACTION_DIM]; n];
        cfg.dynamics.process_noise = vec![0.0; n];
        cfg.dynamics.bias = (0..n).map(|i| 0.25 * i as f64 - 0.5).collect();
        let mut r = rng::from_seed(1);
        let (next, _) = step(&state(&cfg, 3.0), &action(0.4, 0.05, 1.0), &cfg, &mut r).unwrap();
        assert_eq!(next.s, cfg.dynamics.bias);
        assert_eq!(next.t, 1);
    }

    #[test]
    fn latch_survives_any_draw() {
        let mut cfg = PlantConfig::default();
        cfg.hazard.c0 = -1000.0;
        let mut s = state(&cfg, 3.0);
        s.tm_latched = true;
        let mut r = rng::from_seed(3);
        for _ in 0..50 {
            let (next, tm) = step(&s, &action(0.4, 0.05, 1.0), &cfg, &mut r).unwrap();
            assert!(!tm);
            assert!(next.tm_latched);
            s = next;
        }
    }

    #[test]
    fn seeded_steps_are_bit_identical() {
        let cfg = PlantConfig::default();
        let run = || {
            let mut r = rng::from_seed(42);
            let mut s = state(&cfg, 3.0);
            let mut out = Vec::new();
            for _ in 0..100 {
                let (n, tm) = step(&s, &action(0.45, 0.06, 0.8), &cfg, &mut r).unwrap();
                out.extend(n.s.iter().map(|x| x.to_bits()));
                out.push(tm as u64);
                s = n;
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn drift_identity_and_determinism() {
        let cfg = PlantConfig::default();
        assert_eq!(drift(&cfg, 0), cfg);
        assert_eq!(drift(&cfg, 3), drift(&cfg, 3));
        assert_ne!(drift(&cfg, 1), cfg);
    }

    #[test]
    fn drift_magnitude_follows_schedule() {
        let cfg = PlantConfig::default();
        let step_norm = {
            let d = &cfg.drift;
            let mut s = d.c0_step.powi(2) + d.c1_step.powi(2) + d.c2_step.powi(2) + d.rational_surface_step.powi(2);
            s += d.bias_step.iter().map(|b| b * b).sum::<f64>();
            s.sqrt()
        };
        let mut last = -1.0;
        for k in 0..=5u32 {
            let c = drift(&cfg, k);
            let mut s = (c.hazard.c0 - cfg.hazard.c0).powi(2)
                + (c.hazard.c1 - cfg.hazard.c1).powi(2)
                + (c.hazard.c2 - cfg.hazard.c2).powi(2)
                + (c.hazard.rational_surface - cfg.hazard.rational_surface).powi(2);
            s += c.dynamics.bias.iter().zip(&cfg.dynamics.bias).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let magnitude = s.sqrt();
            let expected = cfg.drift.amplitude * k as f64 * step_norm;
            assert!((magnitude - expected).abs() < 1e-12, "k={k}: {magnitude} vs {expected}");
            assert!(magnitude > last);
            last = magnitude;
        }
    }
}
