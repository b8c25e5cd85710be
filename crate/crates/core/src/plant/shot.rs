use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::*;
use super::dynamics::{step, PlantState};
use crate::actuation::{angles_to_profile, profile_to_angles, GyrotronSet};
use crate::ech::{radial_grid, EchParams};
use crate::error::{Error, Result};
use crate::pipeline::ech_fit::fit_or_off;
use crate::pipeline::trajectory::{self as ch, ProfileSeries, ShotMeta, Trajectory};
use crate::rng;

/// Everything the operator sets for one shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRequest {
    #[serde(default)]
    pub shot_id: u64,
    #[serde(default)]
    pub campaign: u32,
    pub target_beta_n: f64,
    /// Per-step `[power, gas, shape]`; the last entry is held past its end.
    pub feedforward: Vec<[f64; 3]>,
    pub feedback_gain: f64,
    pub ech: EchParams,
    pub gyrotron_count: usize,
    pub seed: u64,
}

impl ShotRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_beta_n > 0.0) || !self.target_beta_n.is_finite() {
            return Err(Error::validation("target_beta_n", "must be positive"));
        }
        if !self.feedback_gain.is_finite() || self.feedback_gain < 0.0 {
            return Err(Error::validation("feedback_gain", "must be nonnegative"));
        }
        if self.feedforward.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("feedforward", "must be finite"));
        }
        self.ech.validate()
    }

    fn feedforward_at(&self, t: usize) -> [f64; 3] {
        match self.feedforward.len() {
            0 => [1.0, 1.0, 0.0],
            n => self.feedforward[t.min(n - 1)],
        }
    }
}

/// ECH profile actually delivered after aiming error and power jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedEch {
    pub profile: Vec<f64>,
    pub params: EchParams,
    pub commanded_angles: Vec<f64>,
}

/// Solve angles for the commanded profile, perturb the aim by a common
/// center offset and the power by a relative factor, then re-fit.
pub fn realize_ech<R: Rng + ?Sized>(
    ech: &EchParams,
    count: usize,
    cfg: &PlantConfig,
    rng: &mut R,
) -> Result<RealizedEch> {
    let set = GyrotronSet { count, grid_points: cfg.ech_points, ..cfg.gyrotrons.clone() };
    let grid = radial_grid(cfg.ech_points);
    let shift: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.actuator_noise.ech_center_abs;
    let gain = (1.0 + rng.sample::<f64, _>(StandardNormal) * cfg.actuator_noise.ech_amplitude_rel).max(0.0);
    if count == 0 || ech.w <= 0.0 {
        return Ok(RealizedEch {
            profile: vec![0.0; grid.len()],
            params: EchParams { w: 0.0, ..*ech },
            commanded_angles: Vec::new(),
        });
    }
    let solution = profile_to_angles(ech, &set)?;
    let aimed: Vec<f64> = solution
        .angles_deg
        .iter()
        .map(|a| a + shift / set.calibration.radius_per_degree)
        .collect();
    let mut profile = angles_to_profile(&aimed, &set).profile;
    profile.iter_mut().for_each(|p| *p *= gain);
    let params = fit_or_off(&profile, &grid, *ech)?;
    Ok(RealizedEch { profile, params, commanded_angles: solution.angles_deg })
}

fn te_profile(core: f64, edge: f64, rho: f64) -> f64 {
    let u = 1.0 - rho * rho;
    edge * (1.0 - rho.powi(4)) + (core - edge).max(0.0) * u * u
}

/// Execute one shot on `cfg` (already drifted for the request's campaign).
pub fn run_shot(req: &ShotRequest, cfg: &PlantConfig) -> Result<Trajectory> {
    req.validate()?;
    cfg.validate()?;
    let mut ech_rng = rng::stream(req.seed, 0);
    let mut init_rng = rng::stream(req.seed, 1);
    let mut dyn_rng = rng::stream(req.seed, 2);
    let mut meas_rng = rng::stream(req.seed, 3);

    let realized = realize_ech(&req.ech, req.gyrotron_count, cfg, &mut ech_rng)?;
    let target_noise: f64 = ech_rng.sample(StandardNormal);
    let target = req.target_beta_n * (1.0 + cfg.actuator_noise.beta_target_rel * target_noise);

    let mut s = cfg.initial_state.clone();
    for (x, &j) in s.iter_mut().zip(&cfg.initial_jitter) {
        let z: f64 = init_rng.sample(StandardNormal);
        *x += j * z;
    }
    s[ST_BETA_N] = cfg.initial_beta_fraction * target;
    let mut state = PlantState::new(s);

    let horizon = cfg.horizon_steps;
    let ramp_start = horizon.saturating_sub(cfg.rampdown_steps);
    let scalar_names = [ch::BETA_N, ch::Q_MIN, ch::DENSITY, ch::LOOP_VOLTAGE, ch::STORED_ENERGY];
    let aux_names: Vec<String> = (NAMED_STATE_DIM..cfg.state_dim).map(|i| format!("aux_{i}")).collect();
    let mut scalars: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); scalar_names.len() + aux_names.len()];
    let mut actions: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); 4];
    let rho = radial_grid(cfg.profile_points);
    let mut te = ProfileSeries::new(rho.clone());
    let mut rot = ProfileSeries::new(rho.clone());
    let mut ech = ProfileSeries::new(radial_grid(cfg.ech_points));
    let ech_row: Arc<[f64]> = realized.profile.clone().into();
    let mut labels = Vec::with_capacity(horizon);
    let mut tm_step: Option<usize> = None;
    let meas = cfg.actuator_noise.profile_measurement;

    for t in 0..horizon {
        let ramp = if t >= ramp_start && cfg.rampdown_steps > 0 {
            let frac = (t + 1 - ramp_start) as f64 / cfg.rampdown_steps as f64;
            1.0 - (1.0 - cfg.rampdown_floor) * frac
        } else {
            1.0
        };
        let ff = req.feedforward_at(t);
        let fb = req.feedback_gain * (target * ramp - state.beta_n());
        let p = realized.params;
        let action = [ff[0], ff[1], ff[2], fb, p.mu, p.sigma, p.w];

        for (i, series) in scalars.iter_mut().enumerate() {
            let idx = if i < scalar_names.len() { i } else { NAMED_STATE_DIM + i - scalar_names.len() };
            series.push(state.s[idx]);
        }
        for (series, v) in actions.iter_mut().zip([ff[0], ff[1], ff[2], fb]) {
            series.push(v);
        }
        let (core, edge, rotation) = (state.s[ST_TE_CORE], state.s[ST_TE_EDGE], state.s[ST_ROTATION]);
        te.push(
            rho.iter()
                .map(|&r| te_profile(core, edge, r) + meas * meas_rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        rot.push(
            rho.iter()
                .map(|&r| rotation * (1.0 - r * r) + meas * meas_rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        ech.push(ech_row.clone());
        // Labels describe the recorded state, so a mode born in transition
        // t first shows at step t + 1.
        labels.push(state.tm_latched as u8);

        let (next, _) = step(&state, &action, cfg, &mut dyn_rng)?;
        if next.tm_latched && tm_step.is_none() {
            tm_step = Some(t);
        }
        state = next;
        if let Some(k) = tm_step {
            if t >= k + cfg.post_tm_tail_steps {
                break;
            }
        }
    }

    let mut state_scalars = BTreeMap::new();
    for (name, series) in scalar_names.iter().map(|s| s.to_string()).chain(aux_names).zip(scalars) {
        state_scalars.insert(name, series);
    }
    let mut actuator_scalars = BTreeMap::new();
    for (name, series) in [ch::FF_POWER, ch::FF_GAS, ch::FF_SHAPE, ch::FB_POWER].into_iter().zip(actions) {
        actuator_scalars.insert(name.to_string(), series);
    }
    let traj = Trajectory {
        shot_id: req.shot_id,
        campaign: req.campaign,
        step_seconds: cfg.step_seconds,
        state_scalars,
        state_profiles: BTreeMap::from([(ch::TE_PROFILE.to_string(), te), (ch::ROTATION_PROFILE.to_string(), rot)]),
        actuator_scalars,
        actuator_profiles: BTreeMap::from([(ch::ECH_PROFILE.to_string(), ech)]),
        tm_label: labels,
        meta: Some(ShotMeta {
            target_beta_n: req.target_beta_n,
            commanded_ech: req.ech,
            realized_ech: realized.params,
            gyrotron_count: req.gyrotron_count,
            angles_deg: realized.commanded_angles,
            seed: req.seed,
        }),
    };
    debug_assert!(traj.validate().is_ok());
    Ok(traj)
}
