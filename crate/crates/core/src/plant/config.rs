use serde::{Deserialize, Serialize};

use crate::actuation::GyrotronSet;
use crate::error::{Error, Result};

/// Number of actuator channels: three feedforward, one feedback, three ECH.
pub const ACTION_DIM: usize = 7;
pub const ACT_FF_POWER: usize = 0;
pub const ACT_FF_GAS: usize = 1;
pub const ACT_FF_SHAPE: usize = 2;
pub const ACT_FB_POWER: usize = 3;
pub const ACT_ECH_MU: usize = 4;
pub const ACT_ECH_SIGMA: usize = 5;
pub const ACT_ECH_W: usize = 6;

/// Named leading state components. Anything past these is an auxiliary
/// scalar channel.
pub const ST_BETA_N: usize = 0;
pub const ST_Q_MIN: usize = 1;
pub const ST_DENSITY: usize = 2;
pub const ST_LOOP_VOLTAGE: usize = 3;
pub const ST_STORED_ENERGY: usize = 4;
pub const ST_TE_CORE: usize = 5;
pub const ST_TE_EDGE: usize = 6;
pub const ST_ROTATION: usize = 7;
pub const NAMED_STATE_DIM: usize = 8;

/// Logistic tearing hazard coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    /// Offset.
    pub c0: f64,
    /// Pressure weight.
    pub c1: f64,
    /// ECH suppression weight.
    pub c2: f64,
    /// Multiplier on the alignment width `max(sigma_q, sigma_min)`.
    pub c3: f64,
    /// Normalized radius of the q = 2 surface.
    pub rational_surface: f64,
    pub sigma_min: f64,
}

impl Default for HazardParams {
    fn default() -> Self {
        HazardParams { c0: -8.5, c1: 1.2, c2: 4.0, c3: 1.0, rational_surface: 0.45, sigma_min: 0.02 }
    }
}

/// `s' = bias + sat * tanh((Ws s + Wa a) / sat) + noise`, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub state_weights: Vec<Vec<f64>>,
    pub action_weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub saturation: Vec<f64>,
    pub process_noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorNoise {
    /// Relative std of realized ECH amplitude.
    pub ech_amplitude_rel: f64,
    /// Absolute std of realized ECH center.
    pub ech_center_abs: f64,
    /// Relative std of the realized pressure set-point.
    pub beta_target_rel: f64,
    /// Absolute std of per-point profile measurement noise.
    pub profile_measurement: f64,
}

impl Default for ActuatorNoise {
    fn default() -> Self {
        ActuatorNoise {
            ech_amplitude_rel: 0.05,
            ech_center_abs: 0.02,
            beta_target_rel: 0.01,
            profile_measurement: 0.005,
        }
    }
}

/// Per-campaign offsets; campaign `k` applies `amplitude * k` times each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub amplitude: f64,
    pub c0_step: f64,
    pub c1_step: f64,
    pub c2_step: f64,
    pub rational_surface_step: f64,
    pub bias_step: Vec<f64>,
}

/// Ranges the corpus generator samples shot requests from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRanges {
    pub target_beta_n: [f64; 2],
    pub ff_power: [f64; 2],
    pub ff_gas: [f64; 2],
    pub ff_shape: [f64; 2],
    pub feedback_gain: f64,
    pub ech_mu: [f64; 2],
    pub ech_sigma: [f64; 2],
    pub ech_w: [f64; 2],
    pub gyrotrons: [usize; 2],
}

impl Default for RequestRanges {
    fn default() -> Self {
        RequestRanges {
            target_beta_n: [2.9, 3.7],
            ff_power: [0.85, 1.15],
            ff_gas: [0.8, 1.2],
            ff_shape: [-1.0, 1.0],
            feedback_gain: 0.08,
            ech_mu: [0.2, 0.75],
            ech_sigma: [0.03, 0.14],
            ech_w: [0.3, 2.4],
            gyrotrons: [1, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub state_dim: usize,
    pub step_seconds: f64,
    pub horizon_steps: usize,
    pub max_shot_seconds: f64,
    /// Steps recorded after the first tearing mode before the shot ends.
    pub post_tm_tail_steps: usize,
    /// Final steps over which the pressure set-point ramps down.
    pub rampdown_steps: usize,
    pub rampdown_floor: f64,
    /// Initial pressure as a fraction of the set-point.
    pub initial_beta_fraction: f64,
    pub initial_state: Vec<f64>,
    pub initial_jitter: Vec<f64>,
    pub hazard: HazardParams,
    pub dynamics: DynamicsParams,
    pub actuator_noise: ActuatorNoise,
    pub drift: DriftParams,
    pub gyrotrons: GyrotronSet,
    pub profile_points: usize,
    pub ech_points: usize,
    pub sampling: RequestRanges,
}

impl Default for PlantConfig {
    fn default() -> Self {
        let n = NAMED_STATE_DIM;
        let mut ws = vec![vec![0.0; n]; n];
        let mut wa = vec![vec![0.0; ACTION_DIM]; n];
        let mut bias = vec![0.0; n];

        // Pressure integrates the feedback command; feedforward power nudges it.
        ws[ST_BETA_N][ST_BETA_N] = 1.0;
        wa[ST_BETA_N][ACT_FB_POWER] = 1.0;
        wa[ST_BETA_N][ACT_FF_POWER] = 0.004;
        bias[ST_BETA_N] = -0.004;
        // q_min relaxes towards 1.2 over a couple of seconds.
        ws[ST_Q_MIN][ST_Q_MIN] = 0.99;
        bias[ST_Q_MIN] = 0.012;
        // Density follows gas puffing.
        ws[ST_DENSITY][ST_DENSITY] = 0.95;
        wa[ST_DENSITY][ACT_FF_GAS] = 0.25;
        // Loop voltage falls with pressure (bootstrap current).
        ws[ST_LOOP_VOLTAGE][ST_LOOP_VOLTAGE] = 0.9;
        ws[ST_LOOP_VOLTAGE][ST_BETA_N] = -0.01;
        bias[ST_LOOP_VOLTAGE] = 0.05;
        // Stored energy tracks pressure and heating power.
        ws[ST_STORED_ENERGY][ST_STORED_ENERGY] = 0.9;
        ws[ST_STORED_ENERGY][ST_BETA_N] = 0.04;
        wa[ST_STORED_ENERGY][ACT_FF_POWER] = 0.01;
        // Temperature profile shape: core heated by pressure and ECH, edge by shaping.
        ws[ST_TE_CORE][ST_TE_CORE] = 0.9;
        ws[ST_TE_CORE][ST_BETA_N] = 0.08;
        wa[ST_TE_CORE][ACT_ECH_W] = 0.02;
        ws[ST_TE_EDGE][ST_TE_EDGE] = 0.9;
        wa[ST_TE_EDGE][ACT_FF_SHAPE] = 0.02;
        bias[ST_TE_EDGE] = 0.03;
        // Rotation driven by beam power.
        ws[ST_ROTATION][ST_ROTATION] = 0.95;
        wa[ST_ROTATION][ACT_FF_POWER] = 0.03;

        PlantConfig {
            state_dim: n,
            step_seconds: 0.02,
            horizon_steps: 250,
            max_shot_seconds: 10.0,
            post_tm_tail_steps: 250,
            rampdown_steps: 25,
            rampdown_floor: 0.4,
            initial_beta_fraction: 0.3,
            initial_state: vec![1.0, 2.5, 2.0, 0.5, 0.3, 1.0, 0.3, 0.2],
            initial_jitter: vec![0.0, 0.15, 0.2, 0.05, 0.03, 0.1, 0.03, 0.05],
            hazard: HazardParams::default(),
            dynamics: DynamicsParams {
                state_weights: ws,
                action_weights: wa,
                bias,
                saturation: vec![100.0, 10.0, 20.0, 5.0, 10.0, 10.0, 5.0, 5.0],
                process_noise: vec![0.004, 0.002, 0.01, 0.003, 0.003, 0.01, 0.003, 0.004],
            },
            actuator_noise: ActuatorNoise::default(),
            drift: DriftParams {
                amplitude: 1.0,
                c0_step: 0.12,
                c1_step: 0.0,
                c2_step: -0.15,
                rational_surface_step: 0.035,
                bias_step: vec![0.0, 0.0, 0.02, 0.0, 0.0, 0.0, 0.0, 0.0],
            },
            gyrotrons: GyrotronSet::default(),
            profile_points: 33,
            ech_points: 200,
            sampling: RequestRanges::default(),
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim;
        if n < NAMED_STATE_DIM {
            return Err(Error::Config(format!("state_dim must be at least {NAMED_STATE_DIM}, got {n}")));
        }
        if !(self.step_seconds > 0.0) {
            return Err(Error::Config("step_seconds must be positive".into()));
        }
        if self.horizon_steps == 0 {
            return Err(Error::Config("horizon_steps must be positive".into()));
        }
        if self.horizon_steps as f64 * self.step_seconds > self.max_shot_seconds + 1e-12 {
            return Err(Error::Config(format!(
                "horizon {} steps x {} s exceeds max shot length {} s",
                self.horizon_steps, self.step_seconds, self.max_shot_seconds
            )));
        }
        if !(0.0..=1.0).contains(&self.hazard.rational_surface) {
            return Err(Error::Config("rational_surface must lie in [0, 1]".into()));
        }
        if !(self.hazard.sigma_min > 0.0) || !(self.hazard.c3 > 0.0) {
            return Err(Error::Config("hazard sigma_min and c3 must be positive".into()));
        }
        let d = &self.dynamics;
        let rows_ok = d.state_weights.len() == n
            && d.state_weights.iter().all(|r| r.len() == n)
            && d.action_weights.len() == n
            && d.action_weights.iter().all(|r| r.len() == ACTION_DIM);
        if !rows_ok {
            return Err(Error::Config(format!("dynamics weights must be {n}x{n} and {n}x{ACTION_DIM}")));
        }
        for (name, v) in [
            ("bias", &d.bias),
            ("saturation", &d.saturation),
            ("process_noise", &d.process_noise),
            ("initial_state", &self.initial_state),
            ("initial_jitter", &self.initial_jitter),
            ("drift.bias_step", &self.drift.bias_step),
        ] {
            if v.len() != n {
                return Err(Error::Config(format!("{name} must have length {n}, got {}", v.len())));
            }
        }
        if d.saturation.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("saturation scales must be positive".into()));
        }
        if self.profile_points < 2 || self.ech_points < 2 {
            return Err(Error::Config("profile grids need at least two points".into()));
        }
        self.gyrotrons.validate()
    }

    pub fn horizon_seconds(&self) -> f64 {
        self.horizon_steps as f64 * self.step_seconds
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PlantConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
