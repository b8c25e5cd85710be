use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ech::EchParams;
use crate::error::{Error, Result};

pub const BETA_N: &str = "beta_n";
pub const Q_MIN: &str = "q_min";
pub const DENSITY: &str = "density";
pub const LOOP_VOLTAGE: &str = "loop_voltage";
pub const STORED_ENERGY: &str = "stored_energy";
pub const TE_PROFILE: &str = "te";
pub const ROTATION_PROFILE: &str = "rotation";

pub const FF_POWER: &str = "ff_power";
pub const FF_GAS: &str = "ff_gas";
pub const FF_SHAPE: &str = "ff_shape";
pub const FB_POWER: &str = "fb_power";
pub const ECH_PROFILE: &str = "ech";

/// Per-step samples of one radial profile channel on a fixed grid.
///
/// Rows are reference counted so a profile held constant over a shot is
/// stored once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSeries {
    pub grid: Vec<f64>,
    pub rows: Vec<Arc<[f64]>>,
}

impl ProfileSeries {
    pub fn new(grid: Vec<f64>) -> Self {
        ProfileSeries { grid, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Arc<[f64]>) {
        debug_assert_eq!(row.len(), self.grid.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Pointwise mean of rows in `range`.
    pub fn mean_over(&self, range: std::ops::Range<usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.len()];
        let n = range.len().max(1) as f64;
        for row in &self.rows[range] {
            for (a, v) in acc.iter_mut().zip(row.iter()) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// What was asked of the plant for this shot, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotMeta {
    pub target_beta_n: f64,
    pub commanded_ech: EchParams,
    pub realized_ech: EchParams,
    pub gyrotron_count: usize,
    pub angles_deg: Vec<f64>,
    pub seed: u64,
}

/// One shot: state and actuator channels at a fixed step, plus the latched
/// tearing-mode label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub shot_id: u64,
    pub campaign: u32,
    pub step_seconds: f64,
    pub state_scalars: BTreeMap<String, Vec<f64>>,
    pub state_profiles: BTreeMap<String, ProfileSeries>,
    pub actuator_scalars: BTreeMap<String, Vec<f64>>,
    pub actuator_profiles: BTreeMap<String, ProfileSeries>,
    pub tm_label: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ShotMeta>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.tm_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tm_label.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 * self.step_seconds
    }

    pub fn scalar(&self, name: &str) -> Result<&[f64]> {
        self.state_scalars
            .get(name)
            .or_else(|| self.actuator_scalars.get(name))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::schema(format!("shot {}: missing scalar channel `{name}`", self.shot_id)))
    }

    pub fn profile(&self, name: &str) -> Result<&ProfileSeries> {
        self.state_profiles
            .get(name)
            .or_else(|| self.actuator_profiles.get(name))
            .ok_or_else(|| Error::schema(format!("shot {}: missing profile channel `{name}`", self.shot_id)))
    }

    pub fn beta_n(&self) -> Result<&[f64]> {
        self.scalar(BETA_N)
    }

    /// Index of the first step labeled with a tearing mode.
    pub fn first_tm_index(&self) -> Option<usize> {
        self.tm_label.iter().position(|&l| l != 0)
    }

    /// All channels share the step count; profile rows match their grids.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (name, v) in self.state_scalars.iter().chain(&self.actuator_scalars) {
            if v.len() != n {
                return Err(Error::schema(format!(
                    "shot {}: channel `{name}` has {} steps, labels have {n}",
                    self.shot_id,
                    v.len()
                )));
            }
        }
        for (name, p) in self.state_profiles.iter().chain(&self.actuator_profiles) {
            if p.len() != n {
                return Err(Error::schema(format!(
                    "shot {}: profile `{name}` has {} steps, labels have {n}",
                    self.shot_id,
                    p.len()
                )));
            }
            if let Some(bad) = p.rows.iter().find(|r| r.len() != p.grid.len()) {
                return Err(Error::schema(format!(
                    "shot {}: profile `{name}` row of length {} on a {}-point grid",
                    self.shot_id,
                    bad.len(),
                    p.grid.len()
                )));
            }
        }
        if self.tm_label.windows(2).any(|w| w[0] != 0 && w[1] == 0) {
            return Err(Error::schema(format!("shot {}: tearing-mode label un-latches", self.shot_id)));
        }
        Ok(())
    }
}

/// A corpus of shots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub shots: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }
}
