use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ech_fit::fit_or_off;
use super::flat_top::extract_flat_top;
use super::trajectory::{Trajectory, TrajectorySet, ECH_PROFILE};
use crate::ech::EchParams;
use crate::error::{Error, Result};

/// Pressure floor for the GP dataset.
pub const PRESSURE_FLOOR: f64 = 3.0;

/// Nominal center and width reported for shots with no ECH.
pub const ECH_OFF: EchParams = EchParams { mu: 0.5, sigma: 0.1, w: 0.0 };

/// One GP training row. Field names are the CSV column names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSummary {
    pub shot_id: u64,
    pub beta_n_bar: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub w_q: f64,
    pub t_tm_seconds: f64,
    pub censored: bool,
    pub campaign: u32,
}

impl ShotSummary {
    pub fn ech(&self) -> EchParams {
        EchParams { mu: self.mu_q, sigma: self.sigma_q, w: self.w_q }
    }

    pub fn with_ech(mut self, ech: EchParams) -> Self {
        self.mu_q = ech.mu;
        self.sigma_q = ech.sigma;
        self.w_q = ech.w;
        self
    }
}

/// Flat-top steps before the first tearing mode; the whole flat-top if the
/// mode precedes it.
pub fn metric_window(traj: &Trajectory, flat_top: Range<usize>) -> Range<usize> {
    match traj.first_tm_index() {
        Some(k) if k > flat_top.start => flat_top.start..flat_top.end.min(k),
        _ => flat_top,
    }
}

/// Seconds from shot start to the first tearing-mode step, or the shot
/// duration if none.
pub fn time_to_tm(traj: &Trajectory) -> (f64, bool) {
    match traj.first_tm_index() {
        Some(k) => (k.max(1) as f64 * traj.step_seconds, false),
        None => (traj.duration_seconds(), true),
    }
}

pub fn summarize_shot(traj: &Trajectory) -> Result<ShotSummary> {
    let window = metric_window(traj, extract_flat_top(traj)?);
    let beta = &traj.beta_n()?[window.clone()];
    let beta_n_bar = beta.iter().sum::<f64>() / beta.len() as f64;
    let ech_series = traj.profile(ECH_PROFILE)?;
    let mean_profile = ech_series.mean_over(window);
    let nominal = traj.meta.as_ref().map_or(ECH_OFF, |m| m.commanded_ech);
    let ech = fit_or_off(&mean_profile, &ech_series.grid, nominal)?;
    let (t_tm_seconds, censored) = time_to_tm(traj);
    Ok(ShotSummary {
        shot_id: traj.shot_id,
        beta_n_bar,
        mu_q: ech.mu,
        sigma_q: ech.sigma,
        w_q: ech.w,
        t_tm_seconds,
        censored,
        campaign: traj.campaign,
    })
}

/// One row per shot whose flat-top mean pressure exceeds `pressure_floor`.
/// Shots without a flat-top are skipped with a warning.
pub fn build_gp_dataset(corpus: &TrajectorySet, pressure_floor: f64) -> Result<Vec<ShotSummary>> {
    let rows: Vec<Option<ShotSummary>> = corpus
        .shots
        .par_iter()
        .map(|t| match summarize_shot(t) {
            Ok(s) => Ok(Some(s)),
            Err(Error::NoFlatTop { .. }) => {
                tracing::warn!(shot = t.shot_id, "no flat-top, shot skipped");
                Ok(None)
            }
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let kept: Vec<ShotSummary> = rows.into_iter().flatten().filter(|s| s.beta_n_bar > pressure_floor).collect();
    if kept.is_empty() {
        tracing::warn!("no shot exceeds the pressure floor {pressure_floor}");
        return Err(Error::EmptyDataset(format!("no shot has flat-top mean pressure above {pressure_floor}")));
    }
    Ok(kept)
}

pub fn write_gp_csv(path: &Path, rows: &[ShotSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gp_csv(path: &Path) -> Result<Vec<ShotSummary>> {
    if !path.is_file() {
        return Err(Error::DatasetNotFound(path.display().to_string()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ShotSummary>, _>>()?;
    Ok(rows)
}
