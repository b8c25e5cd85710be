use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ech_fit::fit_or_off;
use super::flat_top::extract_flat_top;
use super::pca::{fit_pca_or_mean, PcaBasis};
use super::summary::ECH_OFF;
use super::trajectory::*;
use crate::ech::EchParams;
use crate::error::{Error, Result};
use crate::plant::config::ACTION_DIM;

/// Every `PCA_STRIDE`-th flat-top step contributes a row to the PCA fit.
const PCA_STRIDE: usize = 4;

/// Frozen mapping from trajectory channels to model feature vectors: scalar
/// state channels (pressure first) followed by PCA scores of each profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub scalar_channels: Vec<String>,
    pub bases: Vec<PcaBasis>,
    pub var_target: f64,
}

/// Flat-top slice of one shot in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSequence {
    pub shot_id: u64,
    pub campaign: u32,
    pub step_seconds: f64,
    /// Shot step index of `states[0]`.
    pub start_step: usize,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub tm: Vec<u8>,
}

impl ShotSequence {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl FeatureMap {
    pub fn fit(corpus: &TrajectorySet, var_target: f64) -> Result<Self> {
        let first = corpus.shots.first().ok_or_else(|| Error::EmptyDataset("corpus has no shots".into()))?;
        let mut scalar_channels: Vec<String> = vec![BETA_N.to_string()];
        scalar_channels.extend(first.state_scalars.keys().filter(|k| k.as_str() != BETA_N).cloned());
        let windows: Vec<Option<std::ops::Range<usize>>> =
            corpus.shots.par_iter().map(|t| extract_flat_top(t).ok()).collect();

        let mut bases = Vec::new();
        for name in first.state_profiles.keys() {
            let mut rows: Vec<&[f64]> = Vec::new();
            for (t, w) in corpus.shots.iter().zip(&windows) {
                let Some(w) = w else { continue };
                let series = t.profile(name)?;
                rows.extend(w.clone().step_by(PCA_STRIDE).map(|i| &series.rows[i][..]));
            }
            if rows.len() < 2 {
                return Err(Error::EmptyDataset(format!("too few flat-top samples of `{name}` for PCA")));
            }
            bases.push(fit_pca_or_mean(name, &rows, var_target)?);
        }
        Ok(FeatureMap { scalar_channels, bases, var_target })
    }

    pub fn state_dim(&self) -> usize {
        self.scalar_channels.len() + self.bases.iter().map(PcaBasis::k).sum::<usize>()
    }

    pub fn state_names(&self) -> Vec<String> {
        let mut names = self.scalar_channels.clone();
        for b in &self.bases {
            names.extend((0..b.k()).map(|i| format!("{}_pc{}", b.channel, i + 1)));
        }
        names
    }

    pub fn encode_state(&self, traj: &Trajectory, t: usize) -> Result<Vec<f64>> {
        let mut s = Vec::with_capacity(self.state_dim());
        for name in &self.scalar_channels {
            let v = traj.scalar(name)?;
            s.push(*v.get(t).ok_or_else(|| Error::schema(format!("step {t} past end of `{name}`")))?);
        }
        for b in &self.bases {
            s.extend(b.project(&traj.profile(&b.channel)?.rows[t])?);
        }
        Ok(s)
    }

    /// Feature sequence over the flat-top of `traj`.
    pub fn sequence(&self, traj: &Trajectory) -> Result<ShotSequence> {
        let window = extract_flat_top(traj)?;
        let actions = action_series(traj)?;
        let states = window.clone().map(|t| self.encode_state(traj, t)).collect::<Result<Vec<_>>>()?;
        Ok(ShotSequence {
            shot_id: traj.shot_id,
            campaign: traj.campaign,
            step_seconds: traj.step_seconds,
            start_step: window.start,
            states,
            actions: actions[window.clone()].to_vec(),
            tm: traj.tm_label[window].to_vec(),
        })
    }

    /// Sequences for every shot with a flat-top; the rest are skipped.
    pub fn sequences(&self, corpus: &TrajectorySet) -> Result<Vec<ShotSequence>> {
        let seqs: Vec<Option<ShotSequence>> = corpus
            .shots
            .par_iter()
            .map(|t| match self.sequence(t) {
                Ok(s) => Ok(Some(s)),
                Err(Error::NoFlatTop { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        Ok(seqs.into_iter().flatten().collect())
    }
}

/// Per-step action vectors `[ff_power, ff_gas, ff_shape, fb_power, mu, sigma, w]`,
/// with the ECH triple fitted once per distinct profile row.
pub fn action_series(traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let ff = [traj.scalar(FF_POWER)?, traj.scalar(FF_GAS)?, traj.scalar(FF_SHAPE)?, traj.scalar(FB_POWER)?];
    let ech = traj.profile(ECH_PROFILE)?;
    let nominal = traj.meta.as_ref().map_or(ECH_OFF, |m| m.commanded_ech);
    let mut last: Option<(Arc<[f64]>, EchParams)> = None;
    let mut out = Vec::with_capacity(traj.len());
    for t in 0..traj.len() {
        let row = &ech.rows[t];
        let params = match &last {
            Some((prev, p)) if Arc::ptr_eq(prev, row) || prev[..] == row[..] => *p,
            _ => {
                let p = fit_or_off(row, &ech.grid, nominal)?;
                last = Some((row.clone(), p));
                p
            }
        };
        let mut a = Vec::with_capacity(ACTION_DIM);
        a.extend(ff.iter().map(|c| c[t]));
        a.extend(params.as_array());
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{generate_corpus, PlantConfig};

    #[test]
    fn features_follow_the_frozen_map() {
        let cfg = PlantConfig { horizon_steps: 60, rampdown_steps: 5, ..PlantConfig::default() };
        let corpus = generate_corpus(&cfg, 6, 1, 2).unwrap();
        let map = FeatureMap::fit(&corpus, 0.99).unwrap();
        assert_eq!(map.scalar_channels[0], BETA_N);
        assert_eq!(map.state_names().len(), map.state_dim());
        let seqs = map.sequences(&corpus).unwrap();
        assert!(!seqs.is_empty());
        for s in &seqs {
            let traj = corpus.shots.iter().find(|t| t.shot_id == s.shot_id).unwrap();
            assert_eq!(s.states[0][0], traj.beta_n().unwrap()[s.start_step]);
            assert!(s.states.iter().all(|x| x.len() == map.state_dim()));
            assert!(s.actions.iter().all(|a| a.len() == ACTION_DIM));
            let realized = traj.meta.as_ref().unwrap().realized_ech;
            assert!((s.actions[0][6] - realized.w).abs() < 1e-9);
        }
    }
}
