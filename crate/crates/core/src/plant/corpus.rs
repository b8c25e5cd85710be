use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PlantConfig;
use super::dynamics::drift;
use super::shot::{run_shot, ShotRequest};
use crate::ech::{radial_grid, EchParams};
use crate::error::{Error, Result};
use crate::pipeline::trajectory::{ProfileSeries, ShotMeta, Trajectory, TrajectorySet};
use crate::rng;

pub const CORPUS_SCHEMA: &str = "dynabo.corpus.v1";

/// Draw the request for shot `index` from the configured ranges.
pub fn sample_request(cfg: &PlantConfig, index: u64, campaign: u32, seed: u64) -> ShotRequest {
    let r = &cfg.sampling;
    let mut g = rng::stream(seed, index);
    let mut u = |range: [f64; 2]| range[0] + (range[1] - range[0]) * g.random::<f64>();
    let target_beta_n = u(r.target_beta_n);
    let ff = [u(r.ff_power), u(r.ff_gas), u(r.ff_shape)];
    let ech = EchParams { mu: u(r.ech_mu), sigma: u(r.ech_sigma), w: u(r.ech_w) };
    let lo = r.gyrotrons[0].min(r.gyrotrons[1]);
    let hi = r.gyrotrons[0].max(r.gyrotrons[1]);
    let gyrotron_count = g.random_range(lo..=hi);
    ShotRequest {
        shot_id: index,
        campaign,
        target_beta_n,
        feedforward: vec![ff],
        feedback_gain: r.feedback_gain,
        ech,
        gyrotron_count,
        seed: rng::derive_seed(seed ^ 0x5107, index),
    }
}

/// `n_shots` shots split into `campaigns` consecutive blocks, each block run
/// on the drifted configuration for its campaign index.
pub fn generate_corpus(cfg: &PlantConfig, n_shots: usize, campaigns: u32, seed: u64) -> Result<TrajectorySet> {
    if n_shots == 0 {
        return Err(Error::validation("n_shots", "must be at least 1"));
    }
    cfg.validate()?;
    let campaigns = campaigns.max(1);
    let configs: Vec<PlantConfig> = (0..campaigns).map(|k| drift(cfg, k)).collect();
    let shots = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let k = (i as u64 * campaigns as u64 / n_shots as u64) as u32;
            let req = sample_request(cfg, i as u64, k, seed);
            run_shot(&req, &configs[k as usize])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet { shots })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Channel {
    Scalar(f64),
    Profile(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecord {
    shot_id: u64,
    campaign: u32,
    t: usize,
    dt: f64,
    state: BTreeMap<String, Channel>,
    actuators: BTreeMap<String, Channel>,
    tm_label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ShotMeta>,
}

fn push_channels(
    out: &mut BTreeMap<String, Channel>,
    scalars: &BTreeMap<String, Vec<f64>>,
    profiles: &BTreeMap<String, ProfileSeries>,
    t: usize,
) {
    for (name, v) in scalars {
        out.insert(name.clone(), Channel::Scalar(v[t]));
    }
    for (name, p) in profiles {
        // A row identical to the previous step's is omitted and held on read.
        if t > 0 && (Arc::ptr_eq(&p.rows[t], &p.rows[t - 1]) || p.rows[t] == p.rows[t - 1]) {
            continue;
        }
        out.insert(name.clone(), Channel::Profile(p.rows[t].to_vec()));
    }
}

/// One JSON object per time step.
pub fn write_jsonl<W: Write>(set: &TrajectorySet, mut w: W) -> Result<()> {
    for traj in &set.shots {
        for t in 0..traj.len() {
            let mut rec = StepRecord {
                shot_id: traj.shot_id,
                campaign: traj.campaign,
                t,
                dt: traj.step_seconds,
                state: BTreeMap::new(),
                actuators: BTreeMap::new(),
                tm_label: traj.tm_label[t],
                meta: if t == 0 { traj.meta.clone() } else { None },
            };
            push_channels(&mut rec.state, &traj.state_scalars, &traj.state_profiles, t);
            push_channels(&mut rec.actuators, &traj.actuator_scalars, &traj.actuator_profiles, t);
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Default)]
struct Builder {
    traj: Option<Trajectory>,
}

impl Builder {
    fn absorb(
        scalars: &mut BTreeMap<String, Vec<f64>>,
        profiles: &mut BTreeMap<String, ProfileSeries>,
        channels: BTreeMap<String, Channel>,
        shot_id: u64,
        t: usize,
    ) -> Result<()> {
        for (name, c) in channels {
            match c {
                Channel::Scalar(v) => scalars.entry(name).or_default().push(v),
                Channel::Profile(row) => {
                    let p = profiles.entry(name).or_insert_with(|| ProfileSeries::new(radial_grid(row.len())));
                    if row.len() != p.grid.len() {
                        return Err(Error::schema(format!("shot {shot_id} step {t}: profile length changed")));
                    }
                    p.push(row.into());
                }
            }
        }
        for (name, p) in profiles.iter_mut() {
            if p.len() == t {
                let last = p
                    .rows
                    .last()
                    .cloned()
                    .ok_or_else(|| Error::schema(format!("shot {shot_id}: profile `{name}` missing at step 0")))?;
                p.push(last);
            }
        }
        Ok(())
    }
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<TrajectorySet> {
    let mut shots = Vec::new();
    let mut b = Builder::default();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)
            .map_err(|e| Error::schema(format!("corpus line {}: {e}", lineno + 1)))?;
        let starts_new = b.traj.as_ref().is_none_or(|t| t.shot_id != rec.shot_id);
        if starts_new {
            if rec.t != 0 {
                return Err(Error::schema(format!("shot {} does not start at t = 0", rec.shot_id)));
            }
            if let Some(done) = b.traj.take() {
                done.validate()?;
                shots.push(done);
            }
            b.traj = Some(Trajectory {
                shot_id: rec.shot_id,
                campaign: rec.campaign,
                step_seconds: rec.dt,
                state_scalars: BTreeMap::new(),
                state_profiles: BTreeMap::new(),
                actuator_scalars: BTreeMap::new(),
                actuator_profiles: BTreeMap::new(),
                tm_label: Vec::new(),
                meta: rec.meta.clone(),
            });
        }
        let traj = b.traj.as_mut().expect("trajectory started above");
        if rec.t != traj.len() {
            return Err(Error::schema(format!("shot {}: step {} out of order", rec.shot_id, rec.t)));
        }
        Builder::absorb(&mut traj.state_scalars, &mut traj.state_profiles, rec.state, rec.shot_id, rec.t)?;
        Builder::absorb(&mut traj.actuator_scalars, &mut traj.actuator_profiles, rec.actuators, rec.shot_id, rec.t)?;
        traj.tm_label.push(rec.tm_label);
    }
    if let Some(done) = b.traj.take() {
        done.validate()?;
        shots.push(done);
    }
    Ok(TrajectorySet { shots })
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// SHA-256 of the JSONL serialization, hex encoded.
pub fn corpus_hash(set: &TrajectorySet) -> Result<String> {
    let mut h = HashWriter(Sha256::new());
    write_jsonl(set, &mut h)?;
    Ok(h.0.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema: String,
    pub seed: u64,
    pub n_shots: usize,
    pub campaigns: u32,
    pub sha256: String,
    pub config: PlantConfig,
}

/// Write `corpus.jsonl` and `corpus.manifest.json` into `dir`.
pub fn save_corpus(dir: &Path, set: &TrajectorySet, cfg: &PlantConfig, seed: u64, campaigns: u32) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(set, BufWriter::new(File::create(dir.join("corpus.jsonl"))?))?;
    let manifest = CorpusManifest {
        schema: CORPUS_SCHEMA.into(),
        seed,
        n_shots: set.len(),
        campaigns,
        sha256: corpus_hash(set)?,
        config: cfg.clone(),
    };
    std::fs::write(dir.join("corpus.manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_corpus(dir: &Path) -> Result<TrajectorySet> {
    let path = dir.join("corpus.jsonl");
    let file = File::open(&path).map_err(|e| Error::DatasetNotFound(format!("{}: {e}", path.display())))?;
    read_jsonl(BufReader::new(file))
}
