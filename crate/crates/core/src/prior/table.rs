use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::EchGrid;
use crate::ech::EchParams;
use crate::error::{Error, Result};
use crate::forest::TmProbability;
use crate::gp::PriorMean;
use crate::pipeline::ShotSequence;
use crate::plant::config::{ACT_ECH_MU, ACT_ECH_SIGMA, ACT_ECH_W};
use crate::rng;
use crate::rpnn::{rollout_until, Rpnn};

pub const TRIP_THRESHOLD: f64 = 0.5;
pub const TABLE_FILE: &str = "prior_table.csv";
pub const MANIFEST_FILE: &str = "prior_manifest.json";
pub const AUDIT_FILE: &str = "prior_audit.csv";

/// Historical actuator schedule replayed open loop with a substituted ECH
/// triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub shot_id: u64,
    /// Shot step index of `s0`; trip times are measured from shot start.
    pub start_step: usize,
    pub step_seconds: f64,
    pub s0: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
}

impl Schedule {
    pub fn from_sequence(seq: &ShotSequence) -> Result<Self> {
        let s0 = seq.states.first().ok_or_else(|| Error::EmptyDataset(format!("shot {} is empty", seq.shot_id)))?;
        Ok(Schedule {
            shot_id: seq.shot_id,
            start_step: seq.start_step,
            step_seconds: seq.step_seconds,
            s0: s0.clone(),
            actions: seq.actions.clone(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn with_ech(&self, ech: &EchParams) -> Vec<Vec<f64>> {
        self.actions
            .iter()
            .map(|a| {
                let mut a = a.clone();
                a[ACT_ECH_MU] = ech.mu;
                a[ACT_ECH_SIGMA] = ech.sigma;
                a[ACT_ECH_W] = ech.w;
                a
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutOutcome {
    pub t_seconds: f64,
    /// Mean pressure over the states visited up to the trip.
    pub mean_beta: f64,
    pub tripped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub t_hat: f64,
    pub mean_beta: f64,
    pub rollouts: Vec<RolloutOutcome>,
}

/// Trip time of one rollout: `max(start + k, 1) * dt` for the first step `k`
/// with probability at least `threshold`, else `tau_max`.
pub fn trip_time(first_trip: Option<usize>, start_step: usize, step_seconds: f64, tau_max: f64) -> f64 {
    match first_trip {
        Some(k) => ((start_step + k).max(1) as f64 * step_seconds).min(tau_max),
        None => tau_max,
    }
}

/// Monte-Carlo time to the first predicted tearing mode. Rollout `r` draws
/// from `rng::stream(seed, r)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_time_to_tm(
    model: &Rpnn,
    classifier: &dyn TmProbability,
    schedule: &Schedule,
    node: &EchParams,
    m: usize,
    threshold: f64,
    tau_max: f64,
    seed: u64,
) -> Result<Estimate> {
    if m == 0 {
        return Err(Error::Config("at least one rollout per estimate".into()));
    }
    let actions = schedule.with_ech(node);
    let mut rollouts = Vec::with_capacity(m);
    for r in 0..m {
        let ro = rollout_until(
            model,
            classifier,
            &schedule.s0,
            &actions,
            schedule.horizon(),
            Some(threshold),
            &mut rng::stream(seed, r as u64),
        )?;
        let k = ro.first_trip(threshold);
        let visited = &ro.states[..k.map_or(ro.states.len(), |k| k + 1)];
        let mean_beta = visited.iter().map(|s| s[0]).sum::<f64>() / visited.len() as f64;
        rollouts.push(RolloutOutcome {
            t_seconds: trip_time(k, schedule.start_step, schedule.step_seconds, tau_max),
            mean_beta,
            tripped: k.is_some(),
        });
    }
    let n = m as f64;
    Ok(Estimate {
        t_hat: rollouts.iter().map(|r| r.t_seconds).sum::<f64>() / n,
        mean_beta: rollouts.iter().map(|r| r.mean_beta).sum::<f64>() / n,
        rollouts,
    })
}

/// Pressure bins of width `2 epsilon` centred at `origin + k * width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBins {
    pub origin: f64,
    pub width: f64,
    pub count: usize,
}

impl BetaBins {
    pub fn covering(lo: f64, hi: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("bad pressure bins: [{lo}, {hi}] with epsilon {epsilon}")));
        }
        let width = 2.0 * epsilon;
        Ok(BetaBins { origin: lo, width, count: ((hi - lo) / width).round() as usize + 1 })
    }

    /// Containing bin, or the nearest edge bin outside the range.
    pub fn bin_of(&self, beta: f64) -> usize {
        let k = ((beta - self.origin) / self.width).round();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.count - 1)
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.origin + self.width * k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSource {
    Rollouts,
    NodeMean,
    BinMean,
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorCell {
    pub t_hat: f64,
    pub count: usize,
    pub source: CellSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Rollouts per (node, schedule) estimate.
    pub rollouts: usize,
    pub schedules_per_node: usize,
    pub epsilon: f64,
    pub threshold: f64,
    pub tau_max: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { rollouts: 32, schedules_per_node: 4, epsilon: 0.04, threshold: TRIP_THRESHOLD, tau_max: 10.0 }
    }
}

/// One logged rollout; every table cell is the mean of its records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub node: usize,
    pub bin: usize,
    pub schedule: u64,
    pub slot: usize,
    pub rollout: usize,
    pub t_seconds: f64,
    pub mean_beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub grid: EchGrid,
    pub bins: BetaBins,
    pub config: PriorConfig,
    pub seed: u64,
    /// Node-major: cell `(node, bin)` at `node * bins.count + bin`.
    pub cells: Vec<PriorCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorBuild {
    pub table: PriorTable,
    pub records: Vec<RolloutRecord>,
}

/// Run the rollouts for every grid node and tabulate mean trip times per
/// (node, pressure bin). Node `i` draws its schedules from
/// `rng::stream(seed, i)`.
pub fn build_prior_table(
    model: &Rpnn,
    classifier: &dyn TmProbability,
    schedules: &[Schedule],
    grid: &EchGrid,
    bins: BetaBins,
    cfg: &PriorConfig,
    seed: u64,
) -> Result<PriorBuild> {
    if schedules.is_empty() {
        return Err(Error::EmptyDataset("no historical schedules for prior rollouts".into()));
    }
    if cfg.rollouts == 0 || cfg.schedules_per_node == 0 {
        return Err(Error::Config("prior needs at least one schedule and one rollout per node".into()));
    }
    let per_node: Vec<Vec<RolloutRecord>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let ech = grid.node(node);
            let node_seed = rng::derive_seed(seed, node as u64);
            let mut pick = rng::from_seed(node_seed);
            let mut out = Vec::with_capacity(cfg.schedules_per_node * cfg.rollouts);
            for slot in 0..cfg.schedules_per_node {
                let sched = &schedules[pick.random_range(0..schedules.len())];
                let est = estimate_time_to_tm(
                    model,
                    classifier,
                    sched,
                    &ech,
                    cfg.rollouts,
                    cfg.threshold,
                    cfg.tau_max,
                    rng::derive_seed(node_seed, slot as u64 + 1),
                )?;
                let bin = bins.bin_of(est.mean_beta);
                out.extend(est.rollouts.iter().enumerate().map(|(r, o)| RolloutRecord {
                    node,
                    bin,
                    schedule: sched.shot_id,
                    slot,
                    rollout: r,
                    t_seconds: o.t_seconds,
                    mean_beta: o.mean_beta,
                }));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<RolloutRecord> = per_node.into_iter().flatten().collect();
    let table = tabulate(grid.clone(), bins, cfg.clone(), seed, &records);
    Ok(PriorBuild { table, records })
}

/// Cell means from records, then fallbacks for empty cells: the node's mean
/// over its populated bins, then the bin mean over all nodes, then the global
/// mean.
pub fn tabulate(grid: EchGrid, bins: BetaBins, config: PriorConfig, seed: u64, records: &[RolloutRecord]) -> PriorTable {
    let nb = bins.count;
    let n_cells = grid.len() * nb;
    let mut sum = vec![0.0; n_cells];
    let mut count = vec![0usize; n_cells];
    for r in records {
        sum[r.node * nb + r.bin] += r.t_seconds;
        count[r.node * nb + r.bin] += 1;
    }
    let mean_of = |pairs: &mut dyn Iterator<Item = usize>| {
        let (s, c) = pairs.fold((0.0, 0usize), |(s, c), i| (s + sum[i], c + count[i]));
        (c > 0).then(|| s / c as f64)
    };
    let global = mean_of(&mut (0..n_cells)).unwrap_or(config.tau_max);
    let bin_mean: Vec<Option<f64>> = (0..nb).map(|b| mean_of(&mut (0..grid.len()).map(|n| n * nb + b))).collect();
    let mut cells = Vec::with_capacity(n_cells);
    let mut filled = 0usize;
    for node in 0..grid.len() {
        let node_mean = mean_of(&mut (0..nb).map(|b| node * nb + b));
        for b in 0..nb {
            let i = node * nb + b;
            let cell = if count[i] > 0 {
                PriorCell { t_hat: sum[i] / count[i] as f64, count: count[i], source: CellSource::Rollouts }
            } else {
                filled += 1;
                let (t_hat, source) = match (node_mean, bin_mean[b]) {
                    (Some(v), _) => (v, CellSource::NodeMean),
                    (None, Some(v)) => (v, CellSource::BinMean),
                    (None, None) => (global, CellSource::GlobalMean),
                };
                tracing::trace!(node, bin = b, t_hat, ?source, "filled empty prior cell");
                PriorCell { t_hat, count: 0, source }
            };
            cells.push(cell);
        }
    }
    if filled > 0 {
        tracing::info!(filled, total = n_cells, "prior cells filled by fallback");
    }
    PriorTable { grid, bins, config, seed, cells }
}

impl PriorTable {
    pub fn cell(&self, node: usize, bin: usize) -> &PriorCell {
        &self.cells[node * self.bins.count + bin]
    }

    /// Value at the nearest grid node (normalized axes) and nearest pressure
    /// bin.
    pub fn query(&self, beta_n: f64, ech: &EchParams) -> f64 {
        self.cell(self.grid.nearest(ech), self.bins.bin_of(beta_n)).t_hat
    }

    pub fn save(&self, dir: &Path, records: Option<&[RolloutRecord]>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = PriorManifest {
            schema: "dynabo.prior.v1".into(),
            grid: self.grid.clone(),
            bins: self.bins,
            config: self.config.clone(),
            seed: self.seed,
            n_cells: self.cells.len(),
        };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        let mut w = csv::Writer::from_path(dir.join(TABLE_FILE))?;
        for (i, c) in self.cells.iter().enumerate() {
            let node = i / self.bins.count;
            let bin = i % self.bins.count;
            let [mi, si, wi] = self.grid.coords(node);
            w.serialize(CellRow {
                node,
                mu_index: mi,
                sigma_index: si,
                w_index: wi,
                bin,
                t_hat_seconds: c.t_hat,
                sample_count: c.count,
                source: c.source,
            })?;
        }
        w.flush()?;
        if let Some(records) = records {
            let mut w = csv::Writer::from_path(dir.join(AUDIT_FILE))?;
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        if !mpath.exists() {
            return Err(Error::DatasetNotFound(mpath.display().to_string()));
        }
        let m: PriorManifest = serde_json::from_str(&std::fs::read_to_string(mpath)?)?;
        let mut cells = Vec::with_capacity(m.n_cells);
        for row in csv::Reader::from_path(dir.join(TABLE_FILE))?.deserialize() {
            let row: CellRow = row?;
            if row.node * m.bins.count + row.bin != cells.len() {
                return Err(Error::schema("prior table rows out of order"));
            }
            cells.push(PriorCell { t_hat: row.t_hat_seconds, count: row.sample_count, source: row.source });
        }
        if cells.len() != m.n_cells || m.n_cells != m.grid.len() * m.bins.count {
            return Err(Error::schema(format!("prior table has {} cells, manifest says {}", cells.len(), m.n_cells)));
        }
        Ok(PriorTable { grid: m.grid, bins: m.bins, config: m.config, seed: m.seed, cells })
    }
}

pub fn read_audit(path: &Path) -> Result<Vec<RolloutRecord>> {
    csv::Reader::from_path(path)?.deserialize().map(|r| r.map_err(Error::from)).collect()
}

impl PriorMean for PriorTable {
    fn mean(&self, beta_n: f64, ech: &EchParams) -> f64 {
        self.query(beta_n, ech)
    }
}

#[derive(Serialize, Deserialize)]
struct PriorManifest {
    schema: String,
    grid: EchGrid,
    bins: BetaBins,
    config: PriorConfig,
    seed: u64,
    n_cells: usize,
}

#[derive(Serialize, Deserialize)]
struct CellRow {
    node: usize,
    mu_index: usize,
    sigma_index: usize,
    w_index: usize,
    bin: usize,
    t_hat_seconds: f64,
    sample_count: usize,
    source: CellSource,
}
