//! End-to-end reference run: corpus, GP dataset and feature sequences, the
//! dynamics model and classifier, then the prior table.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forest::{train_forest, ForestModel, Samples};
use crate::gp::GpRow;
use crate::pipeline::{build_gp_dataset, write_gp_csv, FeatureMap, ShotSequence, ShotSummary, TrajectorySet};
use crate::plant::{generate_corpus, save_corpus};
use crate::prior::{build_prior_table, BetaBins, EchGrid, PriorBuild, Schedule};
use crate::rpnn::{train, write_training_log, TrainOutcome};

pub const ACTION_NAMES: [&str; 7] = ["ff_power", "ff_gas", "ff_shape", "fb_power", "ech_mu", "ech_sigma", "ech_w"];

pub const CORPUS_DIR: &str = "corpus";
pub const GP_DATASET: &str = "gp_dataset.csv";
pub const FEATURES: &str = "features.json";
pub const RPNN_MODEL: &str = "rpnn.json";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const FOREST_MODEL: &str = "forest.json";
pub const PRIOR_DIR: &str = "prior";

/// Artifact locations under one output directory.
#[derive(Debug, Clone)]
pub struct Layout(pub PathBuf);

impl Layout {
    pub fn corpus(&self) -> PathBuf {
        self.0.join(CORPUS_DIR)
    }
    pub fn gp_dataset(&self) -> PathBuf {
        self.0.join(GP_DATASET)
    }
    pub fn features(&self) -> PathBuf {
        self.0.join(FEATURES)
    }
    pub fn rpnn(&self) -> PathBuf {
        self.0.join(RPNN_MODEL)
    }
    pub fn training_log(&self) -> PathBuf {
        self.0.join(TRAINING_LOG)
    }
    pub fn forest(&self) -> PathBuf {
        self.0.join(FOREST_MODEL)
    }
    pub fn prior(&self) -> PathBuf {
        self.0.join(PRIOR_DIR)
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: FeatureMap,
    pub sequences: Vec<ShotSequence>,
    pub dataset: Vec<ShotSummary>,
}

impl Prepared {
    pub fn gp_rows(&self) -> Vec<GpRow> {
        self.dataset.iter().map(GpRow::from).collect()
    }

    /// Sequences of the shots that made it into the GP dataset.
    pub fn dataset_sequences(&self) -> Vec<&ShotSequence> {
        let ids: std::collections::BTreeSet<u64> = self.dataset.iter().map(|r| r.shot_id).collect();
        self.sequences.iter().filter(|s| ids.contains(&s.shot_id)).collect()
    }
}

pub fn prepare(corpus: &TrajectorySet, cfg: &RunConfig) -> Result<Prepared> {
    let features = FeatureMap::fit(corpus, cfg.pipeline.var_target)?;
    let sequences = features.sequences(corpus)?;
    let dataset = build_gp_dataset(corpus, cfg.pipeline.pressure_floor)?;
    Ok(Prepared { features, sequences, dataset })
}

/// At most `n` items spread evenly over `items`, keeping order.
pub fn spread<T: Clone>(items: &[T], n: Option<usize>) -> Vec<T> {
    match n {
        Some(n) if n < items.len() => (0..n).map(|i| items[i * items.len() / n].clone()).collect(),
        _ => items.to_vec(),
    }
}

pub fn train_dynamics(seqs: &[ShotSequence], state_dim: usize, cfg: &RunConfig) -> Result<TrainOutcome> {
    let subset = spread(seqs, cfg.rpnn.max_train_shots);
    train(&subset, &cfg.rpnn.network(state_dim), cfg.rpnn.seed)
}

pub fn forest_features(features: &FeatureMap) -> Vec<String> {
    let mut names = features.state_names();
    names.extend(ACTION_NAMES.iter().map(|s| s.to_string()));
    names
}

pub fn train_classifier(seqs: &[ShotSequence], features: &FeatureMap, cfg: &RunConfig) -> Result<ForestModel> {
    let all = Samples::from_sequences(seqs);
    let stride = cfg.forest.stride.max(1);
    let data = Samples {
        x: all.x.into_iter().step_by(stride).collect(),
        y: all.y.into_iter().step_by(stride).collect(),
    };
    train_forest(&data, forest_features(features), &cfg.forest.config, cfg.forest.seed)
}

/// Grid over the dataset's ECH support and pressure bins covering its
/// context range.
pub fn prior_geometry(dataset: &[ShotSummary], cfg: &RunConfig) -> Result<(EchGrid, BetaBins)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("GP dataset is empty".into()));
    }
    let params: Vec<_> = dataset.iter().map(ShotSummary::ech).collect();
    let grid = EchGrid::from_params(&params, cfg.prior.resolution)?;
    let lo = dataset.iter().map(|r| r.beta_n_bar).fold(f64::INFINITY, f64::min);
    let hi = dataset.iter().map(|r| r.beta_n_bar).fold(f64::NEG_INFINITY, f64::max);
    Ok((grid, BetaBins::covering(lo, hi, cfg.prior.config.epsilon)?))
}

pub fn build_prior(
    prepared: &Prepared,
    rpnn: &crate::rpnn::Rpnn,
    forest: &ForestModel,
    cfg: &RunConfig,
) -> Result<PriorBuild> {
    let schedules =
        prepared.dataset_sequences().into_iter().map(Schedule::from_sequence).collect::<Result<Vec<_>>>()?;
    let (grid, bins) = prior_geometry(&prepared.dataset, cfg)?;
    build_prior_table(rpnn, forest, &schedules, &grid, bins, &cfg.prior.config, cfg.prior.seed)
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub prepared: Prepared,
    pub dynamics: TrainOutcome,
    pub forest: ForestModel,
    pub prior: PriorBuild,
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    tracing::info!(stage, seconds = t0.elapsed().as_secs_f64(), ok = out.is_ok(), "stage finished");
    out
}

/// Run every stage from a fresh corpus; writes artifacts when `out` is set.
pub fn run_reference(cfg: &RunConfig, out: Option<&Path>) -> Result<Reference> {
    cfg.validate()?;
    let corpus = timed("corpus", || generate_corpus(&cfg.plant, cfg.corpus.n_shots, cfg.corpus.campaigns, cfg.corpus.seed))?;
    let prepared = timed("pipeline", || prepare(&corpus, cfg))?;
    let dynamics = timed("rpnn", || train_dynamics(&prepared.sequences, prepared.features.state_dim(), cfg))?;
    let forest = timed("forest", || train_classifier(&prepared.sequences, &prepared.features, cfg))?;
    let prior = timed("prior", || build_prior(&prepared, &dynamics.model, &forest, cfg))?;
    let reference = Reference { prepared, dynamics, forest, prior };
    if let Some(dir) = out {
        let layout = Layout(dir.to_path_buf());
        std::fs::create_dir_all(dir)?;
        save_corpus(&layout.corpus(), &corpus, &cfg.plant, cfg.corpus.seed, cfg.corpus.campaigns)?;
        save_reference(&layout, &reference)?;
    }
    Ok(reference)
}

pub fn save_reference(layout: &Layout, r: &Reference) -> Result<()> {
    std::fs::create_dir_all(&layout.0)?;
    write_gp_csv(&layout.gp_dataset(), &r.prepared.dataset)?;
    std::fs::write(layout.features(), serde_json::to_vec_pretty(&r.prepared.features)?)?;
    r.dynamics.model.save(&layout.rpnn())?;
    write_training_log(&layout.training_log(), &r.dynamics.log)?;
    r.forest.save(&layout.forest())?;
    r.prior.table.save(&layout.prior(), Some(&r.prior.records))?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_keeps_order_and_count() {
        let v: Vec<u32> = (0..10).collect();
        assert_eq!(spread(&v, Some(4)), vec![0, 2, 5, 7]);
        assert_eq!(spread(&v, Some(20)), v);
        assert_eq!(spread(&v, None), v);
    }
}
