//! Offline replay of a historical GP dataset: each step samples a target
//! pressure, restricts to the historical rows near it, lets a method pick one
//! ECH setting and reveals that row's outcome.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bo::{self, Acquisition, Context};
use crate::ech::EchParams;
use crate::error::{Error, Result};
use crate::gp::{BaseKernel, ConstantPrior, GpModel, GpPosterior, GpRow, InputScaler, Kernel, PriorMean, ZeroPrior};
use crate::prior::EchGrid;
use crate::rng;

pub const TAU_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dynabo,
    DynaboTime,
    RpnnOnly,
    VanillaZero,
    VanillaConstant,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Dynabo, Method::DynaboTime, Method::RpnnOnly, Method::VanillaZero, Method::VanillaConstant];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Dynabo => "dynabo",
            Method::DynaboTime => "dynabo_time",
            Method::RpnnOnly => "rpnn_only",
            Method::VanillaZero => "vanilla_zero",
            Method::VanillaConstant => "vanilla_constant",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Isotropic kernel over the four scaled GP inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub base: BaseKernel,
    pub lengthscale: f64,
    #[serde(default = "default_signal_variance")]
    pub signal_variance: f64,
}

fn default_signal_variance() -> f64 {
    4.0
}

impl KernelSpec {
    pub fn new(base: BaseKernel, lengthscale: f64) -> Self {
        KernelSpec { base, lengthscale, signal_variance: default_signal_variance() }
    }

    /// SE at 0.1 and 1.0, Matern 5/2 at 0.3 and linear.
    pub fn suite_defaults() -> Vec<KernelSpec> {
        vec![
            KernelSpec::new(BaseKernel::SquaredExponential, 0.1),
            KernelSpec::new(BaseKernel::SquaredExponential, 1.0),
            KernelSpec::new(BaseKernel::Matern52, 0.3),
            KernelSpec::new(BaseKernel::Linear, 1.0),
        ]
    }

    pub fn kernel(&self, time_lengthscale: Option<f64>) -> Result<Kernel> {
        let k = Kernel::isotropic(self.base, self.signal_variance, self.lengthscale, crate::gp::GP_INPUT_DIM)?;
        match time_lengthscale {
            Some(l) => k.with_time(l),
            None => Ok(k),
        }
    }

    pub fn label(&self) -> String {
        Kernel::isotropic(self.base, self.signal_variance, self.lengthscale, 1).map_or_else(|_| "invalid".into(), |k| k.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub steps: usize,
    pub epsilon: f64,
    pub tau_max: f64,
    pub noise_variance: f64,
    pub time_lengthscale: f64,
    pub acquisition: Acquisition,
    /// Project observed ECH settings onto the prior grid before the update.
    pub project_to_grid: bool,
    pub seed: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            steps: 200,
            epsilon: bo::DEFAULT_EPSILON,
            tau_max: TAU_MAX,
            noise_variance: 0.25,
            time_lengthscale: 2.0,
            acquisition: Acquisition::Ucb { alpha: bo::DEFAULT_ALPHA },
            project_to_grid: true,
            seed: 0,
        }
    }
}

/// Learned prior and the grid it was tabulated on.
#[derive(Debug, Clone)]
pub struct ReplayModels {
    pub prior: Arc<dyn PriorMean>,
    pub grid: Option<EchGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub step: usize,
    pub context: f64,
    pub row: usize,
    pub mu: f64,
    pub sigma: f64,
    pub w: f64,
    pub t_tm: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub n_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub method: Method,
    pub kernel: String,
    pub acquisition: String,
    pub seed: u64,
    pub steps: Vec<ReplayStep>,
}

impl RegretCurve {
    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }

    /// Number of distinct ECH settings chosen.
    pub fn distinct_queries(&self) -> usize {
        self.steps.iter().map(|s| [s.mu.to_bits(), s.sigma.to_bits(), s.w.to_bits()]).collect::<BTreeSet<_>>().len()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub curve: RegretCurve,
    /// Rows fed to the GP, in order; empty for the non-updating method.
    pub observed: Vec<GpRow>,
    pub posterior: Option<GpPosterior>,
}

/// Partial sums of `tau_max - t`.
pub fn cumulative_regret(outcomes: &[f64], tau_max: f64) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    outcomes
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t <= tau_max) {
                return Err(Error::Range(format!("t_TM {t} outside (0, {tau_max}]")));
            }
            acc += tau_max - t;
            Ok(acc)
        })
        .collect()
}

/// GP hyperparameters shared by the replay methods: inputs scaled by the
/// dataset bounds.
pub fn gp_model(rows: &[GpRow], kernel: &KernelSpec, cfg: &ReplayConfig, time: bool) -> Result<GpModel> {
    Ok(GpModel {
        kernel: kernel.kernel(time.then_some(cfg.time_lengthscale))?,
        noise_variance: cfg.noise_variance,
        scaler: InputScaler::from_rows(rows),
    })
}

pub fn run_replay(
    rows: &[GpRow],
    method: Method,
    kernel: &KernelSpec,
    cfg: &ReplayConfig,
    models: &ReplayModels,
) -> Result<ReplayOutcome> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("replay needs historical rows".into()));
    }
    if cfg.steps == 0 || !(cfg.epsilon > 0.0) {
        return Err(Error::Config("replay needs steps >= 1 and epsilon > 0".into()));
    }
    let lo = rows.iter().map(|r| r.beta_n_bar).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.beta_n_bar).fold(f64::NEG_INFINITY, f64::max);
    let latest = rows.iter().map(|r| r.campaign).max().unwrap_or(0);
    let prior: Arc<dyn PriorMean> = match method {
        Method::Dynabo | Method::DynaboTime | Method::RpnnOnly => models.prior.clone(),
        Method::VanillaZero => Arc::new(ZeroPrior),
        Method::VanillaConstant => Arc::new(ConstantPrior::of_rows(rows)),
    };
    let mut posterior = match method {
        Method::RpnnOnly => None,
        _ => Some(GpPosterior::fit(gp_model(rows, kernel, cfg, method == Method::DynaboTime)?, prior.clone(), vec![])?),
    };
    let grid = if cfg.project_to_grid { models.grid.as_ref() } else { None };

    let mut r = rng::stream(cfg.seed, 0);
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut observed = Vec::new();
    let mut cum = 0.0;
    for step in 0..cfg.steps {
        let context = if hi > lo { r.random_range(lo..=hi) } else { lo };
        let cands = bo::candidate_set_for_context(rows, context, cfg.epsilon)?;
        let ctx = Context { beta_n: context, campaign: latest };
        let pick = match &posterior {
            None => {
                let scores: Vec<f64> = cands.candidates.iter().map(|c| prior.mean(context, c)).collect();
                bo::argmax(&scores).ok_or(Error::EmptyCandidates)?
            }
            Some(post) => {
                let acq = match cfg.acquisition {
                    Acquisition::Thompson { seed } => Acquisition::Thompson { seed: rng::derive_seed(seed ^ cfg.seed, step as u64) },
                    a => a,
                };
                // Queries go through the same grid projection as the updates.
                let scored: Vec<EchParams> = match grid {
                    Some(g) => cands.candidates.iter().map(|c| g.project(c)).collect(),
                    None => cands.candidates.clone(),
                };
                bo::propose(post, ctx, &scored, acq)?.candidate_index
            }
        };
        let group = &cands.rows[pick];
        let row_index = group[r.random_range(0..group.len())];
        let row = rows[row_index];
        let t = row.t_tm.min(cfg.tau_max);
        let regret = cfg.tau_max - t;
        cum += regret;
        if let Some(post) = posterior.as_mut() {
            observed.push(bo::observe(post, grid, row.beta_n_bar, row.ech, t, row.campaign)?);
        }
        steps.push(ReplayStep {
            step,
            context,
            row: row_index,
            mu: row.ech.mu,
            sigma: row.ech.sigma,
            w: row.ech.w,
            t_tm: t,
            regret,
            cum_regret: cum,
            n_candidates: cands.candidates.len(),
        });
    }
    Ok(ReplayOutcome {
        curve: RegretCurve {
            method,
            kernel: kernel.label(),
            acquisition: if method == Method::RpnnOnly { "prior_argmax".into() } else { cfg.acquisition.label().into() },
            seed: cfg.seed,
            steps,
        },
        observed,
        posterior,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub method: Method,
    pub kernel: String,
    pub seeds: usize,
    pub median_final_regret: f64,
    pub q25_final_regret: f64,
    pub q75_final_regret: f64,
    pub min_final_regret: f64,
    pub max_final_regret: f64,
    pub median_distinct_queries: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub cells: Vec<SuiteCell>,
    pub curves: Vec<RegretCurve>,
}

impl SuiteResult {
    pub fn cell(&self, method: Method, kernel: &str) -> Option<&SuiteCell> {
        self.cells.iter().find(|c| c.method == method && c.kernel == kernel)
    }
}

/// Linear-interpolated quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Every (kernel, method, seed) replay; cells run in parallel.
pub fn run_baseline_suite(
    rows: &[GpRow],
    kernels: &[KernelSpec],
    methods: &[Method],
    seeds: &[u64],
    base: &ReplayConfig,
    models: &ReplayModels,
) -> Result<SuiteResult> {
    let jobs: Vec<(KernelSpec, Method, u64)> = kernels
        .iter()
        .flat_map(|k| methods.iter().flat_map(move |m| seeds.iter().map(move |s| (*k, *m, *s))))
        .collect();
    let curves: Vec<RegretCurve> = jobs
        .par_iter()
        .map(|(k, m, s)| {
            let cfg = ReplayConfig { seed: *s, ..base.clone() };
            run_replay(rows, *m, k, &cfg, models).map(|o| o.curve)
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for k in kernels {
        for m in methods {
            let label = k.label();
            let group: Vec<&RegretCurve> = curves.iter().filter(|c| c.method == *m && c.kernel == label).collect();
            let finals: Vec<f64> = group.iter().map(|c| c.final_regret()).collect();
            let distinct: Vec<f64> = group.iter().map(|c| c.distinct_queries() as f64).collect();
            cells.push(SuiteCell {
                method: *m,
                kernel: label,
                seeds: group.len(),
                median_final_regret: median(&finals),
                q25_final_regret: quantile(&finals, 0.25),
                q75_final_regret: quantile(&finals, 0.75),
                min_final_regret: quantile(&finals, 0.0),
                max_final_regret: quantile(&finals, 1.0),
                median_distinct_queries: median(&distinct),
            });
        }
    }
    Ok(SuiteResult { cells, curves })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRow {
    pub acquisition: String,
    pub kernel: String,
    pub mean_final_regret: f64,
    /// Population standard deviation over seeds.
    pub std_final_regret: f64,
    pub seeds: usize,
}

/// DynaBO under UCB, Thompson sampling and EI with the same protocol.
pub fn compare_acquisitions(
    rows: &[GpRow],
    kernels: &[KernelSpec],
    seeds: &[u64],
    base: &ReplayConfig,
    models: &ReplayModels,
) -> Result<(Vec<AcquisitionRow>, Vec<RegretCurve>)> {
    let acqs = [
        Acquisition::Ucb { alpha: bo::DEFAULT_ALPHA },
        Acquisition::Thompson { seed: 0 },
        Acquisition::ExpectedImprovement { epsilon: base.epsilon },
    ];
    let jobs: Vec<(Acquisition, KernelSpec, u64)> = acqs
        .iter()
        .flat_map(|a| kernels.iter().flat_map(move |k| seeds.iter().map(move |s| (*a, *k, *s))))
        .collect();
    let curves: Vec<RegretCurve> = jobs
        .par_iter()
        .map(|(a, k, s)| {
            let cfg = ReplayConfig { seed: *s, acquisition: *a, ..base.clone() };
            run_replay(rows, Method::Dynabo, k, &cfg, models).map(|o| o.curve)
        })
        .collect::<Result<_>>()?;
    Ok((aggregate_acquisitions(&curves), curves))
}

/// Mean and population std of final regret per (acquisition, kernel), in
/// first-seen order.
pub fn aggregate_acquisitions(curves: &[RegretCurve]) -> Vec<AcquisitionRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for c in curves {
        let k = (c.acquisition.clone(), c.kernel.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(acquisition, kernel)| {
            let finals: Vec<f64> = curves
                .iter()
                .filter(|c| c.acquisition == acquisition && c.kernel == kernel)
                .map(|c| c.final_regret())
                .collect();
            let n = finals.len() as f64;
            let mean = finals.iter().sum::<f64>() / n;
            let std = (finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            AcquisitionRow { acquisition, kernel, mean_final_regret: mean, std_final_regret: std, seeds: finals.len() }
        })
        .collect()
}

#[derive(Serialize)]
struct CurveRow<'a> {
    method: Method,
    kernel: &'a str,
    acquisition: &'a str,
    seed: u64,
    step: usize,
    context: f64,
    mu: f64,
    sigma: f64,
    w: f64,
    t_tm: f64,
    regret: f64,
    cum_regret: f64,
}

/// Long-format curves: one line per (curve, step).
pub fn write_curves_csv(path: &Path, curves: &[RegretCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in curves {
        for s in &c.steps {
            w.serialize(CurveRow {
                method: c.method,
                kernel: &c.kernel,
                acquisition: &c.acquisition,
                seed: c.seed,
                step: s.step,
                context: s.context,
                mu: s.mu,
                sigma: s.sigma,
                w: s.w,
                t_tm: s.t_tm,
                regret: s.regret,
                cum_regret: s.cum_regret,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
