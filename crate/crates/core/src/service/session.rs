use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::actuation::{profile_to_angles, GyrotronSet};
use crate::bo::{self, Acquisition, Context};
use crate::config::RunConfig;
use crate::ech::EchParams;
use crate::error::{Error, Result};
use crate::gp::{BaseKernel, GpModel, GpPosterior, GpRow, InputScaler, PriorMean, ZeroPrior};
use crate::pipeline::{read_gp_csv, summarize_shot};
use crate::plant::{drift, run_shot, PlantConfig, ShotRequest};
use crate::prior::{EchGrid, PriorTable};
use crate::replay::KernelSpec;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    ManualEntry,
    SimulatedPlant,
}

/// Shared, read-only inputs of every session.
#[derive(Debug, Clone)]
pub struct ServiceContext {
    pub prior: Arc<dyn PriorMean>,
    /// Live candidate grid, already clipped to the achievable region.
    pub grid: EchGrid,
    pub gyrotrons: GyrotronSet,
    pub plant: PlantConfig,
    pub tau_max: f64,
    /// Directory holding `<name>.csv` GP datasets.
    pub data_dir: PathBuf,
}

impl ServiceContext {
    /// Context from a run configuration and an optional prior-table
    /// directory. Without a table the prior is zero and the candidate grid
    /// spans the plant's achievable ranges.
    pub fn load(cfg: &RunConfig, prior_dir: Option<&Path>, data_dir: PathBuf) -> Result<Self> {
        let (prior, grid): (Arc<dyn PriorMean>, EchGrid) = match prior_dir {
            Some(dir) => {
                let table = PriorTable::load(dir)?;
                let grid = table.grid.clone();
                (Arc::new(table), grid)
            }
            None => {
                let r = &cfg.plant.sampling;
                let grid = EchGrid::new(
                    [r.ech_mu[0], r.ech_sigma[0], r.ech_w[0]],
                    [r.ech_mu[1], r.ech_sigma[1], r.ech_w[1]],
                    cfg.prior.resolution,
                )?;
                (Arc::new(ZeroPrior), grid)
            }
        };
        Ok(ServiceContext {
            prior,
            grid,
            gyrotrons: cfg.plant.gyrotrons.clone(),
            plant: cfg.plant.clone(),
            tau_max: cfg.replay.config.tau_max,
            data_dir,
        })
    }

    /// Candidates for live proposals: grid nodes inside the plant's
    /// achievable ECH ranges.
    pub fn candidates(&self) -> Vec<EchParams> {
        let r = &self.plant.sampling;
        let inside = |v: f64, b: [f64; 2]| v >= b[0].min(b[1]) - 1e-12 && v <= b[0].max(b[1]) + 1e-12;
        let clipped: Vec<EchParams> = self
            .grid
            .nodes()
            .into_iter()
            .filter(|p| inside(p.mu, r.ech_mu) && inside(p.sigma, r.ech_sigma) && inside(p.w, r.ech_w))
            .collect();
        if clipped.is_empty() {
            tracing::warn!("no grid node inside the achievable ranges, using the full grid");
            self.grid.nodes()
        } else {
            clipped
        }
    }

    pub fn load_dataset(&self, name: &str) -> Result<Vec<GpRow>> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::DatasetNotFound(name.into()));
        }
        let path = self.data_dir.join(format!("{name}.csv"));
        Ok(read_gp_csv(&path)?.iter().map(GpRow::from).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub session_id: Option<String>,
    /// Dataset name; `None` starts from an empty dataset.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    /// Campaign assigned to new shots; defaults to the latest in the dataset.
    #[serde(default)]
    pub campaign: Option<u32>,
    #[serde(default)]
    pub gyrotron_count: Option<usize>,
    #[serde(default)]
    pub plant_seed: u64,
}

fn default_alpha() -> f64 {
    bo::DEFAULT_ALPHA
}

fn default_kernel() -> KernelSpec {
    KernelSpec::new(BaseKernel::Matern52, 0.3)
}

fn default_noise() -> f64 {
    0.25
}

impl Default for CreateSession {
    fn default() -> Self {
        CreateSession {
            session_id: None,
            dataset: None,
            mode: Mode::ManualEntry,
            alpha: default_alpha(),
            kernel: default_kernel(),
            noise_variance: default_noise(),
            campaign: None,
            gyrotron_count: None,
            plant_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub target_beta_n: f64,
    pub alpha: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub w_q: f64,
    pub mean: f64,
    pub std: f64,
    pub acquisition_value: f64,
    pub candidate_index: usize,
    pub n_candidates: usize,
    pub angles_deg: Vec<f64>,
    pub angle_residual: f64,
    pub unreachable: bool,
}

impl ProposalRecord {
    pub fn ech(&self) -> EchParams {
        EchParams { mu: self.mu_q, sigma: self.sigma_q, w: self.w_q }
    }
}

/// Measured shot as entered by the operator. Every field is optional so
/// that simulated-plant sessions can send only `version`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotInput {
    pub beta_n: Option<f64>,
    pub mu_q: Option<f64>,
    pub sigma_q: Option<f64>,
    pub w_q: Option<f64>,
    pub t_tm_s: Option<f64>,
    pub censored: Option<bool>,
    pub version: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub beta_n: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
    pub w_q: f64,
    pub t_tm_s: f64,
    pub censored: bool,
}

impl Measurement {
    pub fn ech(&self) -> EchParams {
        EchParams { mu: self.mu_q, sigma: self.sigma_q, w: self.w_q }
    }

    pub fn validate(&self, tau_max: f64) -> Result<()> {
        if !(self.beta_n > 0.0) || !self.beta_n.is_finite() {
            return Err(Error::validation("beta_n", "must be a positive number"));
        }
        self.ech().validate()?;
        if !(self.t_tm_s > 0.0) || !(self.t_tm_s <= tau_max) {
            return Err(Error::validation("t_tm_s", format!("must lie in (0, {tau_max}]")));
        }
        Ok(())
    }
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::validation(field, "required"))
}

impl ShotInput {
    fn measurement(&self) -> Result<Measurement> {
        Ok(Measurement {
            beta_n: required(self.beta_n, "beta_n")?,
            mu_q: required(self.mu_q, "mu_q")?,
            sigma_q: required(self.sigma_q, "sigma_q")?,
            w_q: required(self.w_q, "w_q")?,
            t_tm_s: required(self.t_tm_s, "t_tm_s")?,
            censored: self.censored.unwrap_or(false),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub index: usize,
    pub proposal: Option<ProposalRecord>,
    pub measured: Measurement,
    /// Measured ECH parameters projected onto the grid, as stored in the GP.
    pub gp_ech: EchParams,
    pub campaign: u32,
    pub regret: f64,
    pub cum_regret: f64,
    pub recorded_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub version: u64,
    pub mode: Mode,
    pub dataset: Option<String>,
    pub n: usize,
    pub n_initial: usize,
    pub shots: usize,
    pub campaign: u32,
    pub alpha: f64,
    pub kernel: String,
    pub tau_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalResponse {
    pub session_id: String,
    pub version: u64,
    #[serde(flatten)]
    pub proposal: ProposalRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResponse {
    pub session_id: String,
    pub version: u64,
    pub n: usize,
    pub shot: ShotRecord,
    pub before: PointStats,
    pub after: PointStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub session_id: String,
    pub version: u64,
    pub tau_max: f64,
    pub shots: Vec<ShotRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Mu,
    Sigma,
    W,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::Mu => 0,
            Axis::Sigma => 1,
            Axis::W => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "mu" | "mu_q" => Ok(Axis::Mu),
            "sigma" | "sigma_q" => Ok(Axis::Sigma),
            "w" | "w_q" => Ok(Axis::W),
            other => Err(Error::validation("axes", format!("unknown axis `{other}`, expected mu, sigma or w"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub session_id: String,
    pub version: u64,
    pub beta_n: f64,
    pub axes: [Axis; 2],
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fixed_axis: Axis,
    pub fixed_value: f64,
    /// `mean[i][j]` at `(x[i], y[j])`.
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

/// Live session state. The posterior is always the initial fit extended by
/// the logged measurements in order.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub request: CreateSession,
    pub version: u64,
    pub campaign: u32,
    pub initial_rows: Vec<GpRow>,
    pub posterior: GpPosterior,
    pub shots: Vec<ShotRecord>,
    pub proposals: Vec<ProposalRecord>,
    pub gyrotrons: GyrotronSet,
}

/// GP hyperparameters for a live session. Inputs are scaled by the grid
/// bounds and the union of the dataset and plant pressure ranges, so the
/// scaling does not move as shots arrive.
pub fn session_model(ctx: &ServiceContext, rows: &[GpRow], req: &CreateSession) -> Result<GpModel> {
    let mut lo = ctx.plant.sampling.target_beta_n[0];
    let mut hi = ctx.plant.sampling.target_beta_n[1];
    for r in rows {
        lo = lo.min(r.beta_n_bar);
        hi = hi.max(r.beta_n_bar);
    }
    let g = &ctx.grid;
    let scaler = InputScaler { lo: [lo, g.lo[0], g.lo[1], g.lo[2]], hi: [hi, g.hi[0], g.hi[1], g.hi[2]] };
    Ok(GpModel { kernel: req.kernel.kernel(None)?, noise_variance: req.noise_variance, scaler })
}

/// UCB over the live candidates plus the gyrotron angles for the winner.
pub fn live_proposal(
    posterior: &GpPosterior,
    candidates: &[EchParams],
    gyrotrons: &GyrotronSet,
    target_beta_n: f64,
    alpha: f64,
    campaign: u32,
) -> Result<ProposalRecord> {
    if !target_beta_n.is_finite() || target_beta_n <= 0.0 {
        return Err(Error::validation("target_beta_n", "must be a positive number"));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::validation("alpha", "must be finite and nonnegative"));
    }
    let ctx = Context { beta_n: target_beta_n, campaign };
    let p = bo::propose(posterior, ctx, candidates, Acquisition::Ucb { alpha })?;
    let angles = profile_to_angles(&p.ech, gyrotrons)?;
    Ok(ProposalRecord {
        target_beta_n,
        alpha,
        mu_q: p.ech.mu,
        sigma_q: p.ech.sigma,
        w_q: p.ech.w,
        mean: p.mean,
        std: p.std,
        acquisition_value: p.acquisition_value,
        candidate_index: p.candidate_index,
        n_candidates: p.n_candidates,
        angles_deg: angles.angles_deg,
        angle_residual: angles.residual,
        unreachable: angles.unreachable,
    })
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Session {
    pub fn create(ctx: &ServiceContext, id: String, req: CreateSession) -> Result<Self> {
        if !req.alpha.is_finite() || req.alpha < 0.0 {
            return Err(Error::validation("alpha", "must be finite and nonnegative"));
        }
        if !(req.noise_variance >= 0.0) || !req.noise_variance.is_finite() {
            return Err(Error::validation("noise_variance", "must be nonnegative"));
        }
        let initial_rows = match &req.dataset {
            Some(name) => ctx.load_dataset(name)?,
            None => Vec::new(),
        };
        let campaign = req.campaign.unwrap_or_else(|| initial_rows.iter().map(|r| r.campaign).max().unwrap_or(0));
        let gyrotrons = match req.gyrotron_count {
            Some(n) => ctx.gyrotrons.with_count(n),
            None => ctx.gyrotrons.clone(),
        };
        gyrotrons.validate()?;
        let model = session_model(ctx, &initial_rows, &req)?;
        let posterior = GpPosterior::fit(model, ctx.prior.clone(), initial_rows.clone())?;
        Ok(Session {
            id,
            request: req,
            version: 0,
            campaign,
            initial_rows,
            posterior,
            shots: Vec::new(),
            proposals: Vec::new(),
            gyrotrons,
        })
    }

    pub fn summary(&self, ctx: &ServiceContext) -> SessionSummary {
        SessionSummary {
            session_id: self.id.clone(),
            version: self.version,
            mode: self.request.mode,
            dataset: self.request.dataset.clone(),
            n: self.posterior.n(),
            n_initial: self.initial_rows.len(),
            shots: self.shots.len(),
            campaign: self.campaign,
            alpha: self.request.alpha,
            kernel: self.request.kernel.label(),
            tau_max: ctx.tau_max,
        }
    }

    /// Pure in the session state; does not log.
    pub fn propose(&self, ctx: &ServiceContext, target_beta_n: f64, alpha: Option<f64>) -> Result<ProposalRecord> {
        live_proposal(
            &self.posterior,
            &ctx.candidates(),
            &self.gyrotrons,
            target_beta_n,
            alpha.unwrap_or(self.request.alpha),
            self.campaign,
        )
    }

    /// Run the plant on the latest proposal and summarize the result.
    pub fn simulate(&self, ctx: &ServiceContext) -> Result<Measurement> {
        let p = self
            .proposals
            .last()
            .ok_or_else(|| Error::validation("proposal", "simulated-plant sessions need a proposal before a shot"))?;
        let index = self.shots.len() as u64;
        let req = ShotRequest {
            shot_id: index,
            campaign: self.campaign,
            target_beta_n: p.target_beta_n,
            feedforward: vec![[1.0, 1.0, 0.0]],
            feedback_gain: ctx.plant.sampling.feedback_gain,
            ech: p.ech(),
            gyrotron_count: self.gyrotrons.count,
            seed: rng::derive_seed(self.request.plant_seed, index),
        };
        let traj = run_shot(&req, &drift(&ctx.plant, self.campaign))?;
        let s = summarize_shot(&traj)?;
        Ok(Measurement {
            beta_n: s.beta_n_bar,
            mu_q: s.mu_q,
            sigma_q: s.sigma_q,
            w_q: s.w_q,
            t_tm_s: s.t_tm_seconds.min(ctx.tau_max),
            censored: s.censored,
        })
    }

    pub fn record(&mut self, ctx: &ServiceContext, input: &ShotInput) -> Result<RecordResponse> {
        let requested = required(input.version, "version")?;
        if requested != self.version {
            return Err(Error::StaleWrite { current: self.version, requested });
        }
        let m = match self.request.mode {
            Mode::ManualEntry => input.measurement()?,
            Mode::SimulatedPlant => self.simulate(ctx)?,
        };
        m.validate(ctx.tau_max)?;
        let gp_ech = ctx.grid.project(&m.ech());
        let before = self.posterior.predict(m.beta_n, &gp_ech, self.campaign);
        bo::observe(&mut self.posterior, Some(&ctx.grid), m.beta_n, m.ech(), m.t_tm_s, self.campaign)?;
        let after = self.posterior.predict(m.beta_n, &gp_ech, self.campaign);
        let regret = ctx.tau_max - m.t_tm_s;
        let cum_regret = self.shots.last().map_or(0.0, |s| s.cum_regret) + regret;
        let shot = ShotRecord {
            index: self.shots.len(),
            proposal: self.proposals.last().cloned(),
            measured: m,
            gp_ech,
            campaign: self.campaign,
            regret,
            cum_regret,
            recorded_at_ms: now_ms(),
        };
        self.shots.push(shot.clone());
        self.version += 1;
        Ok(RecordResponse {
            session_id: self.id.clone(),
            version: self.version,
            n: self.posterior.n(),
            shot,
            before: PointStats { mean: before.mean, std: before.std() },
            after: PointStats { mean: after.mean, std: after.std() },
        })
    }

    /// Rows in the order the posterior absorbed them.
    pub fn logged_rows(&self) -> Vec<GpRow> {
        self.shots
            .iter()
            .map(|s| GpRow { beta_n_bar: s.measured.beta_n, ech: s.gp_ech, t_tm: s.measured.t_tm_s, campaign: s.campaign })
            .collect()
    }

    /// Posterior rebuilt from scratch out of the initial dataset and the shot
    /// log.
    pub fn rebuild(&self, ctx: &ServiceContext) -> Result<GpPosterior> {
        let mut rows = self.initial_rows.clone();
        rows.extend(self.logged_rows());
        GpPosterior::fit(session_model(ctx, &self.initial_rows, &self.request)?, ctx.prior.clone(), rows)
    }

    pub fn surface(
        &self,
        ctx: &ServiceContext,
        beta_n: f64,
        axes: [Axis; 2],
        fixed: Option<f64>,
    ) -> Result<Surface> {
        if !beta_n.is_finite() {
            return Err(Error::validation("beta_n", "must be a number"));
        }
        if axes[0] == axes[1] {
            return Err(Error::validation("axes", "axes must be distinct"));
        }
        let third = [Axis::Mu, Axis::Sigma, Axis::W].into_iter().find(|a| !axes.contains(a)).unwrap_or(Axis::W);
        let fixed_value = match fixed {
            Some(v) if v.is_finite() => v,
            Some(_) => return Err(Error::validation("fixed", "must be a number")),
            None => match self.proposals.last() {
                Some(p) => p.ech().as_array()[third.index()],
                None => 0.5 * (ctx.grid.lo[third.index()] + ctx.grid.hi[third.index()]),
            },
        };
        let x = ctx.grid.axis(axes[0].index());
        let y = ctx.grid.axis(axes[1].index());
        let mut mean = Vec::with_capacity(x.len());
        let mut std = Vec::with_capacity(x.len());
        for &xv in &x {
            let (mut mr, mut sr) = (Vec::with_capacity(y.len()), Vec::with_capacity(y.len()));
            for &yv in &y {
                let mut a = [0.0; 3];
                a[axes[0].index()] = xv;
                a[axes[1].index()] = yv;
                a[third.index()] = fixed_value;
                let p = self.posterior.predict(beta_n, &EchParams::from_array(a), self.campaign);
                mr.push(p.mean);
                sr.push(p.std());
            }
            mean.push(mr);
            std.push(sr);
        }
        Ok(Surface {
            session_id: self.id.clone(),
            version: self.version,
            beta_n,
            axes,
            x,
            y,
            fixed_axis: third,
            fixed_value,
            mean,
            std,
        })
    }

    pub fn history(&self, ctx: &ServiceContext) -> HistoryResponse {
        HistoryResponse { session_id: self.id.clone(), version: self.version, tau_max: ctx.tau_max, shots: self.shots.clone() }
    }
}

/// All sessions. Each session sits behind its own lock, so writers on one
/// session never block another.
#[derive(Debug)]
pub struct SessionStore {
    pub ctx: ServiceContext,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    counter: Mutex<u64>,
}

impl SessionStore {
    pub fn new(ctx: ServiceContext) -> Self {
        SessionStore { ctx, sessions: RwLock::new(BTreeMap::new()), counter: Mutex::new(0) }
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .map_err(|_| Error::NumericalFailure("session table poisoned".into()))?
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.into()))
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let s = self.get(id)?;
        let mut guard = s.lock().map_err(|_| Error::NumericalFailure(format!("session {id} poisoned")))?;
        f(&mut guard)
    }

    /// Create a session, or return the existing one when the id is taken by
    /// an identical request.
    pub fn create(&self, req: CreateSession) -> Result<SessionSummary> {
        if let Some(id) = &req.session_id {
            if id.is_empty() || id.len() > 128 || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::validation("session_id", "use 1-128 characters from [A-Za-z0-9_-]"));
            }
            if let Ok(existing) = self.get(id) {
                let s = existing.lock().map_err(|_| Error::NumericalFailure("session poisoned".into()))?;
                if s.request != req {
                    return Err(Error::validation("session_id", "exists with a different configuration"));
                }
                return Ok(s.summary(&self.ctx));
            }
        }
        let requested_id = req.session_id.clone();
        let mut session = Session::create(&self.ctx, String::new(), req)?;
        // Generated ids are only drawn for sessions that built.
        let id = match requested_id {
            Some(id) => id,
            None => {
                let mut c = self.counter.lock().map_err(|_| Error::NumericalFailure("counter poisoned".into()))?;
                *c += 1;
                format!("s{:06}", *c)
            }
        };
        session.id = id.clone();
        let summary = session.summary(&self.ctx);
        let mut map = self.sessions.write().map_err(|_| Error::NumericalFailure("session table poisoned".into()))?;
        // A concurrent create with the same id may have landed first.
        if let Some(existing) = map.get(&id) {
            let s = existing.lock().map_err(|_| Error::NumericalFailure("session poisoned".into()))?;
            return Ok(s.summary(&self.ctx));
        }
        map.insert(id, Arc::new(Mutex::new(session)));
        Ok(summary)
    }

    pub fn propose(&self, id: &str, target_beta_n: f64, alpha: Option<f64>) -> Result<ProposalResponse> {
        self.with(id, |s| {
            let proposal = s.propose(&self.ctx, target_beta_n, alpha)?;
            s.proposals.push(proposal.clone());
            Ok(ProposalResponse { session_id: s.id.clone(), version: s.version, proposal })
        })
    }

    pub fn record(&self, id: &str, input: &ShotInput) -> Result<RecordResponse> {
        self.with(id, |s| s.record(&self.ctx, input))
    }

    pub fn surface(&self, id: &str, beta_n: f64, axes: [Axis; 2], fixed: Option<f64>) -> Result<Surface> {
        self.with(id, |s| s.surface(&self.ctx, beta_n, axes, fixed))
    }

    pub fn history(&self, id: &str) -> Result<HistoryResponse> {
        self.with(id, |s| Ok(s.history(&self.ctx)))
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        self.with(id, |s| Ok(s.summary(&self.ctx)))
    }

    /// Snapshot of a session, for audits and tests.
    pub fn snapshot(&self, id: &str) -> Result<Session> {
        self.with(id, |s| Ok(s.clone()))
    }
}
