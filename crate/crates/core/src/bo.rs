//! Contextual acquisition over a discrete candidate set of ECH profiles, and
//! dataset updates with measured inputs.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ech::EchParams;
use crate::error::{Error, Result};
use crate::gp::cholesky::Cholesky;
use crate::gp::{GpPosterior, GpRow};
use crate::prior::EchGrid;
use crate::rng;

pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_EPSILON: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Acquisition {
    Ucb { alpha: f64 },
    /// Improvement over the best observed `t_TM` within `epsilon` of the
    /// context pressure.
    ExpectedImprovement { epsilon: f64 },
    Thompson { seed: u64 },
}

impl Acquisition {
    pub fn label(&self) -> &'static str {
        match self {
            Acquisition::Ucb { .. } => "ucb",
            Acquisition::ExpectedImprovement { .. } => "ei",
            Acquisition::Thompson { .. } => "thompson",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Acquisition::Ucb { alpha } if !(alpha >= 0.0) || !alpha.is_finite() => {
                Err(Error::validation("alpha", "exploration weight must be finite and nonnegative"))
            }
            Acquisition::ExpectedImprovement { epsilon } if !(epsilon > 0.0) => {
                Err(Error::validation("epsilon", "must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Target pressure and campaign index of a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub beta_n: f64,
    pub campaign: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub ech: EchParams,
    pub candidate_index: usize,
    pub beta_n: f64,
    pub acquisition: String,
    pub acquisition_value: f64,
    pub mean: f64,
    pub std: f64,
    pub n_candidates: usize,
}

/// `(mu - best) Phi(z) + sigma phi(z)`, `z = (mu - best) / sigma`.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let d = mean - best;
    if std <= 0.0 {
        return d.max(0.0);
    }
    let z = d / std;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    (d * cdf + std * pdf).max(0.0)
}

/// Reference value for EI: the best `t_TM` among rows within `epsilon` of the
/// context, else among all rows, else `None`.
pub fn best_observed(rows: &[GpRow], beta_n: f64, epsilon: f64) -> Option<f64> {
    let near = rows.iter().filter(|r| (r.beta_n_bar - beta_n).abs() <= epsilon).map(|r| r.t_tm).reduce(f64::max);
    near.or_else(|| rows.iter().map(|r| r.t_tm).reduce(f64::max))
}

/// First index of the maximum; NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) && !v.is_nan() {
            best = Some(i);
        }
    }
    best
}

/// Score every candidate and return the argmax (lowest index on ties).
pub fn propose(posterior: &GpPosterior, ctx: Context, candidates: &[EchParams], acq: Acquisition) -> Result<Proposal> {
    acq.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let preds: Vec<_> = candidates.par_iter().map(|c| posterior.predict(ctx.beta_n, c, ctx.campaign)).collect();
    let scores: Vec<f64> = match acq {
        Acquisition::Ucb { alpha } => preds.iter().map(|p| p.mean + alpha * p.std()).collect(),
        Acquisition::ExpectedImprovement { epsilon } => {
            let best = best_observed(posterior.rows(), ctx.beta_n, epsilon)
                .unwrap_or_else(|| preds.iter().map(|p| p.mean).fold(f64::NEG_INFINITY, f64::max));
            preds.iter().map(|p| expected_improvement(p.mean, p.std(), best)).collect()
        }
        Acquisition::Thompson { seed } => thompson_sample(posterior, ctx, candidates, seed)?,
    };
    let i = argmax(&scores).ok_or_else(|| Error::NumericalFailure("all acquisition values are NaN".into()))?;
    Ok(Proposal {
        ech: candidates[i],
        candidate_index: i,
        beta_n: ctx.beta_n,
        acquisition: acq.label().into(),
        acquisition_value: scores[i],
        mean: preds[i].mean,
        std: preds[i].std(),
        n_candidates: candidates.len(),
    })
}

/// One draw of the latent function jointly over all candidates.
pub fn thompson_sample(posterior: &GpPosterior, ctx: Context, candidates: &[EchParams], seed: u64) -> Result<Vec<f64>> {
    let model = posterior.model();
    let xs: Vec<Vec<f64>> = candidates.iter().map(|c| model.input(ctx.beta_n, c, ctx.campaign)).collect();
    let m0: Vec<f64> = candidates.iter().map(|c| posterior.prior_mean(ctx.beta_n, c)).collect();
    let (mean, cov) = posterior.predict_joint(&xs, &m0);
    let scale = cov.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0, f64::max).max(1e-12);
    let chol = Cholesky::factor(xs.len(), |i, j| cov[i][j] + if i == j { 1e-9 * scale } else { 0.0 })?;
    let mut r = rng::from_seed(seed);
    let z: Vec<f64> = (0..xs.len()).map(|_| StandardNormal.sample(&mut r)).collect();
    Ok((0..xs.len()).map(|i| mean[i] + (0..=i).map(|j| chol.entry(i, j) * z[j]).sum::<f64>()).collect())
}

/// Append a measured outcome, with its ECH parameters projected onto `grid`
/// when given. Returns the stored row.
pub fn observe(
    posterior: &mut GpPosterior,
    grid: Option<&EchGrid>,
    beta_n: f64,
    ech: EchParams,
    t_tm: f64,
    campaign: u32,
) -> Result<GpRow> {
    ech.validate()?;
    if !beta_n.is_finite() || !t_tm.is_finite() || t_tm <= 0.0 {
        return Err(Error::validation("t_tm", "measured values must be finite with t_tm > 0"));
    }
    let ech = grid.map_or(ech, |g| g.project(&ech));
    let row = GpRow { beta_n_bar: beta_n, ech, t_tm, campaign };
    posterior.add_observation(row)?;
    Ok(row)
}

/// Distinct ECH settings of rows within `epsilon` of a context, with the rows
/// behind each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub candidates: Vec<EchParams>,
    pub rows: Vec<Vec<usize>>,
    pub epsilon: f64,
    pub widenings: u32,
}

/// Replay-mode candidates: rows with `|beta_n_bar - context| <= epsilon`,
/// doubling `epsilon` until at least one row qualifies.
pub fn candidate_set_for_context(rows: &[GpRow], beta_n: f64, epsilon: f64) -> Result<CandidateSet> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("no rows to draw candidates from".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let mut eps = epsilon;
    let mut widenings = 0;
    loop {
        let tol = eps * (1.0 + 1e-12);
        let hits: Vec<usize> = (0..rows.len()).filter(|&i| (rows[i].beta_n_bar - beta_n).abs() <= tol).collect();
        if !hits.is_empty() {
            let mut candidates: Vec<EchParams> = Vec::new();
            let mut groups: Vec<Vec<usize>> = Vec::new();
            for i in hits {
                match candidates.iter().position(|c| *c == rows[i].ech) {
                    Some(k) => groups[k].push(i),
                    None => {
                        candidates.push(rows[i].ech);
                        groups.push(vec![i]);
                    }
                }
            }
            return Ok(CandidateSet { candidates, rows: groups, epsilon: eps, widenings });
        }
        eps *= 2.0;
        widenings += 1;
        tracing::debug!(beta_n, epsilon = eps, "no rows in context window, widening");
    }
}

/// Live-mode candidates: every grid node.
pub fn live_candidates(grid: &EchGrid) -> Vec<EchParams> {
    grid.nodes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{BaseKernel, GpModel, InputScaler, Kernel, ZeroPrior};
    use std::sync::Arc;

    fn row(beta: f64, mu: f64, t: f64) -> GpRow {
        GpRow { beta_n_bar: beta, ech: EchParams { mu, sigma: 0.05, w: 1.0 }, t_tm: t, campaign: 0 }
    }

    #[test]
    fn ucb_arithmetic_example() {
        // mean (1, 2) and std (3, 0.1) with alpha 2 give 7 and 2.2.
        let s = [1.0 + 2.0 * 3.0, 2.0 + 2.0 * 0.1];
        assert_eq!(argmax(&s), Some(0));
        assert_eq!(argmax(&[1.0, 1.0]), Some(0));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn ei_closed_form_edges() {
        assert_eq!(expected_improvement(1.0, 0.0, 2.0), 0.0);
        assert_eq!(expected_improvement(3.0, 0.0, 2.0), 1.0);
        let at_best = expected_improvement(2.0, 1.0, 2.0);
        assert!((at_best - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn context_window_example() {
        let rows = [row(2.95, 0.1, 1.0), row(2.97, 0.2, 1.0), row(3.03, 0.3, 1.0), row(3.10, 0.4, 1.0)];
        let c = candidate_set_for_context(&rows, 3.0, 0.04).unwrap();
        assert_eq!(c.rows, vec![vec![1], vec![2]]);
        assert_eq!(c.widenings, 0);
        let c = candidate_set_for_context(&rows[3..], 3.0, 0.04).unwrap();
        assert_eq!(c.widenings, 2);
        assert_eq!(c.epsilon, 0.16);
    }

    #[test]
    fn shared_settings_are_grouped() {
        let rows = [row(3.0, 0.1, 1.0), row(3.01, 0.1, 2.0), row(3.02, 0.2, 3.0)];
        let c = candidate_set_for_context(&rows, 3.0, 0.04).unwrap();
        assert_eq!(c.candidates.len(), 2);
        assert_eq!(c.rows, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn empty_candidates_error() {
        let m = GpModel {
            kernel: Kernel::isotropic(BaseKernel::SquaredExponential, 1.0, 0.3, 4).unwrap(),
            noise_variance: 0.1,
            scaler: InputScaler::identity(),
        };
        let post = GpPosterior::fit(m, Arc::new(ZeroPrior), vec![]).unwrap();
        let ctx = Context { beta_n: 3.0, campaign: 0 };
        assert!(matches!(propose(&post, ctx, &[], Acquisition::Ucb { alpha: 2.0 }), Err(Error::EmptyCandidates)));
    }
}
