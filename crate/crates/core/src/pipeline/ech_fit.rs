use serde::{Deserialize, Serialize};

use crate::ech::{gaussian, EchParams, SIGMA_MIN};
use crate::error::{check_len, Error, Result};

/// Profiles whose peak is below this are treated as "ECH off".
pub const AMPLITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchFit {
    pub params: EchParams,
    /// Sum of squared residuals on the grid.
    pub residual: f64,
}

/// Least-squares Gaussian fit `w exp(-(rho - mu)^2 / (2 sigma^2))` by
/// Levenberg-Marquardt from a half-maximum initial guess. The center is kept
/// in `[0, 1]` and the width above [`SIGMA_MIN`].
pub fn fit_ech_gaussian(profile: &[f64], grid: &[f64]) -> Result<EchFit> {
    check_len("ECH profile", profile.len(), grid.len())?;
    if grid.len() < 3 {
        return Err(Error::schema("ECH fit needs at least three radial points"));
    }
    let (imax, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, 0.0));
    if !(peak >= AMPLITUDE_FLOOR) {
        return Err(Error::DegenerateProfile { peak, floor: AMPLITUDE_FLOOR });
    }

    let mut p = initial_guess(profile, grid, imax, peak);
    let mut cost = sse(profile, grid, &p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (jtj, jtr) = normal_equations(profile, grid, &p);
        let mut a = jtj;
        for i in 0..3 {
            a[i][i] += lambda * jtj[i][i].max(1e-12);
        }
        let Some(delta) = solve3(a, [-jtr[0], -jtr[1], -jtr[2]]) else {
            lambda *= 10.0;
            continue;
        };
        let trial = clamp_params([p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]]);
        let trial_cost = sse(profile, grid, &trial);
        if trial_cost < cost {
            let improvement = cost - trial_cost;
            let step = (0..3).map(|i| (trial[i] - p[i]).abs()).fold(0.0, f64::max);
            p = trial;
            cost = trial_cost;
            lambda = (lambda / 3.0).max(1e-12);
            if improvement <= 1e-16 * cost.max(1e-300) || step < 1e-14 {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    Ok(EchFit { params: EchParams::from_array(p), residual: cost })
}

/// Fit, mapping a degenerate (all but zero) profile to "ECH off" at the
/// given nominal center and width.
pub fn fit_or_off(profile: &[f64], grid: &[f64], nominal: EchParams) -> Result<EchParams> {
    match fit_ech_gaussian(profile, grid) {
        Ok(fit) => Ok(fit.params),
        Err(Error::DegenerateProfile { .. }) => Ok(EchParams { w: 0.0, ..nominal }),
        Err(e) => Err(e),
    }
}

fn clamp_params(p: [f64; 3]) -> [f64; 3] {
    [p[0].clamp(0.0, 1.0), p[1].max(SIGMA_MIN), p[2].max(0.0)]
}

fn initial_guess(profile: &[f64], grid: &[f64], imax: usize, peak: f64) -> [f64; 3] {
    let half = 0.5 * peak;
    let mut lo = imax;
    while lo > 0 && profile[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < profile.len() && profile[hi + 1] >= half {
        hi += 1;
    }
    let spacing = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    let fwhm = (grid[hi] - grid[lo]) + spacing;
    let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    clamp_params([grid[imax], sigma, peak])
}

fn sse(profile: &[f64], grid: &[f64], p: &[f64; 3]) -> f64 {
    grid.iter()
        .zip(profile)
        .map(|(&r, &y)| {
            let e = gaussian(r, p[0], p[1], p[2]) - y;
            e * e
        })
        .sum()
}

fn normal_equations(profile: &[f64], grid: &[f64], p: &[f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let (mu, sigma, w) = (p[0], p[1], p[2]);
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for (&r, &y) in grid.iter().zip(profile) {
        let d = r - mu;
        let g = (-(d * d) / (2.0 * sigma * sigma)).exp();
        let res = w * g - y;
        let j = [w * g * d / (sigma * sigma), w * g * d * d / (sigma * sigma * sigma), g];
        for a in 0..3 {
            jtr[a] += j[a] * res;
            for b in 0..3 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if !d.is_finite() || d.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *xc = det(&m) / d;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ech::radial_grid;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_gaussian_recovered() {
        let grid = radial_grid(200);
        let truth = EchParams { mu: 0.4, sigma: 0.05, w: 2.0 };
        let fit = fit_ech_gaussian(&truth.sample(&grid), &grid).unwrap();
        assert!((fit.params.mu - 0.4).abs() < 1e-6);
        assert!((fit.params.sigma - 0.05).abs() < 1e-6);
        assert!((fit.params.w - 2.0).abs() < 1e-6);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn zero_profile_is_degenerate() {
        let grid = radial_grid(33);
        let err = fit_ech_gaussian(&vec![0.0; 33], &grid).unwrap_err();
        assert!(matches!(err, Error::DegenerateProfile { .. }));
        let off = fit_or_off(&vec![0.0; 33], &grid, EchParams { mu: 0.5, sigma: 0.1, w: 1.0 }).unwrap();
        assert_eq!(off.w, 0.0);
    }

    #[test]
    fn length_mismatch_is_schema_error() {
        assert!(matches!(fit_ech_gaussian(&[1.0; 5], &radial_grid(6)), Err(Error::Schema(_))));
    }

    #[test]
    fn fit_is_idempotent() {
        let grid = radial_grid(200);
        let lumpy: Vec<f64> = grid
            .iter()
            .map(|&r| gaussian(r, 0.35, 0.04, 0.6) + gaussian(r, 0.47, 0.05, 0.5))
            .collect();
        let first = fit_ech_gaussian(&lumpy, &grid).unwrap().params;
        let second = fit_ech_gaussian(&first.sample(&grid), &grid).unwrap().params;
        assert!((first.mu - second.mu).abs() < 1e-8);
        assert!((first.sigma - second.sigma).abs() < 1e-8);
        assert!((first.w - second.w).abs() < 1e-8);
    }

    #[test]
    fn noisy_gaussian_matches_grid_search_oracle() {
        let grid = radial_grid(200);
        let truth = EchParams { mu: 0.55, sigma: 0.08, w: 1.5 };
        let mut rng = crate::rng::from_seed(11);
        let noisy: Vec<f64> = truth
            .sample(&grid)
            .iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v + 0.01 * truth.w * z
            })
            .collect();
        let fit = fit_ech_gaussian(&noisy, &grid).unwrap();
        assert!((fit.params.mu - truth.mu).abs() / truth.mu < 0.05);
        assert!((fit.params.sigma - truth.sigma).abs() / truth.sigma < 0.05);
        assert!((fit.params.w - truth.w).abs() / truth.w < 0.05);

        // Oracle: coarse grid search over (mu, sigma), closed-form amplitude,
        // then successive zooms around the incumbent.
        let cost = |mu: f64, sigma: f64| {
            let g: Vec<f64> = grid.iter().map(|&r| gaussian(r, mu, sigma, 1.0)).collect();
            let w = g.iter().zip(&noisy).map(|(a, b)| a * b).sum::<f64>() / g.iter().map(|a| a * a).sum::<f64>();
            g.iter().zip(&noisy).map(|(a, y)| (w * a - y).powi(2)).sum::<f64>()
        };
        let (mut mu_c, mut sg_c, mut half_mu, mut half_sg) = (0.5, 0.1, 0.5, 0.09);
        let mut best = f64::INFINITY;
        for _ in 0..12 {
            let (mut bm, mut bs) = (mu_c, sg_c);
            for i in 0..=40 {
                for j in 0..=40 {
                    let mu = mu_c - half_mu + 2.0 * half_mu * i as f64 / 40.0;
                    let sg = (sg_c - half_sg + 2.0 * half_sg * j as f64 / 40.0).max(SIGMA_MIN);
                    let c = cost(mu, sg);
                    if c < best {
                        best = c;
                        bm = mu;
                        bs = sg;
                    }
                }
            }
            mu_c = bm;
            sg_c = bs;
            half_mu /= 5.0;
            half_sg /= 5.0;
        }
        assert!((fit.residual - best).abs() <= 1e-6 * best.max(1e-12), "{} vs {}", fit.residual, best);
    }
}
