//! Conversion between the Gaussian ECH parameterization and per-gyrotron aim
//! angles.
//!
//! Each gyrotron deposits a fixed-width Gaussian at a radius set by its aim
//! angle through an affine calibration. Gyrotrons run at constant power, so
//! the deposited amplitude is fixed per gyrotron and any amplitude mismatch
//! with the requested profile shows up in the residual.

use serde::{Deserialize, Serialize};

use crate::ech::{gaussian, radial_grid, EchParams};
use crate::error::{Error, Result};

/// Affine map from aim angle (degrees) to deposition center (normalized radius).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub center_at_zero: f64,
    pub radius_per_degree: f64,
}

impl Calibration {
    pub fn center(&self, angle_deg: f64) -> f64 {
        self.center_at_zero + self.radius_per_degree * angle_deg
    }

    pub fn angle(&self, center: f64) -> f64 {
        (center - self.center_at_zero) / self.radius_per_degree
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GyrotronSet {
    pub count: usize,
    pub power_kw: f64,
    /// Peak deposited amplitude per kW of injected power.
    pub amplitude_per_kw: f64,
    pub deposition_width: f64,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub calibration: Calibration,
    /// Radial points the deposition and residual are evaluated on.
    pub grid_points: usize,
}

impl Default for GyrotronSet {
    fn default() -> Self {
        GyrotronSet {
            count: 3,
            power_kw: 600.0,
            amplitude_per_kw: 1.0e-3,
            deposition_width: 0.04,
            angle_min_deg: -30.0,
            angle_max_deg: 30.0,
            calibration: Calibration { center_at_zero: 0.5, radius_per_degree: 0.015 },
            grid_points: 200,
        }
    }
}

impl GyrotronSet {
    pub fn with_count(&self, count: usize) -> Self {
        GyrotronSet { count, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.deposition_width > 0.0) {
            return Err(Error::Config("gyrotron deposition width must be positive".into()));
        }
        if self.calibration.radius_per_degree == 0.0 || !self.calibration.radius_per_degree.is_finite() {
            return Err(Error::Config("gyrotron calibration must be strictly monotone".into()));
        }
        if !(self.angle_max_deg > self.angle_min_deg) {
            return Err(Error::Config("gyrotron angle range is empty".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("gyrotron grid needs at least two points".into()));
        }
        Ok(())
    }

    pub fn deposition_amplitude(&self) -> f64 {
        self.power_kw * self.amplitude_per_kw
    }

    /// Reachable deposition-center interval, ordered low to high.
    pub fn center_range(&self) -> (f64, f64) {
        let a = self.calibration.center(self.angle_min_deg);
        let b = self.calibration.center(self.angle_max_deg);
        (a.min(b), a.max(b))
    }

    pub fn grid(&self) -> Vec<f64> {
        radial_grid(self.grid_points)
    }

    fn clamp_angle(&self, angle: f64) -> (f64, bool) {
        let clamped = angle.clamp(self.angle_min_deg, self.angle_max_deg);
        (clamped, clamped != angle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSolution {
    pub angles_deg: Vec<f64>,
    /// Sum of squared deviations from the target profile on the radial grid.
    pub residual: f64,
    /// Target center lay outside the calibrated range; angles are best effort.
    pub unreachable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedProfile {
    pub profile: Vec<f64>,
    /// At least one angle was outside the range and got clamped.
    pub clamped: bool,
}

/// Sum of per-gyrotron depositions at the calibrated centers.
pub fn angles_to_profile(angles_deg: &[f64], set: &GyrotronSet) -> RealizedProfile {
    let grid = set.grid();
    let amp = set.deposition_amplitude();
    let mut profile = vec![0.0; grid.len()];
    let mut clamped = false;
    for &angle in angles_deg {
        let (a, was_clamped) = set.clamp_angle(angle);
        clamped |= was_clamped;
        let c = set.calibration.center(a);
        for (p, &r) in profile.iter_mut().zip(&grid) {
            *p += gaussian(r, c, set.deposition_width, amp);
        }
    }
    RealizedProfile { profile, clamped }
}

const SEARCH_POINTS: usize = 121;
const EXHAUSTIVE_MAX: usize = 3;
const MAX_SWEEPS: usize = 60;

/// Least-squares aim angles reproducing `target` with `set.count` gyrotrons.
///
/// Up to three gyrotrons the deposition centers are searched exhaustively on a
/// grid over the reachable range; larger sets start from quantile placement
/// and run coordinate descent on the same grid. Either way the result is then
/// polished per center by golden-section search.
pub fn profile_to_angles(target: &EchParams, set: &GyrotronSet) -> Result<AngleSolution> {
    set.validate()?;
    if set.count == 0 {
        return Err(Error::NoGyrotrons);
    }
    target.validate()?;
    if !(target.w > 0.0) {
        return Err(Error::validation("w_q", "amplitude must be positive to aim gyrotrons"));
    }

    let grid = set.grid();
    let target_profile = target.sample(&grid);
    let (lo, hi) = set.center_range();
    let unreachable = target.mu < lo || target.mu > hi;

    let candidates: Vec<f64> = (0..SEARCH_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SEARCH_POINTS - 1) as f64)
        .collect();
    let amp = set.deposition_amplitude();
    let basis: Vec<Vec<f64>> = candidates
        .iter()
        .map(|&c| grid.iter().map(|&r| gaussian(r, c, set.deposition_width, amp)).collect())
        .collect();
    let gram: Vec<Vec<f64>> = basis
        .iter()
        .map(|a| basis.iter().map(|b| dot(a, b)).collect())
        .collect();
    let proj: Vec<f64> = basis.iter().map(|b| dot(b, &target_profile)).collect();
    let tt = dot(&target_profile, &target_profile);
    let combo_cost = |idx: &[usize]| -> f64 {
        let mut s = tt;
        for &i in idx {
            s -= 2.0 * proj[i];
            for &j in idx {
                s += gram[i][j];
            }
        }
        s
    };

    let n = set.count;
    let mut best: Vec<usize> = if n <= EXHAUSTIVE_MAX {
        exhaustive_multiset(SEARCH_POINTS, n, &combo_cost)
    } else {
        // Quantile placement of the target, then coordinate descent on the grid.
        let mut idx: Vec<usize> = (0..n)
            .map(|k| {
                let q = (k as f64 + 0.5) / n as f64;
                let c = target.mu + target.sigma * std::f64::consts::SQRT_2 * erfinv(2.0 * q - 1.0);
                nearest_index(&candidates, c)
            })
            .collect();
        let mut cost = combo_cost(&idx);
        for _ in 0..MAX_SWEEPS {
            let mut improved = false;
            for k in 0..n {
                for c in 0..SEARCH_POINTS {
                    let old = idx[k];
                    idx[k] = c;
                    let trial = combo_cost(&idx);
                    if trial < cost - 1e-15 {
                        cost = trial;
                        improved = true;
                    } else {
                        idx[k] = old;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        idx
    };
    best.sort_unstable();

    let spacing = (hi - lo) / (SEARCH_POINTS - 1) as f64;
    let mut centers: Vec<f64> = best.iter().map(|&i| candidates[i]).collect();
    let residual_of = |centers: &[f64]| -> f64 {
        grid.iter()
            .zip(&target_profile)
            .map(|(&r, &t)| {
                let s: f64 = centers.iter().map(|&c| gaussian(r, c, set.deposition_width, amp)).sum();
                (s - t) * (s - t)
            })
            .sum()
    };
    let mut residual = residual_of(&centers);
    for _ in 0..MAX_SWEEPS {
        let before = residual;
        for k in 0..n {
            let a = (centers[k] - spacing).max(lo);
            let b = (centers[k] + spacing).min(hi);
            let mut trial = centers.clone();
            let c = golden_section(a, b, 1e-12, |x| {
                trial[k] = x;
                residual_of(&trial)
            });
            trial[k] = c;
            let r = residual_of(&trial);
            if r <= residual {
                residual = r;
                centers = trial;
            }
        }
        if before - residual <= 1e-15 * before.max(1e-300) {
            break;
        }
    }

    let angles_deg = centers.iter().map(|&c| set.calibration.angle(c)).collect();
    Ok(AngleSolution { angles_deg, residual, unreachable })
}

fn exhaustive_multiset(points: usize, n: usize, cost: &dyn Fn(&[usize]) -> f64) -> Vec<usize> {
    let mut idx = vec![0usize; n];
    let mut best = idx.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let c = cost(&idx);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&idx);
        }
        // Next nondecreasing index tuple.
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] + 1 < points {
                idx[k] += 1;
                let v = idx[k];
                for j in idx.iter_mut().skip(k + 1) {
                    *j = v;
                }
                break;
            }
        }
    }
}

fn golden_section(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn nearest_index(xs: &[f64], x: f64) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inverse error function (Giles' single-precision-grade approximation,
/// adequate for initial placement only).
fn erfinv(x: f64) -> f64 {
    let x = x.clamp(-0.999_999, 0.999_999);
    let w = -((1.0 - x) * (1.0 + x)).ln();
    let p = if w < 5.0 {
        let w = w - 2.5;
        let mut p = 2.810_226_36e-08;
        p = 3.432_739_39e-07 + p * w;
        p = -3.523_387_7e-06 + p * w;
        p = -4.391_506_54e-06 + p * w;
        p = 0.000_218_580_87 + p * w;
        p = -0.001_253_725_03 + p * w;
        p = -0.004_177_681_64 + p * w;
        p = 0.246_640_727 + p * w;
        1.501_409_41 + p * w
    } else {
        let w = w.sqrt() - 3.0;
        let mut p = -0.000_200_214_257;
        p = 0.000_100_950_558 + p * w;
        p = 0.001_349_343_22 + p * w;
        p = -0.003_673_428_44 + p * w;
        p = 0.005_739_507_73 + p * w;
        p = -0.007_622_461_3 + p * w;
        p = 0.009_438_870_47 + p * w;
        p = 1.001_674_06 + p * w;
        2.832_976_82 + p * w
    };
    p * x
}
