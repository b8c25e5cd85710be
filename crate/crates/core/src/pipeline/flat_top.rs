use std::ops::Range;

use super::trajectory::Trajectory;
use crate::error::{Error, Result};

pub const MIN_TRAJECTORY_STEPS: usize = 10;
pub const MIN_FLAT_TOP_STEPS: usize = 5;
/// Allowed deviation from the window median, as a fraction of it.
pub const MEDIAN_BAND: f64 = 0.10;
/// Steps must exceed this fraction of the shot maximum.
pub const MAX_FRACTION: f64 = 0.5;

pub fn extract_flat_top(traj: &Trajectory) -> Result<Range<usize>> {
    detect_flat_top(traj.beta_n()?)
}

/// Longest contiguous window whose samples all lie within `MEDIAN_BAND` of
/// the window's own median and above `MAX_FRACTION` of the signal maximum.
/// Ties go to the earliest window.
pub fn detect_flat_top(beta: &[f64]) -> Result<Range<usize>> {
    let n = beta.len();
    if n < MIN_TRAJECTORY_STEPS {
        return Err(Error::schema(format!(
            "flat-top detection needs at least {MIN_TRAJECTORY_STEPS} steps, got {n}"
        )));
    }
    let no_flat_top = Error::NoFlatTop { min_len: MIN_FLAT_TOP_STEPS };
    let peak = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) || beta.iter().any(|v| !v.is_finite()) {
        return Err(no_flat_top);
    }
    let floor = MAX_FRACTION * peak;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| beta[i].total_cmp(&beta[j]));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let sorted: Vec<f64> = order.iter().map(|&i| beta[i]).collect();
    let ratio_cap = (1.0 + MEDIAN_BAND) / (1.0 - MEDIAN_BAND);

    let mut best = 0..0;
    let mut tree = Fenwick::new(n);
    for a in 0..n {
        if n - a <= best.len() {
            break;
        }
        if beta[a] <= floor {
            continue;
        }
        tree.clear();
        let (mut lo, mut hi) = (beta[a], beta[a]);
        for b in a..n {
            if beta[b] <= floor {
                break;
            }
            tree.add(rank[b]);
            lo = lo.min(beta[b]);
            hi = hi.max(beta[b]);
            // Necessary for validity and monotone in b, so a safe cutoff.
            if hi > ratio_cap * lo {
                break;
            }
            let len = b - a + 1;
            if len <= best.len() {
                continue;
            }
            let median = if len % 2 == 1 {
                sorted[tree.kth(len / 2)]
            } else {
                0.5 * (sorted[tree.kth(len / 2 - 1)] + sorted[tree.kth(len / 2)])
            };
            let band = MEDIAN_BAND * median;
            if hi - median <= band && median - lo <= band {
                best = a..b + 1;
            }
        }
    }
    if best.len() < MIN_FLAT_TOP_STEPS {
        return Err(no_flat_top);
    }
    Ok(best)
}

/// Counts over value ranks, for order statistics of a growing window.
struct Fenwick {
    tree: Vec<usize>,
    log: usize,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0; n + 1], log: usize::BITS as usize - n.leading_zeros() as usize }
    }

    fn clear(&mut self) {
        self.tree.iter_mut().for_each(|c| *c = 0);
    }

    fn add(&mut self, rank: usize) {
        let mut i = rank + 1;
        while i < self.tree.len() {
            self.tree[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Rank of the `k`-th smallest element (0-based).
    fn kth(&self, k: usize) -> usize {
        let mut pos = 0;
        let mut remaining = k + 1;
        for bit in (0..=self.log).rev() {
            let next = pos + (1 << bit);
            if next < self.tree.len() && self.tree[next] < remaining {
                pos = next;
                remaining -= self.tree[next];
            }
        }
        pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct transcription of the rule, cubic time.
    fn oracle(beta: &[f64]) -> Option<Range<usize>> {
        let peak = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut best: Option<Range<usize>> = None;
        for len in (MIN_FLAT_TOP_STEPS..=beta.len()).rev() {
            for a in 0..=beta.len() - len {
                let w = &beta[a..a + len];
                let mut s = w.to_vec();
                s.sort_by(f64::total_cmp);
                let m = if len % 2 == 1 { s[len / 2] } else { 0.5 * (s[len / 2 - 1] + s[len / 2]) };
                if w.iter().all(|&v| (v - m).abs() <= 0.1 * m && v > 0.5 * peak) {
                    best = Some(a..a + len);
                    break;
                }
            }
            if best.is_some() {
                break;
            }
        }
        best
    }

    #[test]
    fn constant_signal_is_all_flat_top() {
        assert_eq!(detect_flat_top(&[3.0; 40]).unwrap(), 0..40);
    }

    #[test]
    fn pure_ramp_has_no_flat_top() {
        let ramp: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 / 9.0).collect();
        assert!(matches!(detect_flat_top(&ramp), Err(Error::NoFlatTop { .. })));
    }

    #[test]
    fn too_short_is_schema_error() {
        assert!(matches!(detect_flat_top(&[3.0; 9]), Err(Error::Schema(_))));
    }

    #[test]
    fn ramp_plateau_ramp_returns_plateau() {
        let mut beta: Vec<f64> = (0..6).map(|i| 0.5 * i as f64).collect();
        let plateau = beta.len()..beta.len() + 30;
        beta.extend((0..30).map(|i| 3.0 + 0.05 * ((i as f64) * 0.7).sin()));
        beta.extend((0..6).map(|i| 2.5 - 0.5 * i as f64));
        assert_eq!(detect_flat_top(&beta).unwrap(), plateau);
        assert_eq!(oracle(&beta), Some(plateau));
    }

    #[test]
    fn agrees_with_cubic_oracle_on_noisy_signals() {
        use rand::Rng;
        let mut r = crate::rng::from_seed(4);
        for _ in 0..200 {
            let n = r.random_range(10..60);
            let level = r.random_range(1.0..4.0);
            let noise = r.random_range(0.0..0.3);
            let beta: Vec<f64> = (0..n)
                .map(|i| {
                    let ramp = ((i as f64 + 1.0) / 8.0).min(1.0);
                    level * ramp * (1.0 + noise * (r.random::<f64>() - 0.5))
                })
                .collect();
            assert_eq!(detect_flat_top(&beta).ok(), oracle(&beta), "{beta:?}");
        }
    }
}
