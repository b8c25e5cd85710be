use serde::{Deserialize, Serialize};

use crate::ech::EchParams;
use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 10;

/// Regular grid over `(mu, sigma, w)`. An axis whose observed values are all
/// equal collapses to a single node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchGrid {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub resolution: [usize; 3],
}

impl EchGrid {
    pub fn new(lo: [f64; 3], hi: [f64; 3], resolution: usize) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::Config("grid resolution must be at least 1".into()));
        }
        let mut res = [resolution; 3];
        for d in 0..3 {
            if !lo[d].is_finite() || !hi[d].is_finite() || lo[d] > hi[d] {
                return Err(Error::Config(format!("grid axis {d} has invalid bounds [{}, {}]", lo[d], hi[d])));
            }
            if hi[d] == lo[d] {
                tracing::warn!(axis = d, value = lo[d], "degenerate grid axis collapses to one node");
                res[d] = 1;
            }
        }
        Ok(EchGrid { lo, hi, resolution: res })
    }

    /// Bounds from the observed min/max of each ECH parameter.
    pub fn from_params<'a>(params: impl IntoIterator<Item = &'a EchParams>, resolution: usize) -> Result<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for p in params {
            any = true;
            for (d, v) in p.as_array().into_iter().enumerate() {
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
        }
        if !any {
            return Err(Error::EmptyDataset("no rows to bound the ECH grid".into()));
        }
        EchGrid::new(lo, hi, resolution)
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, d: usize) -> Vec<f64> {
        let n = self.resolution[d];
        if n == 1 {
            return vec![self.lo[d]];
        }
        (0..n).map(|i| self.lo[d] + (self.hi[d] - self.lo[d]) * i as f64 / (n - 1) as f64).collect()
    }

    /// `index = (i * n_sigma + j) * n_w + k`.
    pub fn index_of(&self, ijk: [usize; 3]) -> usize {
        (ijk[0] * self.resolution[1] + ijk[1]) * self.resolution[2] + ijk[2]
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let k = index % self.resolution[2];
        let j = (index / self.resolution[2]) % self.resolution[1];
        let i = index / (self.resolution[1] * self.resolution[2]);
        [i, j, k]
    }

    pub fn node(&self, index: usize) -> EchParams {
        let ijk = self.coords(index);
        let mut v = [0.0; 3];
        for d in 0..3 {
            let n = self.resolution[d];
            v[d] = if n == 1 {
                self.lo[d]
            } else {
                self.lo[d] + (self.hi[d] - self.lo[d]) * ijk[d] as f64 / (n - 1) as f64
            };
        }
        EchParams::from_array(v)
    }

    pub fn nodes(&self) -> Vec<EchParams> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Coordinates scaled to `[0, 1]` by the grid bounds; degenerate axes map
    /// to 0. Not clamped.
    pub fn normalize(&self, p: &EchParams) -> [f64; 3] {
        let mut u = p.as_array();
        for d in 0..3 {
            let span = self.hi[d] - self.lo[d];
            u[d] = if span > 0.0 { (u[d] - self.lo[d]) / span } else { 0.0 };
        }
        u
    }

    /// Nearest node in normalized coordinates. The grid is a product of
    /// evenly spaced axes, so this is per-axis rounding; exact midpoints go
    /// to the lower index.
    pub fn nearest(&self, p: &EchParams) -> usize {
        let u = self.normalize(p);
        let mut ijk = [0; 3];
        for d in 0..3 {
            let n = self.resolution[d];
            if n == 1 {
                continue;
            }
            let x = u[d].clamp(0.0, 1.0) * (n - 1) as f64;
            let f = x.floor();
            let i = if x - f > 0.5 { f + 1.0 } else { f };
            ijk[d] = (i as usize).min(n - 1);
        }
        self.index_of(ijk)
    }

    pub fn project(&self, p: &EchParams) -> EchParams {
        self.node(self.nearest(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(mu: f64, sigma: f64, w: f64) -> EchParams {
        EchParams { mu, sigma, w }
    }

    #[test]
    fn axis_spacing_from_bounds() {
        let g = EchGrid::from_params(&[p(0.2, 0.05, 0.5), p(0.6, 0.1, 1.5)], 10).unwrap();
        let mu = g.axis(0);
        assert_eq!(mu.len(), 10);
        assert!((mu[1] - mu[0] - 0.4 / 9.0).abs() < 1e-15);
        assert_eq!(g.len(), 1000);
        assert_eq!(g.node(0), p(0.2, 0.05, 0.5));
        assert!((g.node(999).w - 1.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_axis_collapses() {
        let g = EchGrid::from_params(&[p(0.2, 0.05, 1.0), p(0.6, 0.1, 1.0)], 10).unwrap();
        assert_eq!(g.resolution, [10, 10, 1]);
        assert_eq!(g.len(), 100);
        assert_eq!(g.project(&p(0.3, 0.07, 7.0)).w, 1.0);
    }

    #[test]
    fn index_round_trip_and_out_of_bounds_clamp() {
        let g = EchGrid::new([0.0, 0.02, 0.0], [1.0, 0.2, 2.0], 10).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index_of(g.coords(i)), i);
            assert_eq!(g.nearest(&g.node(i)), i);
        }
        assert_eq!(g.nearest(&p(-3.0, 9.0, -1.0)), g.index_of([0, 9, 0]));
        assert!(matches!(EchGrid::from_params(&[], 10), Err(Error::EmptyDataset(_))));
    }
}
