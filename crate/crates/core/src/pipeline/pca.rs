use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Per-channel principal-component basis, frozen after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub channel: String,
    pub mean: Vec<f64>,
    /// Retained components, one orthonormal row each.
    pub components: Vec<Vec<f64>>,
    /// Explained-variance ratio of every component, retained or not,
    /// in decreasing order.
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaBasis {
    pub fn mean_only(channel: &str, mean: Vec<f64>) -> Self {
        PcaBasis { channel: channel.to_owned(), mean, components: Vec::new(), explained_variance_ratio: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cumulative_explained(&self) -> f64 {
        self.explained_variance_ratio[..self.k()].iter().sum()
    }

    pub fn project(&self, profile: &[f64]) -> Result<Vec<f64>> {
        check_len(&format!("profile `{}`", self.channel), profile.len(), self.dim())?;
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(profile).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Result<Vec<f64>> {
        check_len(&format!("scores for `{}`", self.channel), scores.len(), self.k())?;
        let mut out = self.mean.clone();
        for (c, &s) in self.components.iter().zip(scores) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += s * v;
            }
        }
        Ok(out)
    }
}

/// Relative slack when comparing cumulative variance with the target.
const TARGET_SLACK: f64 = 1e-12;

/// Smallest basis whose cumulative explained variance reaches `var_target`,
/// from the SVD of the centered data matrix.
pub fn fit_pca(channel: &str, profiles: &[&[f64]], var_target: f64) -> Result<PcaBasis> {
    if profiles.len() < 2 {
        return Err(Error::schema("PCA needs at least two profiles"));
    }
    if !(var_target > 0.0 && var_target <= 1.0) {
        return Err(Error::validation("var_target", "must lie in (0, 1]"));
    }
    let r = profiles[0].len();
    for p in profiles {
        check_len(&format!("profile `{channel}`"), p.len(), r)?;
    }
    let n = profiles.len();
    let mut mean = vec![0.0; r];
    for p in profiles {
        for (m, v) in mean.iter_mut().zip(p.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, r, |i, j| profiles[i][j] - mean[j]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::NumericalFailure("SVD did not return V".into()))?;
    let mut pairs: Vec<(f64, usize)> = svd.singular_values.iter().map(|s| s * s).zip(0..).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = pairs.iter().map(|p| p.0).sum();
    let scale = mean.iter().map(|m| m * m).sum::<f64>().max(1.0) * n as f64;
    if total <= 1e-24 * scale {
        return Err(Error::DegenerateData(format!("all `{channel}` profiles are identical")));
    }
    let ratios: Vec<f64> = pairs.iter().map(|p| p.0 / total).collect();

    let mut k = 0;
    let mut cum = 0.0;
    while k < ratios.len() && cum < var_target * (1.0 - TARGET_SLACK) {
        cum += ratios[k];
        k += 1;
    }
    let components = pairs[..k]
        .iter()
        .map(|&(_, idx)| {
            let row: Vec<f64> = v_t.row(idx).iter().copied().collect();
            // Fix the sign so the largest-magnitude entry is positive.
            let pivot = row.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
            if pivot < 0.0 {
                row.into_iter().map(|v| -v).collect()
            } else {
                row
            }
        })
        .collect();
    Ok(PcaBasis { channel: channel.to_owned(), mean, components, explained_variance_ratio: ratios })
}

/// As [`fit_pca`], but identical profiles yield a mean-only basis.
pub fn fit_pca_or_mean(channel: &str, profiles: &[&[f64]], var_target: f64) -> Result<PcaBasis> {
    match fit_pca(channel, profiles, var_target) {
        Err(Error::DegenerateData(msg)) => {
            tracing::warn!("{msg}; keeping the mean profile only");
            Ok(PcaBasis::mean_only(channel, profiles[0].to_vec()))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DVector, SymmetricEigen};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn two_dim_affine_subspace() {
        let mut r = crate::rng::from_seed(1);
        let base: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let u: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.1).cos()).collect();
        let data: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b): (f64, f64) = (r.sample(StandardNormal), r.sample(StandardNormal));
                (0..20).map(|j| base[j] + a * u[j] + b * v[j]).collect()
            })
            .collect();
        let pca = fit_pca("x", &refs(&data), 0.99).unwrap();
        assert_eq!(pca.k(), 2);
        assert!((pca.cumulative_explained() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identical_profiles_are_degenerate() {
        let p = vec![1.0, 2.0, 3.0];
        let data = vec![p.clone(), p.clone(), p.clone()];
        assert!(matches!(fit_pca("x", &refs(&data), 0.99), Err(Error::DegenerateData(_))));
        let fallback = fit_pca_or_mean("x", &refs(&data), 0.99).unwrap();
        assert_eq!(fallback.mean, p);
        assert_eq!(fallback.k(), 0);
    }

    fn rank5(seed: u64) -> Vec<Vec<f64>> {
        let mut r = crate::rng::from_seed(seed);
        let dirs: Vec<Vec<f64>> = (0..5).map(|_| (0..33).map(|_| r.sample(StandardNormal)).collect()).collect();
        (0..200)
            .map(|_| {
                let mut x = vec![0.0; 33];
                for (d, scale) in dirs.iter().zip([5.0, 4.0, 3.0, 2.0, 1.5]) {
                    let c: f64 = r.sample::<f64, _>(StandardNormal) * scale;
                    for (xi, di) in x.iter_mut().zip(d) {
                        *xi += c * di;
                    }
                }
                x.iter_mut().for_each(|xi| *xi += 0.01 * r.sample::<f64, _>(StandardNormal));
                x
            })
            .collect()
    }

    #[test]
    fn rank_five_matches_covariance_oracle() {
        let data = rank5(2);
        let pca = fit_pca("x", &refs(&data), 0.99).unwrap();

        // Oracle: eigen-decomposition of the sample covariance.
        let n = data.len();
        let m = DMatrix::from_fn(n, 33, |i, j| data[i][j]);
        let mean = m.row_mean();
        let c = DMatrix::from_fn(n, 33, |i, j| m[(i, j)] - mean[j]);
        let cov = c.transpose() * &c / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut lambda: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        lambda.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = lambda.iter().sum();
        let mut k = 0;
        let mut cum = 0.0;
        while cum < 0.99 {
            cum += lambda[k] / total;
            k += 1;
        }
        assert_eq!(k, 5);
        assert_eq!(pca.k(), k);
        for (a, b) in pca.explained_variance_ratio.iter().zip(&lambda) {
            assert!((a - b / total).abs() < 1e-10);
        }
        assert!(pca.cumulative_explained() >= 0.99);
        assert!(pca.explained_variance_ratio[..k - 1].iter().sum::<f64>() < 0.99);
    }

    #[test]
    fn components_are_orthonormal() {
        let pca = fit_pca("x", &refs(&rank5(3)), 0.99).unwrap();
        for (i, a) in pca.components.iter().enumerate() {
            for (j, b) in pca.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_round_trips() {
        let data = rank5(4);
        let pca = fit_pca("x", &refs(&data), 0.99).unwrap();
        assert!(pca.project(&pca.mean).unwrap().iter().all(|s| s.abs() < 1e-12));

        let in_span = pca.reconstruct(&[1.0, -2.0, 0.5, 0.0, 3.0]).unwrap();
        let back = pca.reconstruct(&pca.project(&in_span).unwrap()).unwrap();
        let norm: f64 = in_span.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err: f64 = back.iter().zip(&in_span).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-10 * norm);

        // Out of span: residual equals the least-squares residual against the
        // retained components, solved independently.
        let x: Vec<f64> = (0..33).map(|i| (i as f64).sqrt()).collect();
        let rec = pca.reconstruct(&pca.project(&x).unwrap()).unwrap();
        let got: f64 = rec.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum();
        let a = DMatrix::from_fn(33, pca.k(), |i, j| pca.components[j][i]);
        let y = DVector::from_iterator(33, x.iter().zip(&pca.mean).map(|(x, m)| x - m));
        let coef = (a.transpose() * &a).lu().solve(&(a.transpose() * &y)).unwrap();
        let want = (&a * coef - &y).norm_squared();
        assert!((got - want).abs() < 1e-9 * want.max(1.0));
        assert!(pca.project(&[0.0; 3]).is_err());
    }

    #[test]
    fn explained_variance_is_monotone_in_k() {
        let pca = fit_pca("x", &refs(&rank5(5)), 1.0).unwrap();
        let mut cum = 0.0;
        for r in &pca.explained_variance_ratio {
            assert!(*r >= 0.0);
            let next = cum + r;
            assert!(next >= cum);
            cum = next;
        }
    }
}
