//! Posterior mean and variance against a dense matrix-inverse oracle with
//! independently written kernels.

use std::sync::Arc;

use approx::assert_relative_eq;
use dynabo_core::ech::EchParams;
use dynabo_core::gp::{
    BaseKernel, ConstantPrior, GpModel, GpPosterior, GpRow, InputScaler, Kernel, PriorMean, ZeroPrior,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
struct Bowl;

impl PriorMean for Bowl {
    fn mean(&self, beta_n: f64, ech: &EchParams) -> f64 {
        2.0 + 0.5 * beta_n - 3.0 * (ech.mu - 0.4).powi(2) + ech.w
    }
}

fn oracle_kernel(base: BaseKernel, sv: f64, ls: f64, time_ls: Option<f64>, x: &[f64], y: &[f64]) -> f64 {
    let d = 4;
    let mut r2 = 0.0;
    let mut dot = 0.0;
    for i in 0..d {
        r2 += ((x[i] - y[i]) / ls).powi(2);
        dot += (x[i] - 0.5) * (y[i] - 0.5);
    }
    let r = r2.sqrt();
    let k = match base {
        BaseKernel::SquaredExponential => sv * (-r2 / 2.0).exp(),
        BaseKernel::Matern32 => sv * (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp(),
        BaseKernel::Matern52 => sv * (1.0 + 5f64.sqrt() * r + 5.0 * r * r / 3.0) * (-(5f64.sqrt()) * r).exp(),
        BaseKernel::Linear => sv * dot,
    };
    match time_ls {
        Some(l) => k * (-(x[d] - y[d]).powi(2) / (2.0 * l * l)).exp(),
        None => k,
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<GpRow> {
    (0..n)
        .map(|_| GpRow {
            beta_n_bar: rng.random_range(3.0..4.0),
            ech: EchParams { mu: rng.random_range(0.1..0.8), sigma: rng.random_range(0.03..0.2), w: rng.random_range(0.2..1.0) },
            t_tm: rng.random_range(0.5..5.0),
            campaign: rng.random_range(0..4),
        })
        .collect()
}

fn scaled(scaler: &InputScaler, beta: f64, e: &EchParams, campaign: u32, time: bool) -> Vec<f64> {
    let raw = [beta, e.mu, e.sigma, e.w];
    let mut x: Vec<f64> = (0..4).map(|d| (raw[d] - scaler.lo[d]) / (scaler.hi[d] - scaler.lo[d])).collect();
    if time {
        x.push(campaign as f64);
    }
    x
}

struct Oracle {
    mean: f64,
    var: f64,
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    base: BaseKernel,
    sv: f64,
    ls: f64,
    time_ls: Option<f64>,
    noise: f64,
    scaler: &InputScaler,
    prior: &dyn PriorMean,
    rows: &[GpRow],
    q: (f64, EchParams, u32),
) -> Oracle {
    let t = time_ls.is_some();
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| scaled(scaler, r.beta_n_bar, &r.ech, r.campaign, t)).collect();
    let xq = scaled(scaler, q.0, &q.1, q.2, t);
    let n = rows.len();
    let kxx = DMatrix::from_fn(n, n, |i, j| oracle_kernel(base, sv, ls, time_ls, &xs[i], &xs[j]) + if i == j { noise } else { 0.0 });
    let inv = kxx.try_inverse().expect("invertible");
    let ks = DVector::from_fn(n, |i, _| oracle_kernel(base, sv, ls, time_ls, &xs[i], &xq));
    let y = DVector::from_fn(n, |i, _| rows[i].t_tm - prior.mean(rows[i].beta_n_bar, &rows[i].ech));
    let mean = prior.mean(q.0, &q.1) + (ks.transpose() * &inv * y)[(0, 0)];
    let var = (oracle_kernel(base, sv, ls, time_ls, &xq, &xq) - (ks.transpose() * &inv * &ks)[(0, 0)]).max(0.0) + noise;
    Oracle { mean, var }
}

const BASES: [BaseKernel; 4] =
    [BaseKernel::SquaredExponential, BaseKernel::Matern32, BaseKernel::Matern52, BaseKernel::Linear];

#[test]
fn posterior_matches_dense_inverse_for_every_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = random_rows(&mut rng, 20);
    let scaler = InputScaler::from_rows(&rows);
    let queries = random_rows(&mut rng, 15);
    let priors: [Arc<dyn PriorMean>; 3] = [Arc::new(ZeroPrior), Arc::new(ConstantPrior(2.5)), Arc::new(Bowl)];
    let mut checked = 0;
    for base in BASES {
        for time_ls in [None, Some(2.0)] {
            for prior in &priors {
                let ls = 0.3;
                let mut kernel = Kernel::isotropic(base, 4.0, ls, 4).unwrap();
                if let Some(l) = time_ls {
                    kernel = kernel.with_time(l).unwrap();
                }
                let model = GpModel { kernel, noise_variance: 0.25, scaler };
                let post = GpPosterior::fit(model, prior.clone(), rows.clone()).unwrap();
                for q in &queries {
                    let p = post.predict(q.beta_n_bar, &q.ech, q.campaign);
                    let o = oracle(base, 4.0, ls, time_ls, 0.25, &scaler, prior.as_ref(), &rows, (q.beta_n_bar, q.ech, q.campaign));
                    assert_relative_eq!(p.mean, o.mean, max_relative = 1e-8, epsilon = 1e-12);
                    assert_relative_eq!(p.variance, o.var, max_relative = 1e-8);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 4 * 2 * 3 * 15);
}

#[test]
fn two_point_closed_form() {
    // Scaled inputs 0 and 1 on the first axis, query at 0.5.
    let rows = vec![
        GpRow { beta_n_bar: 0.0, ech: EchParams { mu: 0.0, sigma: 0.1, w: 0.0 }, t_tm: 1.0, campaign: 0 },
        GpRow { beta_n_bar: 1.0, ech: EchParams { mu: 0.0, sigma: 0.1, w: 0.0 }, t_tm: 2.0, campaign: 0 },
    ];
    let kernel = Kernel::isotropic(BaseKernel::SquaredExponential, 1.0, 1.0, 4).unwrap();
    let model = GpModel { kernel, noise_variance: 0.1, scaler: InputScaler::identity() };
    let post = GpPosterior::fit(model, Arc::new(ZeroPrior), rows).unwrap();
    let p = post.predict(0.5, &EchParams { mu: 0.0, sigma: 0.1, w: 0.0 }, 0);

    let k01 = (-0.5f64).exp();
    let ks = (-0.125f64).exp();
    let (a, b) = (1.1, k01);
    let det = a * a - b * b;
    // [a b; b a]^-1 = [a -b; -b a] / det
    let w0 = (a * ks - b * ks) / det;
    let w1 = (-b * ks + a * ks) / det;
    let mean = w0 * 1.0 + w1 * 2.0;
    let var = 1.0 - (ks * w0 + ks * w1) + 0.1;
    assert_relative_eq!(p.mean, mean, max_relative = 1e-12);
    assert_relative_eq!(p.variance, var, max_relative = 1e-12);
    assert_relative_eq!(p.mean, 3.0 * ks / (1.1 + k01), max_relative = 1e-12);
}

#[test]
fn empty_posterior_is_the_prior() {
    for base in BASES {
        let kernel = Kernel::isotropic(base, 4.0, 0.3, 4).unwrap();
        let model = GpModel { kernel: kernel.clone(), noise_variance: 0.25, scaler: InputScaler::identity() };
        let post = GpPosterior::fit(model, Arc::new(Bowl), vec![]).unwrap();
        let e = EchParams { mu: 0.3, sigma: 0.1, w: 0.7 };
        let p = post.predict(3.4, &e, 0);
        assert_eq!(p.mean, Bowl.mean(3.4, &e));
        let x = [3.4, 0.3, 0.1, 0.7];
        assert_eq!(p.variance, kernel.eval(&x, &x).unwrap() + 0.25);
    }
}

#[test]
fn far_field_reverts_to_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = random_rows(&mut rng, 20);
    let scaler = InputScaler::from_rows(&rows);
    let far = EchParams { mu: 1e4, sigma: 1e4, w: 1e4 };
    for base in [BaseKernel::SquaredExponential, BaseKernel::Matern32, BaseKernel::Matern52] {
        let model = GpModel { kernel: Kernel::isotropic(base, 4.0, 0.3, 4).unwrap(), noise_variance: 0.25, scaler };
        let post = GpPosterior::fit(model, Arc::new(Bowl), rows.clone()).unwrap();
        let p = post.predict(1e4, &far, 0);
        assert_eq!(p.mean, Bowl.mean(1e4, &far));
        assert_eq!(p.variance, 4.0 + 0.25);
    }
}

#[test]
fn rank_one_append_matches_refit() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let rows = random_rows(&mut rng, 30);
    let scaler = InputScaler::from_rows(&rows);
    for base in BASES {
        let model = GpModel {
            kernel: Kernel::isotropic(base, 4.0, 0.3, 4).unwrap().with_time(2.0).unwrap(),
            noise_variance: 0.25,
            scaler,
        };
        let mut inc = GpPosterior::fit(model.clone(), Arc::new(Bowl), vec![]).unwrap();
        for r in &rows {
            inc.add_observation(*r).unwrap();
        }
        let full = GpPosterior::fit(model, Arc::new(Bowl), rows.clone()).unwrap();
        for q in random_rows(&mut rng, 10) {
            let a = inc.predict(q.beta_n_bar, &q.ech, q.campaign);
            let b = full.predict(q.beta_n_bar, &q.ech, q.campaign);
            assert_relative_eq!(a.mean, b.mean, max_relative = 1e-8, epsilon = 1e-12);
            assert_relative_eq!(a.variance, b.variance, max_relative = 1e-8);
        }
        assert_relative_eq!(inc.log_marginal_likelihood(), full.log_marginal_likelihood(), max_relative = 1e-8);
    }
}

fn base_strategy() -> impl Strategy<Value = BaseKernel> {
    prop_oneof![
        Just(BaseKernel::SquaredExponential),
        Just(BaseKernel::Matern32),
        Just(BaseKernel::Matern52),
        Just(BaseKernel::Linear),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictive_variance_never_below_noise(
        seed in 0u64..10_000,
        n in 0usize..25,
        base in base_strategy(),
        noise in 0.01f64..1.0,
        ls in 0.05f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n);
        let scaler = InputScaler::from_rows(&rows);
        let model = GpModel { kernel: Kernel::isotropic(base, 4.0, ls, 4).unwrap(), noise_variance: noise, scaler };
        let post = GpPosterior::fit(model, Arc::new(ZeroPrior), rows).unwrap();
        for q in random_rows(&mut rng, 5) {
            let p = post.predict(q.beta_n_bar, &q.ech, q.campaign);
            prop_assert!(p.variance >= noise);
            prop_assert!(p.mean.is_finite());
        }
    }

    #[test]
    fn stationary_posteriors_revert_far_from_data(seed in 0u64..10_000, n in 2usize..20, offset in 50.0f64..500.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, n);
        let scaler = InputScaler::from_rows(&rows);
        let model = GpModel {
            kernel: Kernel::isotropic(BaseKernel::Matern52, 4.0, 0.3, 4).unwrap(),
            noise_variance: 0.25,
            scaler,
        };
        let post = GpPosterior::fit(model, Arc::new(Bowl), rows).unwrap();
        let e = EchParams { mu: offset, sigma: 0.1, w: 0.5 };
        let p = post.predict(3.5, &e, 0);
        prop_assert!((p.mean - Bowl.mean(3.5, &e)).abs() < 1e-6);
        prop_assert!((p.variance - 4.25).abs() < 1e-6);
    }
}
