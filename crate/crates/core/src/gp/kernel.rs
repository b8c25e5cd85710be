use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKernel {
    SquaredExponential,
    Matern32,
    Matern52,
    /// Dot product of inputs centered at `LINEAR_CENTER`.
    Linear,
}

/// Scaled inputs live in `[0, 1]`; the linear kernel is centered here.
pub const LINEAR_CENTER: f64 = 0.5;

/// Covariance function over scaled inputs. With `time_lengthscale` set the
/// base kernel is multiplied by a squared exponential over the campaign
/// index, which is then the last input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub base: BaseKernel,
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_lengthscale: Option<f64>,
}

impl Kernel {
    pub fn new(base: BaseKernel, signal_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let k = Kernel { base, signal_variance, lengthscales, time_lengthscale: None };
        k.validate()?;
        Ok(k)
    }

    /// Isotropic kernel over `dim` inputs.
    pub fn isotropic(base: BaseKernel, signal_variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Kernel::new(base, signal_variance, vec![lengthscale; dim])
    }

    pub fn with_time(mut self, lengthscale: f64) -> Result<Self> {
        self.time_lengthscale = Some(lengthscale);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(Error::Config("kernel signal variance must be positive".into()));
        }
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("kernel lengthscales must be positive".into()));
        }
        if let Some(l) = self.time_lengthscale {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Config("time lengthscale must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len() + self.time_lengthscale.is_some() as usize
    }

    pub fn is_time_augmented(&self) -> bool {
        self.time_lengthscale.is_some()
    }

    /// Short label such as `se(ls=0.1)` or `matern52(ls=0.3)*time(ls=2)`.
    pub fn label(&self) -> String {
        let name = match self.base {
            BaseKernel::SquaredExponential => "se",
            BaseKernel::Matern32 => "matern32",
            BaseKernel::Matern52 => "matern52",
            BaseKernel::Linear => "linear",
        };
        let ls = self.lengthscales[0];
        let iso = self.lengthscales.iter().all(|&l| l == ls);
        let mut s = match (self.base, iso) {
            (BaseKernel::Linear, _) => name.to_string(),
            (_, true) => format!("{name}(ls={ls})"),
            (_, false) => format!("{name}(ls={:?})", self.lengthscales),
        };
        if let Some(t) = self.time_lengthscale {
            s.push_str(&format!("*time(ls={t})"));
        }
        s
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len("kernel input", x.len(), self.input_dim())?;
        check_len("kernel input", y.len(), self.input_dim())?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.lengthscales.len();
        let base = match self.base {
            BaseKernel::Linear => {
                self.signal_variance
                    * x[..d].iter().zip(&y[..d]).map(|(a, b)| (a - LINEAR_CENTER) * (b - LINEAR_CENTER)).sum::<f64>()
            }
            stationary => {
                let r2: f64 = x[..d]
                    .iter()
                    .zip(&y[..d])
                    .zip(&self.lengthscales)
                    .map(|((a, b), l)| ((a - b) / l).powi(2))
                    .sum();
                self.signal_variance * stationary_profile(stationary, r2)
            }
        };
        match self.time_lengthscale {
            Some(l) => {
                let dt = (x[d] - y[d]) / l;
                base * (-0.5 * dt * dt).exp()
            }
            None => base,
        }
    }
}

/// Unit-variance correlation as a function of squared scaled distance.
fn stationary_profile(base: BaseKernel, r2: f64) -> f64 {
    match base {
        BaseKernel::SquaredExponential => (-0.5 * r2).exp(),
        BaseKernel::Matern32 => {
            let s = (3.0 * r2).sqrt();
            (1.0 + s) * (-s).exp()
        }
        BaseKernel::Matern52 => {
            let s = (5.0 * r2).sqrt();
            (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
        }
        BaseKernel::Linear => unreachable!("linear kernel is not stationary"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_kernels_have_signal_variance_on_diagonal() {
        for base in [BaseKernel::SquaredExponential, BaseKernel::Matern32, BaseKernel::Matern52] {
            let k = Kernel::isotropic(base, 4.0, 0.3, 4).unwrap();
            let x = [0.1, 0.7, 0.2, 0.9];
            assert_eq!(k.eval(&x, &x).unwrap(), 4.0);
        }
    }

    #[test]
    fn linear_kernel_vanishes_at_center() {
        let k = Kernel::isotropic(BaseKernel::Linear, 2.0, 1.0, 3).unwrap();
        assert_eq!(k.eval(&[0.5; 3], &[0.9, 0.1, 0.3]).unwrap(), 0.0);
        let v = k.eval(&[1.0, 0.5, 0.5], &[0.75, 0.5, 0.5]).unwrap();
        assert!((v - 2.0 * 0.5 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn matern_values_at_one_lengthscale() {
        let ls = 0.4;
        let x = [0.2];
        let y = [0.2 + ls];
        let k52 = Kernel::isotropic(BaseKernel::Matern52, 1.5, ls, 1).unwrap();
        let s5 = 5f64.sqrt();
        let want52 = 1.5 * (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((k52.eval(&x, &y).unwrap() - want52).abs() < 1e-14);
        let k32 = Kernel::isotropic(BaseKernel::Matern32, 1.5, ls, 1).unwrap();
        let s3 = 3f64.sqrt();
        assert!((k32.eval(&x, &y).unwrap() - 1.5 * (1.0 + s3) * (-s3).exp()).abs() < 1e-14);
    }

    #[test]
    fn time_factor_multiplies_base() {
        let k = Kernel::isotropic(BaseKernel::SquaredExponential, 1.0, 1.0, 2).unwrap().with_time(2.0).unwrap();
        assert_eq!(k.input_dim(), 3);
        let same = k.eval(&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        let later = k.eval(&[0.0, 0.0, 0.0], &[0.0, 0.0, 2.0]).unwrap();
        assert_eq!(same, 1.0);
        assert!((later - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_schema_error() {
        let k = Kernel::isotropic(BaseKernel::SquaredExponential, 1.0, 1.0, 4).unwrap();
        assert!(matches!(k.eval(&[0.0; 3], &[0.0; 4]), Err(Error::Schema(_))));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(Kernel::isotropic(BaseKernel::SquaredExponential, 0.0, 1.0, 4).is_err());
        assert!(Kernel::isotropic(BaseKernel::SquaredExponential, 1.0, -1.0, 4).is_err());
    }
}
