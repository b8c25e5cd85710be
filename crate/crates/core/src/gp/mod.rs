//! Gaussian-process regression of time-to-tearing-mode with a nonzero prior
//! mean.

pub mod cholesky;
pub mod kernel;
pub mod posterior;

pub use kernel::{BaseKernel, Kernel};
pub use posterior::{
    select_hyperparameters, ConstantPrior, GpModel, GpPosterior, GpRow, InputScaler, Prediction, PriorMean,
    ShiftedPrior, ZeroPrior, GP_INPUT_DIM,
};
