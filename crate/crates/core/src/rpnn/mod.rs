//! Recurrent probabilistic dynamics model: a GRU network emitting a diagonal
//! Gaussian over the next state delta, trained by Gaussian NLL with full
//! backpropagation through time.

pub mod config;
pub mod model;
pub mod net;
pub mod rollout;
pub mod train;

pub use config::RpnnConfig;
pub use model::{nll_loss, GaussianPrediction, Normalizer, Rpnn};
pub use net::{Architecture, ParamGroup};
pub use rollout::{rollout, rollout_until, Rollout};
pub use train::{
    analytic_gradient, evaluate_nll, gradient_check, numeric_derivative, relative_error, train, write_training_log,
    EpochLog, GradientCheck, GroupCheck, TrainOutcome, GRAD_CHECK_FLOOR,
};
