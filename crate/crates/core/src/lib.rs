//! Between-shot Bayesian optimization of stationary ECH heating profiles.
//!
//! A recurrent probabilistic dynamics model (`rpnn`) and a tearing-mode
//! classifier (`forest`) are rolled out over a grid of ECH parameters to build
//! a prior mean (`prior`) for a Gaussian process over time-to-tearing-mode
//! (`gp`). Contextual UCB (`bo`) then proposes the ECH profile for a target
//! normalized pressure, and the GP is updated between shots with the measured
//! inputs.
//!
//! Everything runs against a synthetic drifting tokamak (`plant`), replayed
//! offline (`replay`) or driven shot by shot through `service`.

pub mod actuation;
pub mod bo;
pub mod config;
pub mod ech;
pub mod forest;
pub mod gp;
pub mod error;
pub mod pipeline;
pub mod plant;
pub mod prior;
pub mod replay;
pub mod rng;
pub mod rpnn;
pub mod service;
pub mod workflow;

pub use ech::EchParams;
pub use error::{Error, Result};
