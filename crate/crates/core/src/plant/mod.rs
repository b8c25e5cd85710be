//! Synthetic tokamak: saturating affine dynamics, a logistic tearing hazard
//! that ECH deposited at the rational surface suppresses, per-campaign drift
//! and shot execution with actuator noise.

pub mod config;
pub mod corpus;
pub mod dynamics;
pub mod shot;

pub use config::PlantConfig;
pub use corpus::{generate_corpus, load_corpus, save_corpus};
pub use dynamics::{drift, hazard, step, PlantState};
pub use shot::{run_shot, ShotRequest};
