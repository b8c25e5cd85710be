//! Trajectories to model data: flat-top extraction, per-channel PCA, Gaussian
//! ECH fits, shot summaries for the GP and step features for the dynamics
//! model and classifier.

pub mod ech_fit;
pub mod features;
pub mod flat_top;
pub mod pca;
pub mod summary;
pub mod trajectory;

pub use ech_fit::{fit_ech_gaussian, EchFit};
pub use features::{FeatureMap, ShotSequence};
pub use flat_top::extract_flat_top;
pub use pca::{fit_pca, PcaBasis};
pub use summary::{build_gp_dataset, read_gp_csv, summarize_shot, write_gp_csv, ShotSummary};
pub use trajectory::{Trajectory, TrajectorySet};
