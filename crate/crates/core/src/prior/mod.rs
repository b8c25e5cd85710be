//! Prior mean for the GP: Monte-Carlo time to the first predicted tearing
//! mode from dynamics-model rollouts, tabulated over an ECH grid and pressure
//! bins.

pub mod grid;
pub mod table;

pub use grid::{EchGrid, DEFAULT_RESOLUTION};
pub use table::{
    build_prior_table, estimate_time_to_tm, read_audit, tabulate, trip_time, BetaBins, CellSource, Estimate,
    PriorBuild, PriorCell, PriorConfig, PriorTable, RolloutOutcome, RolloutRecord, Schedule, TRIP_THRESHOLD,
};
