//! Experiment orchestration: threshold and penalty sweeps, curve smoothing,
//! run configuration and result files.

mod config;
mod export;
mod sweep;

pub use config::{DeploySection, PenaltySection, RunConfig, RunSection, OUT_DIR_ENV};
pub use export::{
    config_hash, read_curve, read_traces, read_variance_map, variance_map_text, write_curve, write_traces,
    write_variance_map, RunMeta,
};
pub use sweep::{
    default_c_grid, default_eps_grid, evaluate, max_table_variance, rolling_mean, sweep_penalty, sweep_threshold,
    PenaltySweep, SweepPoint,
};
