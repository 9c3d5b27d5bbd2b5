//! Tabular agents that learn the variance of their return alongside its mean,
//! and use it at deployment to decide when to hand control to an expert.
//!
//! The crate is organised around the experiment pipeline:
//!
//! - [`env`]: slippery gridworlds with full-state or 5x5-patch observations.
//! - [`expert`]: a value-iteration expert that plans on slip-free dynamics.
//! - [`learner`]: Q and second-moment tables trained without any expert.
//! - [`agent`]: the variance-threshold agent and the call-penalty baseline.
//! - [`oracle`]: exact and Monte-Carlo ground truth for return variance.
//! - [`harness`]: sweeps, curve smoothing and result files.
//! - [`service`]: step-by-step episode sessions driven by a remote expert.

pub mod agent;
pub mod env;
mod error;
pub mod expert;
pub mod harness;
pub mod learner;
pub mod maps;
pub mod oracle;
mod seed;
pub mod service;

pub use error::{Error, Result};

pub use env::{Action, EnvParams, GridMap, GridWorld, ObsKey, ObservationMode, Pos};
pub use learner::{TrainConfig, ValueTable};
