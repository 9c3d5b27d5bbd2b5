//! Tabular return and second-moment estimators and the expert-free training loop.

mod policy;
mod table;
mod table_file;
mod train;
mod update;

pub use policy::{GreedyPolicy, Policy};
pub use table::{ValueTable, MAX_ACTIONS};
pub use table_file::{TableFile, TableMeta};
pub(crate) use train::run_q_learning;
pub use train::{evaluate_policy, train, AlphaMode, TrainConfig, Trained, TrainingLog};
pub use update::{
    greedy_action, greedy_variance, m_target, m_update, q_target, q_update, variance, MUpdateMode, Transition,
};
