//! Experiment runner: batch runs, comparison tables, front plots and replay
//! verification on top of `cmoforge-core`.

pub mod catalog;
pub mod compare;
pub mod config;
pub mod front;
pub mod run;
pub mod verify;

pub use catalog::cmd_list_problems;
pub use compare::cmd_compare;
pub use config::{BackendSpec, ExperimentConfig};
pub use front::cmd_front;
pub use run::{cmd_run, RunEnv};
pub use verify::cmd_replay_verify;
