//! Experiment drivers: configuration, the branching-task demo, the ladder
//! sweep, deep training on the highway, random penalty search, and tidy
//! plot-data export. The `cq` binary is a thin shell over these functions.

pub mod config;
pub mod fig3;
pub mod highway;
pub mod plotdata;
pub mod search;
pub mod stats;
pub mod tree;

pub use config::{ExperimentConfig, SearchConfig, TrainConfig, TrainMethod, TreeConfig};
