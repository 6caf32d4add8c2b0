//! Function approximation for the constrained learning rules.
//!
//! Everything here is hand-rolled on flat `f64` vectors: a permutation-
//! invariant set network for highway observations, a bias-free linear net
//! whose one-hot behavior matches tabular learning exactly, plain SGD and
//! Adam, Polyak-averaged target parameters, gradient checking against
//! central finite differences, frozen replay batches with content checksums,
//! and binary checkpoints. The update rules mirror the tabular module: the
//! constrained rule masks the bootstrap, the baselines shape the loss or the
//! reward instead.

pub mod checkpoint;
pub mod encode;
pub mod eval;
pub mod gradcheck;
pub mod net;
pub mod optim;
pub mod replay;
pub mod update;

use crate::env::highway::HighwayError;
use crate::mdp::ConstraintError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeepError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Highway(#[from] HighwayError),
    #[error("loss became non-finite at update {update}")]
    NonFiniteLoss { update: usize },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
