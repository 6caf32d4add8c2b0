//! Constrained reinforcement learning on finite and continuous-state tasks.
//!
//! The core idea: instead of folding constraints into the reward, restrict the
//! bootstrap maximum and the extracted greedy policy to the set of actions that
//! satisfy every constraint. The crate provides
//!
//! - [`mdp`]: finite MDPs, constraint specifications, safe-set computation and
//!   safe policy extraction,
//! - [`tabular`]: Q-learning with constrained updates, truncated multi-step
//!   constraint values, constrained policy iteration and exact oracles,
//! - [`env`]: benchmark environments (a hand-built counter-example, a branching
//!   tree family, and a ring-road highway with IDM longitudinal dynamics),
//! - [`highway_constraints`]: safety, keep-right and comfort signals for the
//!   highway task,
//! - [`deep`]: a small hand-rolled neural stack (set encoder + multi-head Q/J
//!   outputs) with constrained DQN updates, baselines and evaluation,
//! - [`harness`]: experiment drivers, config files and CSV/checkpoint output.
//!
//! # Example
//!
//! ```
//! use constrained_q::env::counterexample;
//! use constrained_q::tabular::cpi::constrained_policy_iteration;
//!
//! let (mdp, constraints) = counterexample::build();
//! let result = constrained_policy_iteration(&mdp, &constraints, 3).unwrap();
//! // The unconstrained optimum passes through an unsafe state and earns +3;
//! // masking only at extraction earns +1; planning with constraints earns +2.
//! assert_eq!(result.values[0], 2.0);
//! ```

pub mod deep;
pub mod env;
pub mod harness;
pub mod highway_constraints;
pub mod mdp;
pub mod tabular;

pub use mdp::{ConstraintSpec, FiniteMdp, SafeSet, TabularPolicy};
