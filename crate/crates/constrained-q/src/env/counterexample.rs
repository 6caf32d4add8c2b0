//! A 12-state deterministic task where enforcing constraints only at policy
//! extraction is strictly worse than enforcing them inside the learning
//! update.
//!
//! ```text
//!                a0           a0
//! s0 --> s1 ----------> s2 --> s4 ----> s6* --> s9   (+3, terminal)
//!          \                     \ a1
//!           \ a1                  `---> s7  --> s10  (+1, terminal)
//!            `--> s3 --> s5 --> s8 ---> s11          (+2, terminal)
//! ```
//!
//! State `s6` is unsafe; the constraint forbids the action entering it. All
//! rewards sit on the final edge, the discount is 1.
//!
//! - The unconstrained optimum runs through `s6` and earns **+3**.
//! - Masking the greedy policy of unconstrained Q-values at extraction time
//!   still prefers the upper branch at `s1` (its value estimate, +3, never
//!   heard about the mask), gets rerouted at `s4`, and earns **+1**.
//! - Learning with the masked bootstrap values the upper branch at what is
//!   actually reachable under the constraint (+1), takes the lower branch at
//!   `s1`, and earns **+2** — the constrained optimum.

use crate::mdp::{ConstraintSpec, DeterministicMdpBuilder, Direction, FiniteMdp, Priority};

/// State whose entry violates the safety constraint.
pub const UNSAFE_STATE: usize = 6;
/// Decision state where the unsafe action is available.
pub const GATE_STATE: usize = 4;
/// Decision state where the two branches separate.
pub const BRANCH_STATE: usize = 1;

/// Return of the unconstrained optimal policy.
pub const RETURN_UNCONSTRAINED: f64 = 3.0;
/// Return when constraints are applied only at policy extraction.
pub const RETURN_MASKED_EXTRACTION: f64 = 1.0;
/// Return of the constrained optimum.
pub const RETURN_CONSTRAINED: f64 = 2.0;

/// Builds the task and its single safety constraint.
pub fn build() -> (FiniteMdp, Vec<ConstraintSpec<usize>>) {
    let mut b = DeterministicMdpBuilder::new(12, 2, 1.0);
    b.chain(0, 1, 0.0);
    b.edge(1, 0, 2, 0.0); // upper branch
    b.edge(1, 1, 3, 0.0); // lower branch
    b.chain(2, 4, 0.0);
    b.edge(4, 0, 6, 0.0); // into the unsafe state
    b.edge(4, 1, 7, 0.0); // safe continuation
    b.chain(6, 9, 3.0);
    b.chain(7, 10, 1.0);
    b.chain(3, 5, 0.0);
    b.chain(5, 8, 0.0);
    b.chain(8, 11, 2.0);
    b.terminal(9);
    b.terminal(10);
    b.terminal(11);
    b.start(0);
    let mdp = b.build().expect("hand-built task is valid");
    let avoid = ConstraintSpec::single_step(
        "avoid-unsafe",
        |s: &usize, a| {
            if *s == GATE_STATE && a == 0 {
                1.0
            } else {
                0.0
            }
        },
        0.0,
        Direction::AtMost,
        Priority::Safety,
    );
    (mdp, vec![avoid])
}
