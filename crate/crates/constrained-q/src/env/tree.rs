//! A depth-parameterized family of tasks where masking only at extraction
//! stays suboptimal and the price of learning without masks grows with depth.
//!
//! ```text
//! start --> branch --a0--> c --> d_1 --a0--> u_1* --> t_1  (+depth+2)
//!             |                   | a1
//!             | a1                d_2 --a0--> u_2* --> t_2  (+depth+1)
//!             |                   | a1
//!             |                  ...
//!             |                  d_depth --a0--> u_depth* --> t_depth (+3)
//!             |                   | a1
//!             |                   w --> w_T                 (+1)
//!             `--> b_1 --> b_2 --> b_3 --> b_T              (+2)
//! ```
//!
//! Every `u_i` is unsafe. The corridor offers `depth` increasingly guarded
//! prizes (the shallowest pays `depth + 2`, the deepest `3`), its fully safe
//! continuation pays only `1`, and the safe lower branch pays `2`. The
//! constrained optimum is therefore always the lower branch. A learner that
//! ignores constraints during training must discover, one decision state at a
//! time, that the corridor's prizes are off limits; a learner that masks its
//! bootstrap values never considers them in the first place. Depth 1
//! reproduces the 12-state counter-example exactly, up to state numbering.

use crate::mdp::{ConstraintSpec, DeterministicMdpBuilder, Direction, FiniteMdp, Priority};

#[derive(Debug, Clone)]
pub struct TreeTask {
    pub mdp: FiniteMdp,
    pub constraints: Vec<ConstraintSpec<usize>>,
    pub depth: usize,
    /// The state where the corridor and the lower branch separate.
    pub branch_state: usize,
    /// Corridor decision states `d_1..d_depth` in order.
    pub decision_states: Vec<usize>,
    /// Unsafe states `u_1..u_depth` in order.
    pub unsafe_states: Vec<usize>,
    /// Return of the unconstrained optimum (`depth + 2`).
    pub unconstrained_return: f64,
    /// Return when constraints apply only at policy extraction (always 1).
    pub masked_extraction_return: f64,
    /// Return of the constrained optimum (always 2).
    pub constrained_return: f64,
}

/// Builds the ladder task with `depth >= 1` corridor decisions.
///
/// State layout: `0` start, `1` branch, `2` corridor entry, `2 + i` is `d_i`,
/// `2 + depth + i` is `u_i`, `2 + 2 * depth + i` is `t_i` (1-based `i`), then
/// `w`, `w_T`, `b_1`, `b_2`, `b_3`, `b_T`. Total `9 + 3 * depth` states. At a
/// decision state, action 0 takes the prize through the unsafe state and
/// action 1 continues safely.
pub fn build(depth: usize) -> TreeTask {
    assert!(depth >= 1, "depth must be at least 1");
    let d = |i: usize| 2 + i; // 1-based
    let u = |i: usize| 2 + depth + i;
    let t = |i: usize| 2 + 2 * depth + i;
    let w = 3 + 3 * depth;
    let w_t = w + 1;
    let b1 = w + 2;
    let b_t = w + 5;
    let n_states = 9 + 3 * depth;

    let mut b = DeterministicMdpBuilder::new(n_states, 2, 1.0);
    b.chain(0, 1, 0.0);
    b.edge(1, 0, 2, 0.0);
    b.edge(1, 1, b1, 0.0);
    b.chain(2, d(1), 0.0);
    for i in 1..=depth {
        let prize = (depth + 2 - (i - 1)) as f64;
        b.edge(d(i), 0, u(i), 0.0);
        b.chain(u(i), t(i), prize);
        b.terminal(t(i));
        let safe_next = if i < depth { d(i + 1) } else { w };
        b.edge(d(i), 1, safe_next, 0.0);
    }
    b.chain(w, w_t, 1.0);
    b.terminal(w_t);
    b.chain(b1, b1 + 1, 0.0);
    b.chain(b1 + 1, b1 + 2, 0.0);
    b.chain(b1 + 2, b_t, 2.0);
    b.terminal(b_t);
    b.start(0);
    let mdp = b.build().expect("ladder construction is valid");

    let first_d = d(1);
    let last_d = d(depth);
    let avoid = ConstraintSpec::single_step(
        "avoid-unsafe",
        move |s: &usize, a| {
            if (first_d..=last_d).contains(s) && a == 0 {
                1.0
            } else {
                0.0
            }
        },
        0.0,
        Direction::AtMost,
        Priority::Safety,
    );

    TreeTask {
        mdp,
        constraints: vec![avoid],
        depth,
        branch_state: 1,
        decision_states: (1..=depth).map(d).collect(),
        unsafe_states: (1..=depth).map(u).collect(),
        unconstrained_return: (depth + 2) as f64,
        masked_extraction_return: 1.0,
        constrained_return: 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{extract_policy_spe, NO_VALUES};
    use crate::tabular::dp::{
        full_masks, greedy_policy, masked_value_iteration, policy_evaluation_exact,
        single_step_masks, value_at_initial,
    };

    fn returns_at(depth: usize) -> (f64, f64, f64) {
        let task = build(depth);
        let mdp = &task.mdp;
        let full = full_masks(mdp);
        let q_free = masked_value_iteration(mdp, &full, 1e-12, 100_000).unwrap();
        let free = greedy_policy(&q_free, &full, 2);
        let v_free =
            value_at_initial(mdp, &policy_evaluation_exact(mdp, &free).unwrap());

        let spe = extract_policy_spe(
            mdp.n_states(),
            2,
            |s, a| q_free[s * 2 + a],
            &task.constraints,
            &NO_VALUES,
            0,
        )
        .unwrap();
        let v_spe = value_at_initial(mdp, &policy_evaluation_exact(mdp, &spe).unwrap());

        let masks = single_step_masks(mdp, &task.constraints, &NO_VALUES, 0).unwrap();
        let q_masked = masked_value_iteration(mdp, &masks, 1e-12, 100_000).unwrap();
        let constrained = greedy_policy(&q_masked, &masks, 2);
        let v_con =
            value_at_initial(mdp, &policy_evaluation_exact(mdp, &constrained).unwrap());
        (v_free, v_spe, v_con)
    }

    #[test]
    fn depth_one_matches_the_counterexample_returns() {
        let task = build(1);
        assert_eq!(task.mdp.n_states(), 12);
        let (free, spe, con) = returns_at(1);
        assert_eq!(free, 3.0);
        assert_eq!(spe, 1.0);
        assert_eq!(con, 2.0);
    }

    #[test]
    fn extraction_masking_stays_stuck_at_one_for_every_depth() {
        for depth in [1, 2, 3, 5, 10] {
            let (free, spe, con) = returns_at(depth);
            assert_eq!(free, (depth + 2) as f64, "depth {depth}");
            assert_eq!(spe, 1.0, "depth {depth}");
            assert_eq!(con, 2.0, "depth {depth}");
        }
    }

    #[test]
    fn prizes_decrease_with_depth_and_guard_every_shortcut() {
        let task = build(4);
        let mdp = &task.mdp;
        // Each decision state's unsafe action leads to its own unsafe state.
        for (i, (&d, &u)) in
            task.decision_states.iter().zip(&task.unsafe_states).enumerate()
        {
            assert_eq!(mdp.successors(d, 0).next().unwrap().0, u);
            let c = &task.constraints[0];
            assert!(c.violates_single_step(&d, 0), "d_{}", i + 1);
            assert!(!c.violates_single_step(&d, 1), "d_{}", i + 1);
        }
    }
}
