//! Constrained policy iteration: exact policy evaluation alternating with a
//! policy-improvement step whose argmax is restricted to actions that keep
//! the H-step constraint-violation value at zero under the current policy.

use super::dp::{policy_evaluation_exact, single_step_masks, value_at_initial};
use super::TabularError;
use crate::mdp::{ConstraintSpec, FiniteMdp, SafeSet, TabularPolicy, NO_VALUES};

/// One snapshot per improvement round.
#[derive(Debug, Clone)]
pub struct CpiIterate {
    pub policy: TabularPolicy,
    pub values: Vec<f64>,
    /// H-step expected violation count per state under this iterate's policy.
    pub violations: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CpiResult {
    pub policy: TabularPolicy,
    pub values: Vec<f64>,
    pub initial_value: f64,
    pub iterations: usize,
    pub history: Vec<CpiIterate>,
}

/// Runs constrained policy iteration to the fixed point.
///
/// The initial policy takes the lowest-index allowed action per state, which
/// is feasible by construction; every improvement step stays feasible because
/// candidate actions must have a zero `H`-step violation value. `horizon` is
/// the feasibility look-ahead `H >= 1`.
pub fn constrained_policy_iteration(
    mdp: &FiniteMdp,
    constraints: &[ConstraintSpec<usize>],
    horizon: usize,
) -> Result<CpiResult, TabularError> {
    assert!(horizon >= 1);
    if let Some(c) = constraints.iter().find(|c| c.is_multi_step()) {
        return Err(TabularError::MultiStepUnsupported(c.name.clone()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let masks = single_step_masks(mdp, constraints, &NO_VALUES, 0)?;

    let mut policy = TabularPolicy::new(
        masks.iter().map(|m| m.iter().next().expect("non-empty mask")).collect(),
    );
    let mut history = Vec::new();
    let max_rounds = 2 + ns * na;
    for round in 0..max_rounds {
        let values = policy_evaluation_exact(mdp, &policy)?;
        let j = violation_dp(mdp, &policy, &masks, horizon);
        history.push(CpiIterate {
            policy: policy.clone(),
            values: values.clone(),
            violations: j.last().expect("horizon >= 1").clone(),
        });

        // Candidate actions look one step ahead and charge the (H-1)-step
        // violation value of the current policy at the follow-up state.
        let j_hm1: Vec<f64> =
            if horizon == 1 { vec![0.0; ns] } else { j[horizon - 2].clone() };
        let mut next = Vec::with_capacity(ns);
        for s in 0..ns {
            if mdp.is_terminal(s) {
                next.push(policy.action(s));
                continue;
            }
            let feasible = feasible_actions(mdp, s, &masks, &j_hm1);
            let chosen = feasible
                .argmax(|a| {
                    mdp.r(s, a)
                        + mdp.gamma()
                            * mdp
                                .successors(s, a)
                                .map(|(s2, p)| p * values[s2])
                                .sum::<f64>()
                })
                // An infeasible corner (impossible from a feasible iterate)
                // keeps the incumbent action.
                .unwrap_or(policy.action(s));
            next.push(chosen);
        }
        let next = TabularPolicy::new(next);
        if next.actions == policy.actions {
            let initial_value = value_at_initial(mdp, &values);
            return Ok(CpiResult {
                policy,
                values,
                initial_value,
                iterations: round + 1,
                history,
            });
        }
        policy = next;
    }
    Err(TabularError::NoConvergence(max_rounds))
}

/// `j[h][s]` = expected number of masked-out actions the policy takes within
/// the next `h + 1` steps starting from `s` (truncated look-ahead, no
/// discounting). Terminal states never violate.
fn violation_dp(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    masks: &[SafeSet],
    horizon: usize,
) -> Vec<Vec<f64>> {
    let ns = mdp.n_states();
    let step_cost = |s: usize| -> f64 {
        if mdp.is_terminal(s) || masks[s].allows(policy.action(s)) {
            0.0
        } else {
            1.0
        }
    };
    let mut j = Vec::with_capacity(horizon);
    let mut prev = vec![0.0; ns];
    for _ in 0..horizon {
        let mut cur = vec![0.0; ns];
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            cur[s] = step_cost(s)
                + mdp
                    .successors(s, policy.action(s))
                    .map(|(s2, p)| p * prev[s2])
                    .sum::<f64>();
        }
        j.push(cur.clone());
        prev = cur;
    }
    j
}

/// Actions at `s` whose one-step violation plus expected `H-1`-step follow-up
/// violation is zero: allowed now, and every reachable follow-up state keeps
/// the current policy violation-free for the remaining look-ahead.
fn feasible_actions(
    mdp: &FiniteMdp,
    s: usize,
    masks: &[SafeSet],
    j_prev: &[f64],
) -> SafeSet {
    let na = mdp.n_actions();
    let mut set = SafeSet::none(na);
    for a in 0..na {
        let own = if masks[s].allows(a) { 0.0 } else { 1.0 };
        let follow: f64 = mdp.successors(s, a).map(|(s2, p)| p * j_prev[s2]).sum();
        if own + follow <= 1e-9 {
            set.set(a, true);
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{DeterministicMdpBuilder, Direction, Priority};

    #[test]
    fn unconstrained_cpi_is_plain_policy_iteration() {
        // 0 --a0--> 1 --> 3(+5), 0 --a1--> 2 --> 3(+1)
        let mut b = DeterministicMdpBuilder::new(4, 2, 1.0);
        b.edge(0, 0, 1, 0.0);
        b.edge(0, 1, 2, 0.0);
        b.chain(1, 3, 5.0);
        b.chain(2, 3, 1.0);
        b.terminal(3);
        b.start(0);
        let mdp = b.build().unwrap();
        let res = constrained_policy_iteration(&mdp, &[], 1).unwrap();
        assert_eq!(res.policy.action(0), 0);
        assert_eq!(res.initial_value, 5.0);
    }

    #[test]
    fn every_iterate_is_feasible_from_a_feasible_start() {
        // Banning the lucrative arm keeps all iterates violation-free.
        let mut b = DeterministicMdpBuilder::new(4, 2, 1.0);
        b.edge(0, 0, 1, 0.0);
        b.edge(0, 1, 2, 0.0);
        b.chain(1, 3, 5.0);
        b.chain(2, 3, 1.0);
        b.terminal(3);
        b.start(0);
        let mdp = b.build().unwrap();
        let ban = ConstraintSpec::single_step(
            "no-upper-arm",
            |s: &usize, a| if *s == 0 && a == 0 { 1.0 } else { 0.0 },
            0.0,
            Direction::AtMost,
            Priority::Safety,
        );
        let res = constrained_policy_iteration(&mdp, &[ban], 2).unwrap();
        assert_eq!(res.policy.action(0), 1);
        assert_eq!(res.initial_value, 1.0);
        for it in &res.history {
            for s in 0..4 {
                assert!(it.violations[s].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn multi_step_constraints_are_rejected() {
        let mut b = DeterministicMdpBuilder::new(2, 1, 1.0);
        b.edge(0, 0, 1, 0.0);
        b.terminal(1);
        b.start(0);
        let mdp = b.build().unwrap();
        let c: ConstraintSpec<usize> = ConstraintSpec::multi_step(
            "comfort",
            3,
            |_: &crate::mdp::Step<usize>| 0.0,
            1.0,
            Direction::AtMost,
            Priority::Regular,
        );
        assert!(matches!(
            constrained_policy_iteration(&mdp, &[c], 1),
            Err(TabularError::MultiStepUnsupported(_))
        ));
    }
}
