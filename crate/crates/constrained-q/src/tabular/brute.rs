//! Brute-force constrained optimum: enumerate every deterministic policy
//! whose actions are mask-allowed, verify feasibility with the same H-step
//! violation recursion the iterative solver uses, and evaluate each exactly.
//! Slow by design; this is the ground truth the solvers are compared to.

use super::dp::{policy_evaluation_exact, single_step_masks, value_at_initial};
use super::TabularError;
use crate::mdp::{ConstraintSpec, FiniteMdp, TabularPolicy, NO_VALUES};

const MAX_CANDIDATES: f64 = 1e7;

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    /// Policy with the highest initial-state value among feasible policies.
    pub policy: TabularPolicy,
    pub initial_value: f64,
    /// Per-state maximum value over all feasible policies (the per-state
    /// optimum need not come from a single policy in general).
    pub per_state_best: Vec<f64>,
    pub feasible_count: usize,
}

pub fn brute_force_constrained_optimum(
    mdp: &FiniteMdp,
    constraints: &[ConstraintSpec<usize>],
    horizon: usize,
) -> Result<BruteForceResult, TabularError> {
    assert!(horizon >= 1);
    if let Some(c) = constraints.iter().find(|c| c.is_multi_step()) {
        return Err(TabularError::MultiStepUnsupported(c.name.clone()));
    }
    let ns = mdp.n_states();
    let masks = single_step_masks(mdp, constraints, &NO_VALUES, 0)?;
    // Terminal-state actions are irrelevant; pin them to 0 to shrink the
    // product space.
    let choices: Vec<Vec<usize>> = (0..ns)
        .map(|s| if mdp.is_terminal(s) { vec![0] } else { masks[s].iter().collect() })
        .collect();
    let total: f64 = choices.iter().map(|c| c.len() as f64).product();
    if total > MAX_CANDIDATES {
        return Err(TabularError::TooManyPolicies(total));
    }

    let mut odometer = vec![0usize; ns];
    let mut best: Option<(TabularPolicy, f64)> = None;
    let mut per_state_best = vec![f64::NEG_INFINITY; ns];
    let mut feasible_count = 0usize;
    loop {
        let policy = TabularPolicy::new(
            odometer.iter().zip(&choices).map(|(&i, c)| c[i]).collect(),
        );
        if is_feasible(mdp, &policy, &masks, horizon) {
            feasible_count += 1;
            let v = policy_evaluation_exact(mdp, &policy)?;
            for s in 0..ns {
                per_state_best[s] = per_state_best[s].max(v[s]);
            }
            let at_init = value_at_initial(mdp, &v);
            let better = match &best {
                None => true,
                Some((_, incumbent)) => at_init > *incumbent,
            };
            if better {
                best = Some((policy, at_init));
            }
        }
        // Advance the odometer; the first policy found at the best value is
        // kept, so ties resolve toward lexicographically-lowest actions.
        let mut pos = ns;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            odometer[pos] += 1;
            if odometer[pos] < choices[pos].len() {
                break;
            }
            odometer[pos] = 0;
            if pos == 0 {
                let (policy, initial_value) = best.expect(
                    "mask fallback guarantees at least one feasible policy",
                );
                return Ok(BruteForceResult {
                    policy,
                    initial_value,
                    per_state_best,
                    feasible_count,
                });
            }
        }
    }
}

/// A policy is feasible when its H-step expected violation value is zero in
/// every state: it never takes a masked-out action, nor reaches (within the
/// look-ahead) a state where it would.
fn is_feasible(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    masks: &[crate::mdp::SafeSet],
    horizon: usize,
) -> bool {
    let ns = mdp.n_states();
    let mut prev = vec![0.0; ns];
    for _ in 0..horizon {
        let mut cur = vec![0.0; ns];
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            let own = if masks[s].allows(policy.action(s)) { 0.0 } else { 1.0 };
            cur[s] = own
                + mdp
                    .successors(s, policy.action(s))
                    .map(|(s2, p)| p * prev[s2])
                    .sum::<f64>();
        }
        prev = cur;
    }
    prev.iter().all(|&x| x <= 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{DeterministicMdpBuilder, Direction, Priority};

    #[test]
    fn enumeration_picks_the_allowed_arm() {
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
        let res = brute_force_constrained_optimum(&mdp, &[ban], 1).unwrap();
        assert_eq!(res.policy.action(0), 1);
        assert_eq!(res.initial_value, 1.0);
        let unconstrained = brute_force_constrained_optimum(&mdp, &[], 1).unwrap();
        assert_eq!(unconstrained.initial_value, 5.0);
        assert!(unconstrained.feasible_count > res.feasible_count);
    }

    #[test]
    fn oversized_policy_space_is_refused() {
        let mut b = DeterministicMdpBuilder::new(30, 8, 0.9);
        for s in 0..29 {
            for a in 0..8 {
                b.edge(s, a, s + 1, 0.0);
            }
        }
        b.terminal(29);
        b.start(0);
        let mdp = b.build().unwrap();
        assert!(matches!(
            brute_force_constrained_optimum(&mdp, &[], 1),
            Err(TabularError::TooManyPolicies(_))
        ));
    }
}
