//! The headline demo: four learners on the 12-state branching task, printed
//! as a small table. With the safety rule active the three constraint
//! treatments split into returns 3 / 1 / 2; with it disabled everything
//! collapses to the unconstrained optimum.

use crate::env::counterexample;
use crate::mdp::{extract_policy_spe, ConstraintSpec, FiniteMdp, SafeSet, TabularPolicy, NO_VALUES};
use crate::tabular::cpi::constrained_policy_iteration;
use crate::tabular::dp::single_step_masks;
use crate::tabular::training::{
    eval_policy, run_tabular_training, EvalMode, TabularAlgo, TrainParams,
};
use anyhow::{Context, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: String,
    /// Undiscounted return of one greedy rollout from the start state.
    pub rollout_return: f64,
    /// Terminal state the rollout reached.
    pub terminal_state: usize,
    /// Whether the rollout ever took a rule-violating action.
    pub violated: bool,
}

#[derive(Debug, Clone)]
pub struct Fig3Report {
    pub constrained: bool,
    pub rows: Vec<MethodOutcome>,
}

impl Fig3Report {
    /// Lines suitable for printing; one row per method.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:>8} {:>10} {:>9}\n",
            "method", "return", "terminal", "violated"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<22} {:>8.1} {:>10} {:>9}\n",
                r.method, r.rollout_return, r.terminal_state, r.violated
            ));
        }
        out
    }
}

/// Follows `policy` from the start state until a terminal state, summing
/// undiscounted rewards and flagging any constraint-violating action.
fn rollout(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
    constraints: &[ConstraintSpec<usize>],
) -> (f64, usize, bool) {
    // The task is deterministic; the RNG only resolves the point-mass draws.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut s = mdp.sample_initial(&mut rng);
    let mut total = 0.0;
    let mut violated = false;
    for _ in 0..1000 {
        if mdp.is_terminal(s) {
            break;
        }
        let a = policy.action(s);
        violated |= constraints.iter().any(|c| c.violates_single_step(&s, a));
        let (next, r, _) = mdp.sample_next(s, a, &mut rng);
        total += r;
        s = next;
    }
    (total, s, violated)
}

/// Trains and solves all four treatments. `constrained` switches the safety
/// rule on; the returned rows keep a fixed order: plain Q-learning, safe
/// policy extraction on the same table, constrained Q-learning, constrained
/// policy iteration.
pub fn run_fig3_demo(constrained: bool, seed: u64) -> Result<Fig3Report> {
    let (mdp, all_rules) = counterexample::build();
    let rules: Vec<ConstraintSpec<usize>> = if constrained { all_rules } else { Vec::new() };

    // The short +2 branch is found almost immediately; reaching the deeper
    // prize against a settled greedy preference needs real exploration
    // pressure, so the demo runs hotter and longer than the defaults.
    let params = TrainParams {
        episodes: 3000,
        max_steps: 50,
        epsilon: 0.3,
        stop_after_stable: false,
        ..TrainParams::default()
    };

    // Plain Q-learning: constraints ignored during training and evaluation.
    let plain = run_tabular_training(&mdp, &[], TabularAlgo::QLearning, EvalMode::Greedy, &params, seed)
        .context("plain Q-learning run")?;
    let masks = single_step_masks(&mdp, &rules, &NO_VALUES, 0).context("building masks")?;
    let full = SafeSet::all(mdp.n_actions());
    let greedy = eval_policy(&plain.q, EvalMode::Greedy, &masks, &full);

    // Safe policy extraction: same value table, argmax masked after the fact.
    let spe = extract_policy_spe(
        mdp.n_states(),
        mdp.n_actions(),
        |s, a| plain.q.get(s, a),
        &rules,
        &NO_VALUES,
        0,
    )
    .context("masked extraction")?;

    // Constrained Q-learning: the mask shapes the bootstrap during training.
    let cql = run_tabular_training(
        &mdp,
        &rules,
        TabularAlgo::ConstrainedQ,
        EvalMode::Masked,
        &params,
        seed,
    )
    .context("constrained Q-learning run")?;
    let cql_policy = eval_policy(&cql.q, EvalMode::Masked, &masks, &full);

    // Constrained policy iteration: exact, no sampling at all.
    let cpi = constrained_policy_iteration(&mdp, &rules, 1).context("policy iteration")?;

    let mut rows = Vec::new();
    for (name, policy) in [
        ("q-learning", &greedy),
        ("safe-extraction", &spe),
        ("constrained-q", &cql_policy),
        ("constrained-iteration", &cpi.policy),
    ] {
        let (ret, terminal, violated) = rollout(&mdp, policy, &rules);
        rows.push(MethodOutcome {
            method: name.to_string(),
            rollout_return: ret,
            terminal_state: terminal,
            violated,
        });
    }
    Ok(Fig3Report { constrained, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constrained_run_splits_three_one_two() {
        let report = run_fig3_demo(true, 0).unwrap();
        let returns: Vec<f64> = report.rows.iter().map(|r| r.rollout_return).collect();
        assert_eq!(returns, vec![3.0, 1.0, 2.0, 2.0]);
        // Only the unconstrained learner drives through the unsafe state.
        let violated: Vec<bool> = report.rows.iter().map(|r| r.violated).collect();
        assert_eq!(violated, vec![true, false, false, false]);
    }

    #[test]
    fn disabling_the_rule_collapses_everything_to_the_prize() {
        let report = run_fig3_demo(false, 0).unwrap();
        for row in &report.rows {
            assert_eq!(row.rollout_return, 3.0, "{} fell short", row.method);
            assert!(!row.violated);
        }
    }

    #[test]
    fn render_produces_one_line_per_method_plus_header() {
        let report = run_fig3_demo(true, 0).unwrap();
        let text = report.render();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("constrained-q"));
    }
}
