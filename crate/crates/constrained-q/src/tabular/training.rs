//! Episodic tabular training with convergence detection.
//!
//! A run trains one algorithm on one MDP and, after every episode, extracts
//! the evaluation policy and checks it against the exact constrained optimum.
//! Convergence is the first episode that starts a window of `k_stable`
//! consecutive optimal evaluations.

use super::dp::{
    full_masks, masked_value_iteration, optimal_action_sets, policy_evaluation_exact,
    single_step_masks, value_at_initial,
};
use super::{q_learning_step, QTable, TabularError};
use crate::mdp::{ConstraintSpec, FiniteMdp, SafeSet, Step, TabularPolicy, NO_VALUES};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TabularAlgo {
    /// Plain Q-learning; constraints are ignored during training.
    QLearning,
    /// Constrained Q-learning: masked bootstrap max, masked behavior greedy.
    ConstrainedQ,
    /// Plain Q-learning on a shaped reward that subtracts `penalty` per
    /// violated constraint at the taken action.
    RewardShaped { penalty: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Greedy over the full action set.
    Greedy,
    /// Greedy restricted to the per-state safe set.
    Masked,
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub episodes: usize,
    pub max_steps: usize,
    pub epsilon: f64,
    pub alpha: f64,
    /// Consecutive optimal evaluations required to declare convergence.
    pub k_stable: usize,
    /// Stop the run once convergence is confirmed.
    pub stop_after_stable: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            episodes: 4000,
            max_steps: 200,
            epsilon: 0.1,
            alpha: 0.1,
            k_stable: 50,
            stop_after_stable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Cumulative environment transitions at the end of this episode.
    pub samples: usize,
    /// Exact value of the current evaluation policy from the start state.
    pub eval_return: f64,
    /// Whether the evaluation policy is optimal in every non-terminal state.
    pub is_optimal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    /// First episode of the confirmed stable window.
    pub episode: usize,
    /// Cumulative transitions when that episode ended.
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<EpisodeRecord>,
    pub convergence: Option<Convergence>,
    pub q: QTable,
    pub episodes_run: usize,
}

/// Highest expected return achievable from the start state, ignoring all
/// constraints. Useful for sizing shaped penalties.
pub fn max_achievable_return(mdp: &FiniteMdp) -> Result<f64, TabularError> {
    let q = masked_value_iteration(mdp, &full_masks(mdp), 1e-12, 100_000)?;
    let na = mdp.n_actions();
    let v: Vec<f64> = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else {
                (0..na).map(|a| q[s * na + a]).fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    Ok(value_at_initial(mdp, &v))
}

pub fn run_tabular_training(
    mdp: &FiniteMdp,
    constraints: &[ConstraintSpec<usize>],
    algo: TabularAlgo,
    eval_mode: EvalMode,
    params: &TrainParams,
    seed: u64,
) -> Result<TrainOutcome, TabularError> {
    if let Some(c) = constraints.iter().find(|c| c.is_multi_step()) {
        return Err(TabularError::MultiStepUnsupported(c.name.clone()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let masks = single_step_masks(mdp, constraints, &NO_VALUES, 0)?;
    let full = SafeSet::all(na);
    // The yardstick: action sets of the exact constrained optimum.
    let optimal_sets = optimal_action_sets(mdp, &masks, 1e-9)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable::zeros(ns, na);
    let mut records = Vec::with_capacity(params.episodes);
    let mut convergence = None;
    let mut streak = 0usize;
    let mut window_start: Option<Convergence> = None;
    let mut samples = 0usize;
    // Exact evaluation is only recomputed when the policy changes.
    let mut cached: Option<(Vec<usize>, f64)> = None;
    let mut episodes_run = 0usize;

    for episode in 0..params.episodes {
        episodes_run = episode + 1;
        let mut s = mdp.sample_initial(&mut rng);
        for _ in 0..params.max_steps {
            let a = behavior_action(&q, s, &full, params.epsilon, &mut rng);
            let (next, reward, terminal) = mdp.sample_next(s, a, &mut rng);
            samples += 1;
            let step = Step { state: s, action: a, reward, next, terminal };
            apply_update(&mut q, &step, algo, constraints, params.alpha, mdp.gamma());
            if terminal {
                break;
            }
            s = next;
        }

        let policy = eval_policy(&q, eval_mode, &masks, &full);
        let eval_return = match &cached {
            Some((actions, value)) if *actions == policy.actions => *value,
            _ => {
                let v = policy_evaluation_exact(mdp, &policy)?;
                let value = value_at_initial(mdp, &v);
                cached = Some((policy.actions.clone(), value));
                value
            }
        };
        let is_optimal = (0..ns)
            .filter(|&s| !mdp.is_terminal(s))
            .all(|s| optimal_sets[s].contains(&policy.action(s)));
        records.push(EpisodeRecord { episode, samples, eval_return, is_optimal });

        if is_optimal {
            if streak == 0 {
                window_start = Some(Convergence { episode, samples });
            }
            streak += 1;
            if streak >= params.k_stable && convergence.is_none() {
                convergence = window_start;
                if params.stop_after_stable {
                    break;
                }
            }
        } else {
            streak = 0;
            window_start = None;
        }
    }

    Ok(TrainOutcome { records, convergence, q, episodes_run })
}

/// Epsilon-greedy behavior over the full action set, with exact ties broken
/// uniformly at random. Deliberately identical for every algorithm:
/// constraints shape the update target and the extracted policy, never the
/// data-collection policy, which keeps the comparison off-policy and fair.
fn behavior_action(
    q: &QTable,
    s: usize,
    full: &SafeSet,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> usize {
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q.n_actions());
    }
    let best = full.max_value(|a| q.get(s, a)).expect("non-empty action set");
    let ties: Vec<usize> = full.iter().filter(|&a| q.get(s, a) == best).collect();
    ties[rng.gen_range(0..ties.len())]
}

fn apply_update(
    q: &mut QTable,
    step: &Step<usize>,
    algo: TabularAlgo,
    constraints: &[ConstraintSpec<usize>],
    alpha: f64,
    gamma: f64,
) {
    match algo {
        TabularAlgo::QLearning => q_learning_step(q, step, alpha, gamma),
        TabularAlgo::ConstrainedQ => {
            super::constrained_q_step(q, step, constraints, &NO_VALUES, alpha, gamma, 0)
                .expect("single-step constraints cannot fail")
        }
        TabularAlgo::RewardShaped { penalty } => {
            let violations = constraints
                .iter()
                .filter(|c| c.violates_single_step(&step.state, step.action))
                .count() as f64;
            let shaped = Step { reward: step.reward - penalty * violations, ..*step };
            q_learning_step(q, &shaped, alpha, gamma)
        }
    }
}

pub fn eval_policy(
    q: &QTable,
    mode: EvalMode,
    masks: &[SafeSet],
    full: &SafeSet,
) -> TabularPolicy {
    let actions = (0..q.n_states())
        .map(|s| {
            let set = match mode {
                EvalMode::Greedy => full,
                EvalMode::Masked => &masks[s],
            };
            set.argmax(|a| q.get(s, a)).expect("non-empty action set")
        })
        .collect();
    TabularPolicy::new(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{DeterministicMdpBuilder, Direction, Priority};

    fn forked_chain() -> (FiniteMdp, Vec<ConstraintSpec<usize>>) {
        // 0 --a0--> 1 --> 3(+5), 0 --a1--> 2 --> 3(+1); arm 0 is forbidden.
        let mut b = DeterministicMdpBuilder::new(4, 2, 1.0);
        b.edge(0, 0, 1, 0.0);
        b.edge(0, 1, 2, 0.0);
        b.chain(1, 3, 5.0);
        b.chain(2, 3, 1.0);
        b.terminal(3);
        b.start(0);
        let ban = ConstraintSpec::single_step(
            "no-upper-arm",
            |s: &usize, a| if *s == 0 && a == 0 { 1.0 } else { 0.0 },
            0.0,
            Direction::AtMost,
            Priority::Safety,
        );
        (b.build().unwrap(), vec![ban])
    }

    #[test]
    fn constrained_learner_converges_to_the_allowed_arm() {
        let (mdp, constraints) = forked_chain();
        let params = TrainParams { episodes: 500, k_stable: 20, ..TrainParams::default() };
        let out = run_tabular_training(
            &mdp,
            &constraints,
            TabularAlgo::ConstrainedQ,
            EvalMode::Masked,
            &params,
            7,
        )
        .unwrap();
        let conv = out.convergence.expect("should converge quickly");
        assert!(conv.episode < 200, "converged at {}", conv.episode);
        assert_eq!(out.records.last().unwrap().eval_return, 1.0);
    }

    #[test]
    fn plain_q_learning_prefers_the_forbidden_arm() {
        let (mdp, constraints) = forked_chain();
        let params = TrainParams {
            episodes: 500,
            k_stable: 20,
            stop_after_stable: false,
            ..TrainParams::default()
        };
        let out = run_tabular_training(
            &mdp,
            &constraints,
            TabularAlgo::QLearning,
            EvalMode::Greedy,
            &params,
            7,
        )
        .unwrap();
        assert!(out.convergence.is_none());
        assert_eq!(out.records.last().unwrap().eval_return, 5.0);
    }

    #[test]
    fn shaped_penalty_steers_away_from_the_forbidden_arm() {
        let (mdp, constraints) = forked_chain();
        let penalty = 10.0 * max_achievable_return(&mdp).unwrap();
        let params = TrainParams { episodes: 1000, k_stable: 20, ..TrainParams::default() };
        let out = run_tabular_training(
            &mdp,
            &constraints,
            TabularAlgo::RewardShaped { penalty },
            EvalMode::Greedy,
            &params,
            11,
        )
        .unwrap();
        assert!(out.convergence.is_some());
    }

    #[test]
    fn empty_constraint_stack_reduces_to_plain_q_learning() {
        let (mdp, _) = forked_chain();
        let params = TrainParams {
            episodes: 300,
            stop_after_stable: false,
            ..TrainParams::default()
        };
        let a = run_tabular_training(
            &mdp,
            &[],
            TabularAlgo::QLearning,
            EvalMode::Greedy,
            &params,
            99,
        )
        .unwrap();
        let b = run_tabular_training(
            &mdp,
            &[],
            TabularAlgo::ConstrainedQ,
            EvalMode::Masked,
            &params,
            99,
        )
        .unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.q.values(), b.q.values());
    }
}
