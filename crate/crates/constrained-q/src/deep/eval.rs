//! Greedy policy execution and violation accounting on the highway task.

use super::encode::Encode;
use super::net::ValueNet;
use super::update::HeadValues;
use super::DeepError;
use crate::env::highway::{HighwayConfig, HighwaySim, HighwayState};
use crate::mdp::{safe_set, ConstraintSpec, Priority, Step, NO_VALUES};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Greedy action of the network restricted to the safe set of `state`.
///
/// Multi-step constraints in the stack are gated by the network's own
/// truncated-value head (clamped to the constraint's feasible range); ties
/// resolve to the lowest action index. An empty stack yields the plain
/// unconstrained argmax.
pub fn greedy_action<S>(
    net: &dyn ValueNet,
    params: &[f64],
    encoder: &dyn Encode<S>,
    state: &S,
    stack: &[ConstraintSpec<S>],
    fallback_action: usize,
) -> Result<usize, DeepError> {
    let enc = encoder.encode(state);
    let out = net.forward(params, enc.as_input());
    let set = match stack.iter().find(|c| c.is_multi_step()) {
        Some(spec) => {
            let values = HeadValues::new(spec, &out);
            safe_set(state, net.n_actions(), stack, &values, fallback_action)?
        }
        None => safe_set(state, net.n_actions(), stack, &NO_VALUES, fallback_action)?,
    };
    Ok(set.argmax(|a| out.q[a]).expect("safe set is never empty after fallback"))
}

/// Violations observed along a trajectory, bucketed by constraint class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ViolationCounts {
    /// Single-step safety-priority violations (unsafe maneuvers, off-road).
    pub safety: usize,
    /// Single-step regular-priority violations (keep-right rules).
    pub keep_right: usize,
    /// Multi-step constraints judged on realized windows: a window starting
    /// at step `t` counts when it fits completely inside the trajectory, the
    /// starting action is not exempt, and the summed immediate signals land
    /// on the wrong side of the threshold.
    pub comfort: usize,
}

impl ViolationCounts {
    fn add(&mut self, other: ViolationCounts) {
        self.safety += other.safety;
        self.keep_right += other.keep_right;
        self.comfort += other.comfort;
    }
}

pub fn count_violations(
    trajectory: &[Step<HighwayState>],
    stack: &[ConstraintSpec<HighwayState>],
) -> ViolationCounts {
    let mut counts = ViolationCounts::default();
    for c in stack {
        if c.is_multi_step() {
            let h = c.horizon();
            for t in 0..trajectory.len().saturating_sub(h - 1) {
                if c.exempt_actions.contains(&trajectory[t].action) {
                    continue;
                }
                let sum: f64 = trajectory[t..t + h].iter().map(|s| c.immediate_signal(s)).sum();
                if !c.satisfied_by(sum) {
                    counts.comfort += 1;
                }
            }
        } else {
            for step in trajectory {
                if c.violates_single_step(&step.state, step.action) {
                    match c.priority {
                        Priority::Safety => counts.safety += 1,
                        Priority::Regular => counts.keep_right += 1,
                    }
                }
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy)]
pub struct EvalParams {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub fallback_action: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { episodes: 25, steps_per_episode: 60, fallback_action: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOutcome {
    pub episodes: usize,
    pub steps: usize,
    pub mean_speed: f64,
    pub mean_reward: f64,
    pub safety_violations: usize,
    pub keep_right_violations: usize,
    pub comfort_violations: usize,
    pub lane_changes: usize,
    pub collisions: usize,
}

/// Runs the greedy policy for a number of fresh episodes and aggregates
/// speed, reward and violation statistics.
///
/// `exec_stack` masks actions during execution (empty = unconstrained
/// greedy); `count_stack` defines what is tallied as a violation, so a bare
/// policy can still be judged against the full rule set.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    net: &dyn ValueNet,
    params: &[f64],
    encoder: &dyn Encode<HighwayState>,
    cfg: &HighwayConfig,
    exec_stack: &[ConstraintSpec<HighwayState>],
    count_stack: &[ConstraintSpec<HighwayState>],
    p: &EvalParams,
    seed: u64,
) -> Result<EvalOutcome, DeepError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut out = EvalOutcome { episodes: p.episodes, ..EvalOutcome::default() };
    let mut counts = ViolationCounts::default();
    let mut speed_sum = 0.0;
    let mut reward_sum = 0.0;
    for _ in 0..p.episodes {
        let mut sim = HighwaySim::new(cfg.clone(), master.gen::<u64>())?;
        let mut state = sim.observe();
        let mut trajectory = Vec::with_capacity(p.steps_per_episode);
        for _ in 0..p.steps_per_episode {
            let action =
                greedy_action(net, params, encoder, &state, exec_stack, p.fallback_action)?;
            let info = sim.step(action);
            let next = sim.observe();
            out.lane_changes += info.lane_changed as usize;
            out.collisions += info.ego_collision as usize;
            speed_sum += next.ego_v;
            reward_sum += info.reward;
            trajectory.push(Step {
                state,
                action,
                reward: info.reward,
                next: next.clone(),
                terminal: false,
            });
            state = next;
        }
        out.steps += trajectory.len();
        counts.add(count_violations(&trajectory, count_stack));
    }
    out.safety_violations = counts.safety;
    out.keep_right_violations = counts.keep_right;
    out.comfort_violations = counts.comfort;
    if out.steps > 0 {
        out.mean_speed = speed_sum / out.steps as f64;
        out.mean_reward = reward_sum / out.steps as f64;
    }
    Ok(out)
}
