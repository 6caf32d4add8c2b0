//! Batched value-learning updates.
//!
//! One learner owns an online and a target parameter vector for a single
//! network architecture. The constrained update restricts the bootstrap max
//! at the next state to its safe action set; with an empty constraint stack
//! it degrades to the ordinary DQN rule (see the reduction test). Baseline
//! rules — unconstrained DQN, loss penalties, reward shaping — live here too
//! so every method shares the same optimizer and target-network plumbing.

use super::encode::Encode;
use super::net::{NetOutput, ValueNet};
use super::optim::{polyak, Optimizer};
use super::DeepError;
use crate::env::highway::HighwayState;
use crate::mdp::{safe_set, safe_set_raw, ConstraintSpec, Step, ValueSource, NO_VALUES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cell::Cell;

#[derive(Debug, Clone, Copy)]
pub struct UpdateParams {
    pub gamma: f64,
    /// Polyak averaging coefficient for the target network (1.0 = hard copy).
    pub tau: f64,
    /// Updates during which multi-step constraints are left out of the
    /// bootstrap masks, giving their value heads time to become meaningful.
    pub warmup_updates: usize,
    /// Action returned when the safety intersection is empty.
    pub fallback_action: usize,
}

impl Default for UpdateParams {
    fn default() -> Self {
        UpdateParams { gamma: 0.99, tau: 1e-3, warmup_updates: 500, fallback_action: 0 }
    }
}

/// Diagnostics from one gradient step.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub q_loss: f64,
    pub j_loss: f64,
    /// Mean size of the bootstrap-time safe sets (batch average).
    pub mean_safe_actions: f64,
    /// How many bootstrap values were clipped to their constraint's
    /// signal-range bound before gating actions.
    pub clamped_bootstrap_values: usize,
}

/// Serves `J_H(s', a)` for one named multi-step constraint from a network
/// output, clamping to the range implied by the constraint's per-step signal
/// bounds. Early in training the raw head can wander far outside the
/// achievable range and would otherwise mask everything (or nothing).
pub struct HeadValues<'a> {
    name: &'a str,
    horizon: usize,
    j: &'a [f64],
    bounds: Option<(f64, f64)>,
    clamped: Cell<usize>,
}

impl<'a> HeadValues<'a> {
    pub fn new<S>(spec: &'a ConstraintSpec<S>, out: &'a NetOutput) -> Self {
        let horizon = spec.horizon();
        let bounds =
            spec.signal_range.map(|(lo, hi)| (horizon as f64 * lo, horizon as f64 * hi));
        HeadValues { name: spec.name.as_str(), horizon, j: &out.j, bounds, clamped: Cell::new(0) }
    }

    /// Number of lookups whose raw value fell outside the bounds.
    pub fn clamped_count(&self) -> usize {
        self.clamped.get()
    }
}

impl<S> ValueSource<S> for HeadValues<'_> {
    fn value(&self, name: &str, _state: &S, action: usize) -> Option<f64> {
        if name != self.name {
            return None;
        }
        let raw = self.j[action * self.horizon + self.horizon - 1];
        match self.bounds {
            Some((lo, hi)) if raw < lo || raw > hi => {
                self.clamped.set(self.clamped.get() + 1);
                Some(raw.clamp(lo, hi))
            }
            _ => Some(raw),
        }
    }
}

/// Online/target parameter pair plus the optimizer state driving it.
pub struct Learner<N: ValueNet> {
    pub net: N,
    pub online: Vec<f64>,
    pub target: Vec<f64>,
    pub opt: Optimizer,
    pub updates: usize,
}

impl<N: ValueNet> Learner<N> {
    pub fn new(net: N, seed: u64, opt: Optimizer) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = net.init_params(&mut rng);
        let target = online.clone();
        Learner { net, online, target, opt, updates: 0 }
    }

    pub fn forward_online<S>(&self, encoder: &dyn Encode<S>, state: &S) -> NetOutput {
        let enc = encoder.encode(state);
        self.net.forward(&self.online, enc.as_input())
    }

    fn finish_step(&mut self, grad: &[f64], tau: f64) {
        self.opt.apply(&mut self.online, grad);
        polyak(&mut self.target, &self.online, tau);
        self.updates += 1;
    }

    /// One gradient step of constraint-aware Q-learning on a minibatch.
    ///
    /// The TD target bootstraps over the safe set of the next state:
    /// `y = r + gamma * max_{a in S_C(s')} Q_target(s', a)`. Masks come from
    /// the single-step signals plus — after warm-up — the online network's
    /// own truncated-value head, clamped to the constraint's feasible range.
    /// When `learn_j` names a multi-step constraint, its value heads are
    /// trained jointly: `y_1 = j_t` and
    /// `y_h = j_t + J_{h-1}^target(s', a*)` with `a*` the safe-greedy action
    /// of the online network at `s'`.
    pub fn constrained_update<S>(
        &mut self,
        batch: &[&Step<S>],
        encoder: &dyn Encode<S>,
        mask_stack: &[ConstraintSpec<S>],
        learn_j: Option<&ConstraintSpec<S>>,
        p: &UpdateParams,
    ) -> Result<UpdateStats, DeepError> {
        assert!(!batch.is_empty());
        let n_actions = self.net.n_actions();
        let horizon = self.net.horizon();
        if let Some(spec) = learn_j {
            assert_eq!(
                spec.horizon(),
                horizon,
                "network head horizon must match the learned constraint"
            );
        }

        let warming_up = self.updates < p.warmup_updates;
        let effective_stack: Vec<ConstraintSpec<S>> = mask_stack
            .iter()
            .filter(|c| !(warming_up && c.is_multi_step()))
            .cloned()
            .collect();

        let mut grad = vec![0.0; self.net.n_params()];
        let inv_b = 1.0 / batch.len() as f64;
        let mut q_loss = 0.0;
        let mut j_loss = 0.0;
        let mut safe_total = 0usize;
        let mut clamped = 0usize;

        for step in batch {
            let next_enc = encoder.encode(&step.next);
            let target_next = self.net.forward(&self.target, next_enc.as_input());
            let online_next = self.net.forward(&self.online, next_enc.as_input());

            // Safe set at s', gating both the Q bootstrap and the
            // truncated-value bootstrap action.
            let mask = if let Some(spec) = learn_j {
                let values = HeadValues::new(spec, &online_next);
                let set =
                    safe_set(&step.next, n_actions, &effective_stack, &values, p.fallback_action)?;
                clamped += values.clamped_count();
                set
            } else {
                safe_set(&step.next, n_actions, &effective_stack, &NO_VALUES, p.fallback_action)?
            };
            safe_total += mask.len();

            let y_q = if step.terminal {
                step.reward
            } else {
                let best = mask
                    .max_value(|a| target_next.q[a])
                    .expect("safe set is never empty after fallback");
                step.reward + p.gamma * best
            };

            let state_enc = encoder.encode(&step.state);
            let pred = self.net.forward(&self.online, state_enc.as_input());

            let mut grad_q = vec![0.0; n_actions];
            let mut grad_j = vec![0.0; n_actions * horizon];
            let td = pred.q[step.action] - y_q;
            q_loss += td * td * inv_b;
            grad_q[step.action] = 2.0 * td * inv_b;

            if let Some(spec) = learn_j {
                let j_t = spec.immediate_signal(step);
                let a_star = mask
                    .argmax(|a| online_next.q[a])
                    .expect("safe set is never empty after fallback");
                for h in 1..=horizon {
                    let y = if step.terminal || h == 1 {
                        j_t
                    } else {
                        j_t + target_next.j[a_star * horizon + h - 2]
                    };
                    let idx = step.action * horizon + h - 1;
                    let d = pred.j[idx] - y;
                    j_loss += d * d * inv_b;
                    grad_j[idx] = 2.0 * d * inv_b;
                }
            }

            self.net.backward(&self.online, state_enc.as_input(), &grad_q, &grad_j, &mut grad);
        }

        if !(q_loss.is_finite() && j_loss.is_finite()) {
            return Err(DeepError::NonFiniteLoss { update: self.updates });
        }
        self.finish_step(&grad, p.tau);
        Ok(UpdateStats {
            q_loss,
            j_loss,
            mean_safe_actions: safe_total as f64 * inv_b,
            clamped_bootstrap_values: clamped,
        })
    }

    /// One gradient step of plain DQN, written directly from the textbook
    /// rule with no constraint machinery on purpose: the reduction test pits
    /// it against [`Learner::constrained_update`] with an empty stack and
    /// demands bit-identical parameters.
    pub fn plain_dqn_update<S>(
        &mut self,
        batch: &[&Step<S>],
        encoder: &dyn Encode<S>,
        p: &UpdateParams,
    ) -> Result<UpdateStats, DeepError> {
        assert!(!batch.is_empty());
        let n_actions = self.net.n_actions();
        let horizon = self.net.horizon();
        let mut grad = vec![0.0; self.net.n_params()];
        let inv_b = 1.0 / batch.len() as f64;
        let mut q_loss = 0.0;

        for step in batch {
            let y = if step.terminal {
                step.reward
            } else {
                let next_enc = encoder.encode(&step.next);
                let target_next = self.net.forward(&self.target, next_enc.as_input());
                let mut best = f64::NEG_INFINITY;
                for a in 0..n_actions {
                    best = best.max(target_next.q[a]);
                }
                step.reward + p.gamma * best
            };
            let state_enc = encoder.encode(&step.state);
            let pred = self.net.forward(&self.online, state_enc.as_input());
            let td = pred.q[step.action] - y;
            q_loss += td * td * inv_b;
            let mut grad_q = vec![0.0; n_actions];
            grad_q[step.action] = 2.0 * td * inv_b;
            let grad_j = vec![0.0; n_actions * horizon];
            self.net.backward(&self.online, state_enc.as_input(), &grad_q, &grad_j, &mut grad);
        }

        if !q_loss.is_finite() {
            return Err(DeepError::NonFiniteLoss { update: self.updates });
        }
        self.finish_step(&grad, p.tau);
        Ok(UpdateStats {
            q_loss,
            j_loss: 0.0,
            mean_safe_actions: n_actions as f64,
            clamped_bootstrap_values: 0,
        })
    }

    /// One gradient step of the penalty baseline: the usual unconstrained TD
    /// loss plus, per constraint group, `lambda * Q(s, a)^2` whenever the
    /// taken action falls outside that group's raw safe set at `s`. Instead
    /// of masking the bootstrap, violations drag the action's value toward
    /// zero, with `lambda` trading off task reward against compliance.
    pub fn loss_penalty_update<S>(
        &mut self,
        batch: &[&Step<S>],
        encoder: &dyn Encode<S>,
        groups: &[(f64, Vec<ConstraintSpec<S>>)],
        p: &UpdateParams,
    ) -> Result<UpdateStats, DeepError> {
        assert!(!batch.is_empty());
        let n_actions = self.net.n_actions();
        let horizon = self.net.horizon();
        let mut grad = vec![0.0; self.net.n_params()];
        let inv_b = 1.0 / batch.len() as f64;
        let mut q_loss = 0.0;

        for step in batch {
            let y = if step.terminal {
                step.reward
            } else {
                let next_enc = encoder.encode(&step.next);
                let target_next = self.net.forward(&self.target, next_enc.as_input());
                let mut best = f64::NEG_INFINITY;
                for a in 0..n_actions {
                    best = best.max(target_next.q[a]);
                }
                step.reward + p.gamma * best
            };
            let state_enc = encoder.encode(&step.state);
            let pred = self.net.forward(&self.online, state_enc.as_input());
            let q = pred.q[step.action];

            let mut penalty_weight = 0.0;
            for (lambda, constraints) in groups {
                let set = safe_set_raw(&step.state, n_actions, constraints, &NO_VALUES)?;
                if !set.allows(step.action) {
                    penalty_weight += lambda;
                }
            }

            let td = q - y;
            q_loss += (td * td + penalty_weight * q * q) * inv_b;
            let mut grad_q = vec![0.0; n_actions];
            grad_q[step.action] = (2.0 * td + 2.0 * penalty_weight * q) * inv_b;
            let grad_j = vec![0.0; n_actions * horizon];
            self.net.backward(&self.online, state_enc.as_input(), &grad_q, &grad_j, &mut grad);
        }

        if !q_loss.is_finite() {
            return Err(DeepError::NonFiniteLoss { update: self.updates });
        }
        self.finish_step(&grad, p.tau);
        Ok(UpdateStats {
            q_loss,
            j_loss: 0.0,
            mean_safe_actions: n_actions as f64,
            clamped_bootstrap_values: 0,
        })
    }
}

/// Reward-shaping baseline: subtract fixed penalties for lane changes and for
/// distance from the rightmost lane, leaving the learning rule untouched.
pub fn shaped_reward(
    step: &Step<HighwayState>,
    lane_change_penalty: f64,
    keep_right_penalty: f64,
) -> f64 {
    let changed = step.next.ego_lane != step.state.ego_lane;
    step.reward
        - lane_change_penalty * (changed as u8 as f64)
        - keep_right_penalty * step.state.ego_lane as f64
}

/// Applies [`shaped_reward`] to every transition of a batch.
pub fn shape_steps(
    steps: &[Step<HighwayState>],
    lane_change_penalty: f64,
    keep_right_penalty: f64,
) -> Vec<Step<HighwayState>> {
    steps
        .iter()
        .map(|s| Step {
            reward: shaped_reward(s, lane_change_penalty, keep_right_penalty),
            ..s.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::encode::OneHotEncoder;
    use crate::deep::net::LinearNet;
    use crate::mdp::{Direction, Priority};
    use crate::tabular::{constrained_q_step, QTable};
    use rand::Rng;

    fn forbid_action(name: &str, banned: usize) -> ConstraintSpec<usize> {
        ConstraintSpec::single_step(
            name,
            move |_s: &usize, a| if a == banned { 1.0 } else { 0.0 },
            0.0,
            Direction::AtMost,
            Priority::Safety,
        )
    }

    fn random_steps(ns: usize, na: usize, count: usize, seed: u64) -> Vec<Step<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| Step {
                state: rng.gen_range(0..ns),
                action: rng.gen_range(0..na),
                reward: rng.gen_range(-1.0..1.0),
                next: rng.gen_range(0..ns),
                terminal: rng.gen_range(0..10) == 0,
            })
            .collect()
    }

    #[test]
    fn linear_batch_of_one_tracks_tabular_updates() {
        let ns = 5;
        let na = 3;
        let alpha = 0.1;
        let gamma = 0.9;
        let constraints = vec![forbid_action("ban-2", 2)];
        let steps = random_steps(ns, na, 400, 11);

        let mut q = QTable::zeros(ns, na);
        let encoder = OneHotEncoder { n_states: ns };
        let mut learner = Learner::new(LinearNet::new(ns, na, 0), 0, Optimizer::sgd(alpha / 2.0));
        let p = UpdateParams { gamma, tau: 1.0, warmup_updates: 0, fallback_action: 0 };

        for step in &steps {
            constrained_q_step(&mut q, step, &constraints, &NO_VALUES, alpha, gamma, 0).unwrap();
            learner.constrained_update(&[step], &encoder, &constraints, None, &p).unwrap();
        }
        for s in 0..ns {
            for a in 0..na {
                let net_q = learner.net.forward(&learner.online, encoder.encode(&s).as_input());
                assert!(
                    (q.get(s, a) - net_q.q[a]).abs() < 1e-9,
                    "divergence at ({s},{a}): {} vs {}",
                    q.get(s, a),
                    net_q.q[a]
                );
            }
        }
    }

    #[test]
    fn empty_stack_is_bitwise_identical_to_plain_dqn() {
        let ns = 6;
        let na = 3;
        let steps = random_steps(ns, na, 200, 23);
        let encoder = OneHotEncoder { n_states: ns };
        let p = UpdateParams { gamma: 0.95, tau: 0.01, warmup_updates: 0, fallback_action: 0 };

        let mut masked = Learner::new(LinearNet::new(ns, na, 0), 7, Optimizer::adam(1e-3, ns * na));
        let mut plain = Learner::new(LinearNet::new(ns, na, 0), 7, Optimizer::adam(1e-3, ns * na));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..150 {
            let batch: Vec<&Step<usize>> =
                (0..8).map(|_| &steps[rng.gen_range(0..steps.len())]).collect();
            masked.constrained_update(&batch, &encoder, &[], None, &p).unwrap();
            plain.plain_dqn_update(&batch, &encoder, &p).unwrap();
        }
        assert_eq!(masked.online, plain.online);
        assert_eq!(masked.target, plain.target);
    }

    #[test]
    fn penalty_drives_violating_value_to_scaled_target() {
        // A terminal transition with reward y and an always-violated group of
        // weight lambda has stationary point q = y / (1 + lambda).
        let y = 2.0;
        let lambda = 3.0;
        let step = Step { state: 0usize, action: 0, reward: y, next: 0, terminal: true };
        let groups = vec![(lambda, vec![forbid_action("ban-0", 0)])];
        let encoder = OneHotEncoder { n_states: 1 };
        let mut learner = Learner::new(LinearNet::new(1, 1, 0), 0, Optimizer::sgd(0.05));
        let p = UpdateParams { gamma: 0.9, tau: 1.0, warmup_updates: 0, fallback_action: 0 };
        for _ in 0..600 {
            learner.loss_penalty_update(&[&step], &encoder, &groups, &p).unwrap();
        }
        let out = learner.net.forward(&learner.online, encoder.encode(&0).as_input());
        assert!((out.q[0] - y / (1.0 + lambda)).abs() < 1e-9);
    }

    #[test]
    fn multi_step_mask_gates_bootstrap_only_after_warmup() {
        // A zero-initialized head never meets an AtLeast-0.5 safety
        // constraint, so once warm-up ends the safety set empties and the
        // fallback action is the only survivor — observable through the
        // safe-set size diagnostic flipping from 2 to 1 at exactly the
        // configured update.
        let spec: ConstraintSpec<usize> = ConstraintSpec::multi_step(
            "gain",
            2,
            |_: &Step<usize>| 0.0,
            0.5,
            Direction::AtLeast,
            Priority::Safety,
        );
        let step = Step { state: 0usize, action: 0, reward: 0.0, next: 0, terminal: false };
        let encoder = OneHotEncoder { n_states: 1 };
        let mut learner = Learner::new(LinearNet::new(1, 2, 2), 0, Optimizer::sgd(1e-3));
        let p = UpdateParams { gamma: 0.9, tau: 1.0, warmup_updates: 3, fallback_action: 0 };
        let stack = vec![spec.clone()];
        let mut sizes = Vec::new();
        for _ in 0..5 {
            let stats =
                learner.constrained_update(&[&step], &encoder, &stack, Some(&spec), &p).unwrap();
            sizes.push(stats.mean_safe_actions as usize);
        }
        assert_eq!(sizes, vec![2, 2, 2, 1, 1]);
    }

    #[test]
    fn j_head_learns_the_immediate_signal_on_terminals() {
        let spec: ConstraintSpec<usize> = ConstraintSpec::multi_step(
            "unit",
            3,
            |_: &Step<usize>| 1.0,
            10.0,
            Direction::AtMost,
            Priority::Regular,
        );
        let step = Step { state: 0usize, action: 1, reward: 0.0, next: 0, terminal: true };
        let encoder = OneHotEncoder { n_states: 1 };
        let mut learner = Learner::new(LinearNet::new(1, 2, 3), 0, Optimizer::sgd(0.1));
        let p = UpdateParams { gamma: 0.9, tau: 1.0, warmup_updates: 0, fallback_action: 0 };
        for _ in 0..200 {
            learner.constrained_update(&[&step], &encoder, &[], Some(&spec), &p).unwrap();
        }
        let out = learner.net.forward(&learner.online, encoder.encode(&0).as_input());
        // Terminal targets are j_t for every horizon level.
        for h in 1..=3 {
            assert!((out.j[1 * 3 + h - 1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn head_values_clamp_to_the_scaled_signal_range() {
        let spec: ConstraintSpec<usize> = ConstraintSpec::multi_step(
            "budget",
            4,
            |_: &Step<usize>| 0.0,
            2.0,
            Direction::AtMost,
            Priority::Regular,
        )
        .with_signal_range(0.0, 1.0);
        let out = NetOutput { q: vec![0.0; 2], j: vec![9.0, 9.0, 9.0, 99.0, 0.0, 0.0, 0.0, -5.0] };
        let values = HeadValues::new(&spec, &out);
        // Action 0's level-4 value 99 clamps to 4, action 1's -5 clamps to 0.
        assert_eq!(ValueSource::<usize>::value(&values, "budget", &0, 0), Some(4.0));
        assert_eq!(ValueSource::<usize>::value(&values, "budget", &0, 1), Some(0.0));
        assert_eq!(values.clamped_count(), 2);
        assert_eq!(ValueSource::<usize>::value(&values, "other", &0, 0), None);
    }

    #[test]
    fn non_finite_parameters_surface_as_an_error() {
        let encoder = OneHotEncoder { n_states: 2 };
        let mut learner = Learner::new(LinearNet::new(2, 2, 0), 0, Optimizer::sgd(0.1));
        learner.online[0] = f64::NAN;
        let step = Step { state: 0usize, action: 0, reward: 1.0, next: 1, terminal: false };
        let p = UpdateParams::default();
        let err = learner.constrained_update(&[&step], &encoder, &[], None, &p);
        assert!(matches!(err, Err(DeepError::NonFiniteLoss { .. })));
    }

    #[test]
    fn shaping_penalizes_lane_changes_and_left_lanes() {
        use crate::env::highway::HighwayState;
        let state = |lane: usize| HighwayState {
            ego_v: 25.0,
            ego_lane: lane,
            ego_v_des: 25.0,
            ego_length: 5.0,
            n_lanes: 3,
            sensor_range: 100.0,
            neighbors: vec![],
        };
        let moved = Step { state: state(2), action: 2, reward: 1.0, next: state(1), terminal: false };
        let stayed = Step { state: state(0), action: 0, reward: 1.0, next: state(0), terminal: false };
        assert_eq!(shaped_reward(&moved, 0.25, 0.1), 1.0 - 0.25 - 0.2);
        assert_eq!(shaped_reward(&stayed, 0.25, 0.1), 1.0);
        let shaped = shape_steps(&[moved, stayed], 0.25, 0.1);
        assert_eq!(shaped[0].reward, 0.55);
        assert_eq!(shaped[1].reward, 1.0);
    }
}
