//! Tabular learning: Q-learning with constrained updates, truncated
//! multi-step constraint values, exact dynamic-programming oracles,
//! constrained policy iteration and brute-force policy enumeration.

pub mod brute;
pub mod cpi;
pub mod dp;
pub mod training;

use crate::mdp::{
    safe_set, ConstraintError, ConstraintSpec, SafeSet, Step, ValueSource,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("operation supports single-step constraints only, found multi-step {0:?}")]
    MultiStepUnsupported(String),
    #[error("no convergence within {0} iterations")]
    NoConvergence(usize),
    #[error("singular linear system in exact policy evaluation")]
    SingularSystem,
    #[error("policy space too large to enumerate: {0} candidates")]
    TooManyPolicies(f64),
}

/// Dense Q table, `values[s * n_actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions);
        QTable { n_states, n_actions, values }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Greedy action over the full action set, ties toward the lowest index.
    pub fn argmax(&self, s: usize) -> usize {
        SafeSet::all(self.n_actions).argmax(|a| self.get(s, a)).unwrap()
    }

    /// All actions within `tol` of the row maximum.
    pub fn argmax_set(&self, s: usize, tol: f64) -> Vec<usize> {
        let m = (0..self.n_actions).map(|a| self.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
        (0..self.n_actions).filter(|&a| self.get(s, a) >= m - tol).collect()
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Truncated violation-value tables `J_h(s, a)` for `h = 1..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct JTable {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    /// `values[((h - 1) * n_states + s) * n_actions + a]`
    values: Vec<f64>,
}

impl JTable {
    pub fn zeros(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        assert!(horizon >= 1);
        JTable { horizon, n_states, n_actions, values: vec![0.0; horizon * n_states * n_actions] }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        debug_assert!((1..=self.horizon).contains(&h));
        self.values[((h - 1) * self.n_states + s) * self.n_actions + a]
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize, v: f64) {
        self.values[((h - 1) * self.n_states + s) * self.n_actions + a] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// J tables for a constraint stack, keyed by constraint name. Also serves as
/// the [`ValueSource`] that feeds `J_H(s, a)` back into safe-set computation.
#[derive(Debug, Clone, Default)]
pub struct JTables {
    entries: Vec<(String, JTable)>,
}

impl JTables {
    /// One table per multi-step constraint in the stack.
    pub fn for_constraints(
        constraints: &[ConstraintSpec<usize>],
        n_states: usize,
        n_actions: usize,
    ) -> Self {
        let entries = constraints
            .iter()
            .filter(|c| c.is_multi_step())
            .map(|c| (c.name.clone(), JTable::zeros(c.horizon(), n_states, n_actions)))
            .collect();
        JTables { entries }
    }

    pub fn get(&self, name: &str) -> Option<&JTable> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut JTable> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ValueSource<usize> for JTables {
    fn value(&self, name: &str, state: &usize, action: usize) -> Option<f64> {
        self.get(name).map(|t| t.get(t.horizon(), *state, action))
    }
}

/// One Q-learning update with the bootstrap maximum restricted to `next_set`.
/// The plain and constrained variants are the same code path so that an empty
/// constraint stack reduces bit-exactly to unconstrained Q-learning.
fn q_step_masked(q: &mut QTable, step: &Step<usize>, next_set: &SafeSet, alpha: f64, gamma: f64) {
    let target = if step.terminal {
        step.reward
    } else {
        let max_next = next_set.max_value(|a| q.get(step.next, a)).unwrap_or(0.0);
        step.reward + gamma * max_next
    };
    let old = q.get(step.state, step.action);
    q.set(step.state, step.action, (1.0 - alpha) * old + alpha * target);
}

/// Unconstrained Q-learning update.
pub fn q_learning_step(q: &mut QTable, step: &Step<usize>, alpha: f64, gamma: f64) {
    let full = SafeSet::all(q.n_actions());
    q_step_masked(q, step, &full, alpha, gamma);
}

/// Constrained Q-learning update: the TD target maximizes only over actions
/// that satisfy every constraint in the follow-up state.
pub fn constrained_q_step(
    q: &mut QTable,
    step: &Step<usize>,
    constraints: &[ConstraintSpec<usize>],
    j_values: &dyn ValueSource<usize>,
    alpha: f64,
    gamma: f64,
    fallback_action: usize,
) -> Result<(), ConstraintError> {
    let set = if step.terminal {
        SafeSet::all(q.n_actions())
    } else {
        safe_set(&step.next, q.n_actions(), constraints, j_values, fallback_action)?
    };
    q_step_masked(q, step, &set, alpha, gamma);
    Ok(())
}

/// TD update for every multi-step constraint's truncated values.
///
/// `J_1(s,a) <- (1-a_J) J_1 + a_J j_t` and for `h > 1`
/// `J_h(s,a) <- (1-a_J) J_h + a_J (j_t + J_{h-1}(s', a*))` where `a*` is the
/// constrained-greedy action of `q` at `s'`. A terminal follow-up state
/// contributes only `j_t` at every horizon. There is no discounting, so
/// `J_h` stays within `h` times the immediate-signal range.
pub fn j_step(
    tables: &mut JTables,
    step: &Step<usize>,
    q: &QTable,
    constraints: &[ConstraintSpec<usize>],
    alpha_j: f64,
    fallback_action: usize,
) -> Result<(), ConstraintError> {
    // Choose the follow-up action once, under the full constraint stack with
    // the current (pre-update) tables.
    let a_star = if step.terminal {
        None
    } else {
        let set = safe_set(&step.next, q.n_actions(), constraints, tables, fallback_action)?;
        Some(set.argmax(|a| q.get(step.next, a)).expect("fallback keeps the set non-empty"))
    };
    // Targets from the old tables, then write.
    let mut updates: Vec<(String, Vec<f64>)> = Vec::new();
    for spec in constraints.iter().filter(|c| c.is_multi_step()) {
        let j_t = spec.immediate_signal(step);
        let table = match tables.get(&spec.name) {
            Some(t) => t,
            None => return Err(ConstraintError::UnknownConstraint(spec.name.clone())),
        };
        let mut targets = Vec::with_capacity(table.horizon());
        for h in 1..=table.horizon() {
            let target = match (h, a_star) {
                (1, _) | (_, None) => j_t,
                (_, Some(a)) => j_t + table.get(h - 1, step.next, a),
            };
            targets.push(target);
        }
        updates.push((spec.name.clone(), targets));
    }
    for (name, targets) in updates {
        let table = tables.get_mut(&name).unwrap();
        for (h, target) in targets.iter().enumerate() {
            let h = h + 1;
            let old = table.get(h, step.state, step.action);
            table.set(h, step.state, step.action, (1.0 - alpha_j) * old + alpha_j * target);
        }
    }
    Ok(())
}
