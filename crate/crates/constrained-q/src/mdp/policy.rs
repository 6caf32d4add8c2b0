//! Deterministic tabular policies and safe policy extraction.

use super::constraint::{safe_set, ConstraintError, ConstraintSpec, ValueSource};

/// One action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPolicy {
    pub actions: Vec<usize>,
}

impl TabularPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        TabularPolicy { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn n_states(&self) -> usize {
        self.actions.len()
    }
}

/// Safe policy extraction: greedy argmax restricted to the safe set of each
/// state. The Q-function itself may have been trained without constraints;
/// masking only here is generally suboptimal but serves as a baseline.
///
/// Ties resolve to the lowest action index. Unknown multi-step constraint
/// names in `values` surface as configuration errors.
pub fn extract_policy_spe(
    n_states: usize,
    n_actions: usize,
    q: impl Fn(usize, usize) -> f64,
    constraints: &[ConstraintSpec<usize>],
    values: &dyn ValueSource<usize>,
    fallback_action: usize,
) -> Result<TabularPolicy, ConstraintError> {
    let mut actions = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let set = safe_set(&s, n_actions, constraints, values, fallback_action)?;
        let a = set.argmax(|a| q(s, a)).expect("safe set is never empty after fallback");
        actions.push(a);
    }
    Ok(TabularPolicy::new(actions))
}
