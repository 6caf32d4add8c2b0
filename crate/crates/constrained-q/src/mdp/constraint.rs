//! Constraint specifications and safe action sets.
//!
//! A constraint compares a per-(state, action) value against a threshold.
//! Single-step constraints evaluate a signal function directly; multi-step
//! constraints compare a learned truncated value `J_H(s, a)` supplied by a
//! [`ValueSource`] (tabular J tables or network heads). The safe set of a
//! state is the intersection of the per-constraint safe sets.

use std::sync::Arc;
use thiserror::Error;

/// Signal evaluated at a state-action pair, before the transition happens.
pub type SignalFn<S> = Arc<dyn Fn(&S, usize) -> f64 + Send + Sync>;
/// Immediate signal `j_t` extracted from an observed transition.
pub type StepSignalFn<S> = Arc<dyn Fn(&Step<S>) -> f64 + Send + Sync>;

/// One observed transition, the unit consumed by learning updates.
#[derive(Debug, Clone)]
pub struct Step<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next: S,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Safe when `value <= threshold`.
    AtMost,
    /// Safe when `value >= threshold`.
    AtLeast,
}

/// Safety constraints are never dropped; regular constraints are dropped as a
/// group when their intersection with the safety set is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    Safety,
    Regular,
}

pub enum ConstraintKind<S> {
    SingleStep { signal: SignalFn<S> },
    MultiStep { horizon: usize, immediate: StepSignalFn<S> },
}

impl<S> Clone for ConstraintKind<S> {
    fn clone(&self) -> Self {
        match self {
            ConstraintKind::SingleStep { signal } => {
                ConstraintKind::SingleStep { signal: signal.clone() }
            }
            ConstraintKind::MultiStep { horizon, immediate } => {
                ConstraintKind::MultiStep { horizon: *horizon, immediate: immediate.clone() }
            }
        }
    }
}

impl<S> std::fmt::Debug for ConstraintKind<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintKind::SingleStep { .. } => write!(f, "SingleStep"),
            ConstraintKind::MultiStep { horizon, .. } => write!(f, "MultiStep(h={horizon})"),
        }
    }
}

#[derive(Debug)]
pub struct ConstraintSpec<S> {
    pub name: String,
    pub kind: ConstraintKind<S>,
    pub threshold: f64,
    pub direction: Direction,
    pub priority: Priority,
    /// Actions that satisfy this constraint unconditionally (minimum-gain
    /// style comfort rules exempt the keep-lane action, for example).
    pub exempt_actions: Vec<usize>,
    /// Range of the immediate signal, when known. A learned `H`-step value
    /// can then be clamped to `[H * min, H * max]` before it gates actions.
    pub signal_range: Option<(f64, f64)>,
}

// Manual impl: the derive would demand `S: Clone`, but no field holds an `S`.
impl<S> Clone for ConstraintSpec<S> {
    fn clone(&self) -> Self {
        ConstraintSpec {
            name: self.name.clone(),
            kind: self.kind.clone(),
            threshold: self.threshold,
            direction: self.direction,
            priority: self.priority,
            exempt_actions: self.exempt_actions.clone(),
            signal_range: self.signal_range,
        }
    }
}

impl<S> ConstraintSpec<S> {
    pub fn single_step(
        name: &str,
        signal: impl Fn(&S, usize) -> f64 + Send + Sync + 'static,
        threshold: f64,
        direction: Direction,
        priority: Priority,
    ) -> Self {
        ConstraintSpec {
            name: name.to_string(),
            kind: ConstraintKind::SingleStep { signal: Arc::new(signal) },
            threshold,
            direction,
            priority,
            exempt_actions: Vec::new(),
            signal_range: None,
        }
    }

    pub fn multi_step(
        name: &str,
        horizon: usize,
        immediate: impl Fn(&Step<S>) -> f64 + Send + Sync + 'static,
        threshold: f64,
        direction: Direction,
        priority: Priority,
    ) -> Self {
        ConstraintSpec {
            name: name.to_string(),
            kind: ConstraintKind::MultiStep { horizon, immediate: Arc::new(immediate) },
            threshold,
            direction,
            priority,
            exempt_actions: Vec::new(),
            signal_range: None,
        }
    }

    pub fn with_exempt(mut self, actions: &[usize]) -> Self {
        self.exempt_actions = actions.to_vec();
        self
    }

    pub fn with_signal_range(mut self, min: f64, max: f64) -> Self {
        assert!(min <= max);
        self.signal_range = Some((min, max));
        self
    }

    pub fn horizon(&self) -> usize {
        match &self.kind {
            ConstraintKind::SingleStep { .. } => 1,
            ConstraintKind::MultiStep { horizon, .. } => *horizon,
        }
    }

    pub fn is_multi_step(&self) -> bool {
        matches!(self.kind, ConstraintKind::MultiStep { .. })
    }

    /// Immediate signal `j_t` for multi-step constraints, 0 otherwise.
    pub fn immediate_signal(&self, step: &Step<S>) -> f64 {
        match &self.kind {
            ConstraintKind::MultiStep { immediate, .. } => immediate(step),
            ConstraintKind::SingleStep { .. } => 0.0,
        }
    }

    /// Raw signal value of an observed transition: single-step constraints
    /// evaluate their `(state, action)` signal, multi-step constraints their
    /// immediate transition signal.
    pub fn signal_value(&self, step: &Step<S>) -> f64 {
        match &self.kind {
            ConstraintKind::SingleStep { signal } => signal(&step.state, step.action),
            ConstraintKind::MultiStep { immediate, .. } => immediate(step),
        }
    }

    pub fn satisfied_by(&self, value: f64) -> bool {
        match self.direction {
            Direction::AtMost => value <= self.threshold,
            Direction::AtLeast => value >= self.threshold,
        }
    }

    /// Whether a single-step constraint is violated at `(state, action)`.
    /// Multi-step constraints and exempt actions never violate here.
    pub fn violates_single_step(&self, state: &S, action: usize) -> bool {
        if self.exempt_actions.contains(&action) {
            return false;
        }
        match &self.kind {
            ConstraintKind::SingleStep { signal } => !self.satisfied_by(signal(state, action)),
            ConstraintKind::MultiStep { .. } => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("no value source entry for multi-step constraint {0:?}")]
    UnknownConstraint(String),
}

/// Supplies `J_H(s, a)` estimates for multi-step constraints by name.
pub trait ValueSource<S> {
    fn value(&self, name: &str, state: &S, action: usize) -> Option<f64>;
}

/// Value source for stacks without multi-step constraints.
pub struct NoValues;

impl<S> ValueSource<S> for NoValues {
    fn value(&self, _name: &str, _state: &S, _action: usize) -> Option<f64> {
        None
    }
}

pub const NO_VALUES: NoValues = NoValues;

/// Per-action multi-step values computed up front, keyed by constraint name.
/// Used in batched deep updates where one network forward pass yields all
/// actions at once.
pub struct PrecomputedValues {
    entries: Vec<(String, Vec<f64>)>,
}

impl PrecomputedValues {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Self {
        PrecomputedValues { entries }
    }
}

impl<S> ValueSource<S> for PrecomputedValues {
    fn value(&self, name: &str, _state: &S, action: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, vals)| vals[action])
    }
}

/// Action mask. Never empty after fallback resolution in [`safe_set`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafeSet {
    allowed: Vec<bool>,
}

impl SafeSet {
    pub fn all(n_actions: usize) -> Self {
        SafeSet { allowed: vec![true; n_actions] }
    }

    pub fn none(n_actions: usize) -> Self {
        SafeSet { allowed: vec![false; n_actions] }
    }

    pub fn from_allowed(allowed: Vec<bool>) -> Self {
        SafeSet { allowed }
    }

    pub fn only(n_actions: usize, action: usize) -> Self {
        let mut allowed = vec![false; n_actions];
        allowed[action] = true;
        SafeSet { allowed }
    }

    pub fn n_actions(&self) -> usize {
        self.allowed.len()
    }

    pub fn allows(&self, action: usize) -> bool {
        self.allowed[action]
    }

    pub fn set(&mut self, action: usize, allowed: bool) {
        self.allowed[action] = allowed;
    }

    pub fn intersect(&mut self, other: &SafeSet) {
        for (a, b) in self.allowed.iter_mut().zip(&other.allowed) {
            *a = *a && *b;
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.allowed.iter().any(|a| *a)
    }

    pub fn len(&self) -> usize {
        self.allowed.iter().filter(|a| **a).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.allowed.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }

    /// Greedy argmax restricted to this set; ties resolve to the lowest index.
    pub fn argmax(&self, value: impl Fn(usize) -> f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for a in self.iter() {
            let v = value(a);
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((a, v));
            }
        }
        best.map(|(a, _)| a)
    }

    /// Max of `value` over the set.
    pub fn max_value(&self, value: impl Fn(usize) -> f64) -> Option<f64> {
        self.iter().map(value).fold(None, |acc, v| Some(acc.map_or(v, |m: f64| m.max(v))))
    }
}

fn constraint_mask<S>(
    spec: &ConstraintSpec<S>,
    state: &S,
    n_actions: usize,
    values: &dyn ValueSource<S>,
) -> Result<SafeSet, ConstraintError> {
    let mut mask = SafeSet::none(n_actions);
    for a in 0..n_actions {
        if spec.exempt_actions.contains(&a) {
            mask.set(a, true);
            continue;
        }
        let value = match &spec.kind {
            ConstraintKind::SingleStep { signal } => signal(state, a),
            ConstraintKind::MultiStep { .. } => values
                .value(&spec.name, state, a)
                .ok_or_else(|| ConstraintError::UnknownConstraint(spec.name.clone()))?,
        };
        mask.set(a, spec.satisfied_by(value));
    }
    Ok(mask)
}

/// Raw intersection over all constraints, without fallback. May be empty.
pub fn safe_set_raw<S>(
    state: &S,
    n_actions: usize,
    constraints: &[ConstraintSpec<S>],
    values: &dyn ValueSource<S>,
) -> Result<SafeSet, ConstraintError> {
    let mut set = SafeSet::all(n_actions);
    for spec in constraints {
        set.intersect(&constraint_mask(spec, state, n_actions, values)?);
    }
    Ok(set)
}

/// Safe set with priority fallback, guaranteed non-empty.
///
/// Resolution order: intersect safety-priority constraints first. If adding
/// the regular constraints empties the set, the regular group is dropped for
/// this state. If the safety intersection itself is empty, the designated
/// always-safe fallback action is returned alone.
pub fn safe_set<S>(
    state: &S,
    n_actions: usize,
    constraints: &[ConstraintSpec<S>],
    values: &dyn ValueSource<S>,
    fallback_action: usize,
) -> Result<SafeSet, ConstraintError> {
    let mut safety = SafeSet::all(n_actions);
    for spec in constraints.iter().filter(|c| c.priority == Priority::Safety) {
        safety.intersect(&constraint_mask(spec, state, n_actions, values)?);
    }
    if safety.is_empty() {
        return Ok(SafeSet::only(n_actions, fallback_action));
    }
    let mut full = safety.clone();
    for spec in constraints.iter().filter(|c| c.priority == Priority::Regular) {
        full.intersect(&constraint_mask(spec, state, n_actions, values)?);
    }
    if full.is_empty() {
        Ok(safety)
    } else {
        Ok(full)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forbid(name: &str, banned: &'static [usize], priority: Priority) -> ConstraintSpec<usize> {
        ConstraintSpec::single_step(
            name,
            move |_s: &usize, a| if banned.contains(&a) { 1.0 } else { 0.0 },
            0.0,
            Direction::AtMost,
            priority,
        )
    }

    #[test]
    fn intersection_of_two_constraints() {
        // {1, 2} intersected with {2, 3} leaves {2}.
        let c1 = forbid("c1", &[0, 3], Priority::Safety);
        let c2 = forbid("c2", &[0, 1], Priority::Safety);
        let set = safe_set_raw(&0usize, 4, &[c1, c2], &NO_VALUES).unwrap();
        let allowed: Vec<usize> = set.iter().collect();
        assert_eq!(allowed, vec![2]);
    }

    #[test]
    fn adding_constraints_never_enlarges_raw_set() {
        let c1 = forbid("c1", &[2], Priority::Regular);
        let c2 = forbid("c2", &[1], Priority::Regular);
        let one = safe_set_raw(&0usize, 3, std::slice::from_ref(&c1), &NO_VALUES).unwrap();
        let both = safe_set_raw(&0usize, 3, &[c1, c2], &NO_VALUES).unwrap();
        for a in 0..3 {
            assert!(!both.allows(a) || one.allows(a));
        }
    }

    #[test]
    fn regular_group_dropped_when_conflicting() {
        let safety = forbid("safety", &[2], Priority::Safety);
        let regular = forbid("regular", &[0, 1], Priority::Regular);
        // Regular wants {2}, safety forbids 2: regular group is dropped.
        let set = safe_set(&0usize, 3, &[safety, regular], &NO_VALUES, 0).unwrap();
        let allowed: Vec<usize> = set.iter().collect();
        assert_eq!(allowed, vec![0, 1]);
    }

    #[test]
    fn empty_safety_intersection_falls_back() {
        let c = forbid("block-everything", &[0, 1, 2], Priority::Safety);
        let set = safe_set(&0usize, 3, &[c], &NO_VALUES, 0).unwrap();
        let allowed: Vec<usize> = set.iter().collect();
        assert_eq!(allowed, vec![0]);
    }

    #[test]
    fn unknown_multi_step_name_is_config_error() {
        let c: ConstraintSpec<usize> = ConstraintSpec::multi_step(
            "comfort",
            5,
            |_: &Step<usize>| 0.0,
            2.0,
            Direction::AtMost,
            Priority::Regular,
        );
        let err = safe_set_raw(&0usize, 2, &[c], &NO_VALUES);
        assert!(matches!(err, Err(ConstraintError::UnknownConstraint(_))));
    }

    #[test]
    fn multi_step_uses_value_source_and_exemptions() {
        let c: ConstraintSpec<usize> = ConstraintSpec::multi_step(
            "comfort",
            5,
            |_: &Step<usize>| 0.0,
            2.0,
            Direction::AtMost,
            Priority::Regular,
        )
        .with_exempt(&[0]);
        let values = PrecomputedValues::new(vec![("comfort".into(), vec![9.0, 1.5, 2.5])]);
        let set = safe_set_raw(&0usize, 3, &[c], &values).unwrap();
        // Action 0 exempt even though its value violates; 1 passes; 2 fails.
        let allowed: Vec<usize> = set.iter().collect();
        assert_eq!(allowed, vec![0, 1]);
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let set = SafeSet::from_allowed(vec![false, true, true]);
        let q = [5.0, 3.0, 3.0];
        assert_eq!(set.argmax(|a| q[a]), Some(1));
    }
}
