//! Constraint stack for the highway task: collision safety via short-horizon
//! prediction, lane validity, keep-right rules, and learned comfort budgets.

use crate::env::highway::{HighwayState, KEEP_LANE, LEFT, RIGHT};
use crate::mdp::{ConstraintSpec, Direction, Priority, Step};
use serde::{Deserialize, Serialize};

/// Parameters of the predictive lane-change safety check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyParams {
    /// How far ahead the constant-velocity prediction looks (s).
    pub prediction_horizon: f64,
    /// Prediction sampling resolution (s); `t = 0` is always included.
    pub prediction_dt: f64,
    /// Minimum tolerated time headway between a follower and its leader (s).
    pub min_time_headway: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        SafetyParams { prediction_horizon: 4.0, prediction_dt: 0.5, min_time_headway: 1.5 }
    }
}

/// Minimum clear-lane time gap (s) before the keep-right rules apply.
pub const KEEP_RIGHT_CLEAR_TIME: f64 = 10.0;

/// Time gap to the next leader in `lane`, measured against the ego's desired
/// speed: infinite on a visibly empty lane, zero for a lane that does not
/// exist (so an absent lane never counts as clear).
pub fn lane_time_gap(state: &HighwayState, lane: isize) -> f64 {
    if lane < 0 || lane as usize >= state.n_lanes {
        return 0.0;
    }
    match state.leader_in_lane(lane as usize) {
        None => f64::INFINITY,
        Some((gap, _)) => gap.max(0.0) / state.ego_v_des,
    }
}

/// Whether a follower keeps a safe time headway to its leader at every
/// prediction sample, assuming both hold their current speeds. `gap` is the
/// current bumper gap.
fn headway_holds(gap: f64, v_follower: f64, v_leader: f64, p: &SafetyParams) -> bool {
    let steps = (p.prediction_horizon / p.prediction_dt).round() as usize;
    for k in 0..=steps {
        let t = k as f64 * p.prediction_dt;
        let g = gap + (v_leader - v_follower) * t;
        if g <= 0.0 {
            return false;
        }
        if v_follower > 1e-9 && g / v_follower < p.min_time_headway {
            return false;
        }
    }
    true
}

/// Is the maneuver free of predicted headway violations? Keeping the lane is
/// always considered safe here: the longitudinal controller handles the own
/// lane, this constraint only gates lane changes. A maneuver that leaves the
/// road has no target-lane pair to check and is left to the lane-validity
/// constraint.
pub fn maneuver_is_safe(state: &HighwayState, action: usize, p: &SafetyParams) -> bool {
    if action == KEEP_LANE {
        return true;
    }
    let target = match state.target_lane(action) {
        Some(l) if l != state.ego_lane => l,
        _ => return true,
    };
    if let Some((gap, v_leader)) = state.leader_in_lane(target) {
        if !headway_holds(gap, state.ego_v, v_leader, p) {
            return false;
        }
    }
    if let Some((gap, v_follower)) = state.follower_in_lane(target) {
        if !headway_holds(gap, v_follower, state.ego_v, p) {
            return false;
        }
    }
    true
}

/// Safety: no lane change into a predicted headway violation.
pub fn safe_maneuver_constraint(p: SafetyParams) -> ConstraintSpec<HighwayState> {
    ConstraintSpec::single_step(
        "safe-maneuver",
        move |s: &HighwayState, a| if maneuver_is_safe(s, a, &p) { 0.0 } else { 1.0 },
        0.0,
        Direction::AtMost,
        Priority::Safety,
    )
}

/// Safety: the action must stay on the road.
pub fn valid_lane_constraint() -> ConstraintSpec<HighwayState> {
    ConstraintSpec::single_step(
        "valid-lane",
        |s: &HighwayState, a| if s.target_lane(a).is_some() { 0.0 } else { 1.0 },
        0.0,
        Direction::AtMost,
        Priority::Safety,
    )
}

/// Regular: with both the own and the right lane clear, anything but moving
/// right is a violation — and a left change is a violation whenever the left
/// and own lanes are clear (overtaking has to happen on the left for a
/// reason, not for fun).
pub fn keep_right_constraints(clear_time: f64) -> Vec<ConstraintSpec<HighwayState>> {
    let must_go_right = ConstraintSpec::single_step(
        "keep-right",
        move |s: &HighwayState, a| {
            let lane = s.ego_lane as isize;
            let clear =
                lane_time_gap(s, lane - 1) > clear_time && lane_time_gap(s, lane) > clear_time;
            if a != RIGHT && clear {
                1.0
            } else {
                0.0
            }
        },
        0.0,
        Direction::AtMost,
        Priority::Regular,
    );
    let no_idle_left = ConstraintSpec::single_step(
        "no-idle-left-change",
        move |s: &HighwayState, a| {
            let lane = s.ego_lane as isize;
            let clear =
                lane_time_gap(s, lane + 1) > clear_time && lane_time_gap(s, lane) > clear_time;
            if a == LEFT && clear {
                1.0
            } else {
                0.0
            }
        },
        0.0,
        Direction::AtMost,
        Priority::Regular,
    );
    vec![must_go_right, no_idle_left]
}

/// Regular, learned: at most `max_changes` lane changes expected over the
/// next `horizon` decisions.
pub fn lane_change_budget_constraint(
    horizon: usize,
    max_changes: f64,
) -> ConstraintSpec<HighwayState> {
    ConstraintSpec::multi_step(
        "lane-change-budget",
        horizon,
        |step: &Step<HighwayState>| {
            if step.next.ego_lane != step.state.ego_lane {
                1.0
            } else {
                0.0
            }
        },
        max_changes,
        Direction::AtMost,
        Priority::Regular,
    )
    .with_signal_range(0.0, 1.0)
}

/// Regular, learned: a maneuver must be expected to gain at least
/// `min_gain` m/s of speed over the next `horizon` decisions. Keeping the
/// lane is exempt — doing nothing needs no justification.
pub fn velocity_gain_constraint(horizon: usize, min_gain: f64) -> ConstraintSpec<HighwayState> {
    ConstraintSpec::multi_step(
        "velocity-gain",
        horizon,
        |step: &Step<HighwayState>| step.next.ego_v - step.state.ego_v,
        min_gain,
        Direction::AtLeast,
        Priority::Regular,
    )
    .with_exempt(&[KEEP_LANE])
}

/// Which learned comfort rule the stack carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComfortChoice {
    None,
    LaneChangeBudget { horizon: usize, max_changes: f64 },
    VelocityGain { horizon: usize, min_gain: f64 },
}

impl Default for ComfortChoice {
    fn default() -> Self {
        ComfortChoice::LaneChangeBudget { horizon: 5, max_changes: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackConfig {
    pub safety: SafetyParams,
    pub keep_right: bool,
    /// Time gap (s) above which a lane counts as clear for the keep-right
    /// rules.
    pub clear_time_gap: f64,
    pub comfort: ComfortChoice,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig::full()
    }
}

impl StackConfig {
    pub fn full() -> Self {
        StackConfig {
            safety: SafetyParams::default(),
            keep_right: true,
            clear_time_gap: KEEP_RIGHT_CLEAR_TIME,
            comfort: ComfortChoice::default(),
        }
    }

    /// Safety constraints only.
    pub fn safety_only() -> Self {
        StackConfig { keep_right: false, comfort: ComfortChoice::None, ..StackConfig::full() }
    }
}

/// Builds the constraint stack. The designated fallback action for empty
/// safety intersections is [`KEEP_LANE`].
pub fn build_stack(cfg: &StackConfig) -> Vec<ConstraintSpec<HighwayState>> {
    let mut stack = vec![safe_maneuver_constraint(cfg.safety), valid_lane_constraint()];
    if cfg.keep_right {
        stack.extend(keep_right_constraints(cfg.clear_time_gap));
    }
    match cfg.comfort {
        ComfortChoice::None => {}
        ComfortChoice::LaneChangeBudget { horizon, max_changes } => {
            stack.push(lane_change_budget_constraint(horizon, max_changes));
        }
        ComfortChoice::VelocityGain { horizon, min_gain } => {
            stack.push(velocity_gain_constraint(horizon, min_gain));
        }
    }
    stack
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::highway::NeighborView;
    use crate::mdp::{safe_set, NO_VALUES};

    fn state_with(neighbors: Vec<NeighborView>) -> HighwayState {
        HighwayState {
            ego_v: 25.0,
            ego_lane: 1,
            ego_v_des: 25.0,
            ego_length: 5.0,
            n_lanes: 3,
            sensor_range: 100.0,
            neighbors,
        }
    }

    fn car(dx: f64, v: f64, lane: usize) -> NeighborView {
        NeighborView { dx, v, lane, length: 5.0 }
    }

    #[test]
    fn keeping_the_lane_is_always_safe() {
        let p = SafetyParams::default();
        let crowded = state_with(vec![car(3.0, 0.0, 1), car(-3.0, 40.0, 1)]);
        assert!(maneuver_is_safe(&crowded, KEEP_LANE, &p));
    }

    #[test]
    fn change_into_an_occupied_slot_is_unsafe() {
        let p = SafetyParams::default();
        let s = state_with(vec![car(3.0, 25.0, 2)]);
        assert!(!maneuver_is_safe(&s, LEFT, &p));
        // The same car in the untouched lane does not matter for a right change.
        assert!(maneuver_is_safe(&s, RIGHT, &p));
    }

    #[test]
    fn currently_fine_but_predicted_too_close_is_unsafe() {
        let p = SafetyParams::default();
        // Leader 45 m ahead (bumper gap 40 m, headway 1.6 s) but 2 m/s
        // slower: after 4 s the gap is 32 m, headway 1.28 s < 1.5 s.
        let s = state_with(vec![car(45.0, 23.0, 2)]);
        let gap0_headway = 40.0 / 25.0;
        assert!(gap0_headway > p.min_time_headway);
        assert!(!maneuver_is_safe(&s, LEFT, &p));
        // The same leader at the ego's speed keeps its headway forever.
        let steady = state_with(vec![car(45.0, 25.0, 2)]);
        assert!(maneuver_is_safe(&steady, LEFT, &p));
    }

    #[test]
    fn fast_follower_in_target_lane_is_unsafe() {
        let p = SafetyParams::default();
        // Follower 30 m behind closing at 5 m/s: headway shrinks through
        // 1.5 s within the horizon.
        let s = state_with(vec![car(-30.0, 30.0, 0)]);
        assert!(!maneuver_is_safe(&s, RIGHT, &p));
    }

    #[test]
    fn leaving_the_road_is_caught_by_lane_validity() {
        let c = valid_lane_constraint();
        let mut s = state_with(vec![]);
        s.ego_lane = 2;
        assert!(c.violates_single_step(&s, LEFT));
        assert!(!c.violates_single_step(&s, RIGHT));
        s.ego_lane = 0;
        assert!(c.violates_single_step(&s, RIGHT));
    }

    #[test]
    fn empty_road_mask_is_exactly_move_right() {
        let stack =
            build_stack(&StackConfig { comfort: ComfortChoice::None, ..StackConfig::full() });
        let s = state_with(vec![]);
        let set = safe_set(&s, 3, &stack, &NO_VALUES, KEEP_LANE).unwrap();
        let allowed: Vec<usize> = set.iter().collect();
        assert_eq!(allowed, vec![RIGHT]);
        // In the rightmost lane there is nowhere right to go, and an idle
        // left change onto an empty road is banned too: keep the lane.
        let mut s0 = state_with(vec![]);
        s0.ego_lane = 0;
        let set = safe_set(&s0, 3, &stack, &NO_VALUES, KEEP_LANE).unwrap();
        let allowed: Vec<usize> = set.iter().collect();
        assert_eq!(allowed, vec![KEEP_LANE]);
    }

    #[test]
    fn visible_leader_suspends_the_keep_right_rule() {
        let stack = keep_right_constraints(KEEP_RIGHT_CLEAR_TIME);
        // A leader 50 m ahead in the ego lane: time gap 1.8 s < 10 s, so
        // staying in lane is fine.
        let s = state_with(vec![car(50.0, 20.0, 1)]);
        for c in &stack {
            assert!(!c.violates_single_step(&s, KEEP_LANE));
        }
    }

    #[test]
    fn comfort_signals_read_the_transition() {
        let budget = lane_change_budget_constraint(5, 2.0);
        let before = state_with(vec![]);
        let mut after = before.clone();
        after.ego_lane = 2;
        after.ego_v = 26.0;
        let step = Step {
            state: before.clone(),
            action: LEFT,
            reward: 0.0,
            next: after.clone(),
            terminal: false,
        };
        assert_eq!(budget.immediate_signal(&step), 1.0);
        let gain = velocity_gain_constraint(5, 0.25);
        assert_eq!(gain.immediate_signal(&step), 1.0);
        assert!(gain.exempt_actions.contains(&KEEP_LANE));
        let idle = Step {
            state: before.clone(),
            action: KEEP_LANE,
            reward: 0.0,
            next: before,
            terminal: false,
        };
        assert_eq!(budget.immediate_signal(&idle), 0.0);
    }

    #[test]
    fn absent_lane_never_counts_as_clear() {
        let s = state_with(vec![]);
        assert_eq!(lane_time_gap(&s, -1), 0.0);
        assert_eq!(lane_time_gap(&s, 3), 0.0);
        assert_eq!(lane_time_gap(&s, 1), f64::INFINITY);
    }
}
