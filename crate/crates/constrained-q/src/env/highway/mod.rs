//! Ring-road highway: several lanes of IDM-driven traffic on a closed loop.
//!
//! The ego vehicle picks a lane action every two seconds; everyone's
//! longitudinal motion (ego included) follows the intelligent driver model,
//! integrated synchronously at 10 Hz between decisions. Lane 0 is the
//! rightmost lane; the `Left` action increases the lane index. Positions are
//! front bumpers on a ring, so distances wrap.
//!
//! The simulator never terminates episodes on its own — training truncates
//! them and keeps bootstrapping, collisions just hurt the reward signals.

pub mod chains;
pub mod idm;
mod scenario;

use idm::IdmParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KEEP_LANE: usize = 0;
pub const LEFT: usize = 1;
pub const RIGHT: usize = 2;
pub const N_ACTIONS: usize = 3;

#[derive(Debug, Error)]
pub enum HighwayError {
    #[error("lane {lane} cannot fit {count} vehicles at safe initial gaps")]
    TooDense { lane: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighwayConfig {
    pub road_length: f64,
    pub n_lanes: usize,
    /// Total vehicle count including the ego.
    pub n_vehicles: usize,
    pub ego_lane: usize,
    /// Seconds between ego decisions.
    pub decision_period: f64,
    /// Integration step for the longitudinal dynamics.
    pub inner_dt: f64,
    /// How far the ego (and the car-following logic) can see, in meters.
    pub sensor_range: f64,
    pub ego_v_des: f64,
    pub v_des_min: f64,
    pub v_des_max: f64,
    pub vehicle_length: f64,
    pub idm: IdmParams,
}

impl Default for HighwayConfig {
    fn default() -> Self {
        HighwayConfig {
            road_length: 1000.0,
            n_lanes: 3,
            n_vehicles: 30,
            ego_lane: 1,
            decision_period: 2.0,
            inner_dt: 0.1,
            sensor_range: 100.0,
            ego_v_des: 25.0,
            v_des_min: 20.0,
            v_des_max: 30.0,
            vehicle_length: 5.0,
            idm: IdmParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    /// Front-bumper position on the ring, in `[0, road_length)`.
    pub pos: f64,
    pub v: f64,
    pub lane: usize,
    pub v_des: f64,
    pub length: f64,
}

/// A neighbor as the ego sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborView {
    /// Signed front-to-front distance along the ring; positive means ahead.
    pub dx: f64,
    pub v: f64,
    pub lane: usize,
    pub length: f64,
}

/// Ego-centric observation: everything constraint signals and the policy are
/// allowed to see.
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayState {
    pub ego_v: f64,
    pub ego_lane: usize,
    pub ego_v_des: f64,
    pub ego_length: f64,
    pub n_lanes: usize,
    pub sensor_range: f64,
    /// Neighbors within sensor range, sorted by `dx`.
    pub neighbors: Vec<NeighborView>,
}

impl HighwayState {
    /// Lane the action steers into; `None` when it leaves the road.
    pub fn target_lane(&self, action: usize) -> Option<usize> {
        match action {
            KEEP_LANE => Some(self.ego_lane),
            LEFT if self.ego_lane + 1 < self.n_lanes => Some(self.ego_lane + 1),
            RIGHT if self.ego_lane >= 1 => Some(self.ego_lane - 1),
            _ => None,
        }
    }

    /// Nearest visible vehicle ahead in `lane`: `(bumper_gap, speed)`, where
    /// the gap runs from the ego's front to that vehicle's rear.
    pub fn leader_in_lane(&self, lane: usize) -> Option<(f64, f64)> {
        self.neighbors
            .iter()
            .filter(|n| n.lane == lane && n.dx > 0.0)
            .min_by(|a, b| a.dx.partial_cmp(&b.dx).unwrap())
            .map(|n| (n.dx - n.length, n.v))
    }

    /// Nearest visible vehicle behind in `lane`: `(bumper_gap, speed)`, where
    /// the gap runs from that vehicle's front to the ego's rear.
    pub fn follower_in_lane(&self, lane: usize) -> Option<(f64, f64)> {
        self.neighbors
            .iter()
            .filter(|n| n.lane == lane && n.dx <= 0.0)
            .max_by(|a, b| a.dx.partial_cmp(&b.dx).unwrap())
            .map(|n| (-n.dx - self.ego_length, n.v))
    }
}

/// What one decision step reports back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Speed-tracking reward of the new state: `1 - |v - v_des| / v_des`.
    pub reward: f64,
    /// Whether the ego actually switched lanes this step.
    pub lane_changed: bool,
    /// Ego speed change over the step.
    pub delta_v: f64,
    /// The ego touched another vehicle during this step.
    pub ego_collision: bool,
    /// Any two vehicles touched during this step.
    pub any_collision: bool,
}

#[derive(Debug, Clone)]
pub struct HighwaySim {
    cfg: HighwayConfig,
    /// Index 0 is the ego.
    vehicles: Vec<Vehicle>,
    steps_taken: usize,
}

impl HighwaySim {
    pub fn new(cfg: HighwayConfig, seed: u64) -> Result<Self, HighwayError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vehicles = scenario::place_vehicles(&cfg, &mut rng)?;
        Ok(HighwaySim { cfg, vehicles, steps_taken: 0 })
    }

    pub fn config(&self) -> &HighwayConfig {
        &self.cfg
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn ego(&self) -> &Vehicle {
        &self.vehicles[0]
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Signed ring distance from the ego to `pos`, in `(-L/2, L/2]`.
    fn signed_delta(&self, from: f64, to: f64) -> f64 {
        let d = (to - from).rem_euclid(self.cfg.road_length);
        if d > self.cfg.road_length / 2.0 {
            d - self.cfg.road_length
        } else {
            d
        }
    }

    pub fn observe(&self) -> HighwayState {
        let ego = self.vehicles[0];
        let mut neighbors: Vec<NeighborView> = self
            .vehicles
            .iter()
            .skip(1)
            .filter_map(|v| {
                let dx = self.signed_delta(ego.pos, v.pos);
                (dx.abs() <= self.cfg.sensor_range).then_some(NeighborView {
                    dx,
                    v: v.v,
                    lane: v.lane,
                    length: v.length,
                })
            })
            .collect();
        neighbors.sort_by(|a, b| a.dx.partial_cmp(&b.dx).unwrap());
        HighwayState {
            ego_v: ego.v,
            ego_lane: ego.lane,
            ego_v_des: ego.v_des,
            ego_length: ego.length,
            n_lanes: self.cfg.n_lanes,
            sensor_range: self.cfg.sensor_range,
            neighbors,
        }
    }

    /// Nearest vehicle ahead of `i` in its lane: `(bumper_gap, speed)`, or
    /// `None` when nothing drives within sensing distance.
    fn dynamics_leader(&self, i: usize) -> Option<(f64, f64)> {
        let me = self.vehicles[i];
        let mut best: Option<(f64, usize)> = None;
        for (j, other) in self.vehicles.iter().enumerate() {
            if j == i || other.lane != me.lane {
                continue;
            }
            let ahead = (other.pos - me.pos).rem_euclid(self.cfg.road_length);
            if best.map_or(true, |(d, _)| ahead < d) {
                best = Some((ahead, j));
            }
        }
        best.and_then(|(dist, j)| {
            (dist <= self.cfg.sensor_range)
                .then(|| (dist - self.vehicles[j].length, self.vehicles[j].v))
        })
    }

    /// Advances one decision step: applies the ego's lane action, then
    /// integrates the longitudinal dynamics of every vehicle for one decision
    /// period. An action that would leave the road is a no-op on the lane.
    pub fn step(&mut self, action: usize) -> StepInfo {
        assert!(action < N_ACTIONS, "unknown action {action}");
        let before = self.vehicles[0];
        let state = self.observe();
        if let Some(lane) = state.target_lane(action) {
            self.vehicles[0].lane = lane;
        }
        let lane_changed = self.vehicles[0].lane != before.lane;

        let inner_steps =
            (self.cfg.decision_period / self.cfg.inner_dt).round().max(1.0) as usize;
        let mut ego_collision = false;
        let mut any_collision = false;
        for _ in 0..inner_steps {
            // Synchronous update: all accelerations from the same snapshot.
            let mut accels = Vec::with_capacity(self.vehicles.len());
            for i in 0..self.vehicles.len() {
                let leader = self.dynamics_leader(i);
                if let Some((gap, _)) = leader {
                    if gap <= 0.0 {
                        any_collision = true;
                        if i == 0 {
                            ego_collision = true;
                        }
                        // The ego is the other party when it is the leader
                        // blocking `i`; detect by re-deriving the pair.
                        if i != 0 && self.is_leader_of(0, i) {
                            ego_collision = true;
                        }
                    }
                }
                let v = self.vehicles[i];
                accels.push(idm::acceleration(v.v, v.v_des, leader, &self.cfg.idm));
            }
            for (v, a) in self.vehicles.iter_mut().zip(&accels) {
                idm::euler_step(&mut v.pos, &mut v.v, *a, self.cfg.inner_dt, self.cfg.road_length);
            }
        }
        self.steps_taken += 1;

        let ego = self.vehicles[0];
        StepInfo {
            reward: 1.0 - (ego.v - ego.v_des).abs() / ego.v_des,
            lane_changed,
            delta_v: ego.v - before.v,
            ego_collision,
            any_collision,
        }
    }

    /// Whether vehicle `leader` is the nearest same-lane vehicle ahead of
    /// `follower`.
    fn is_leader_of(&self, leader: usize, follower: usize) -> bool {
        let me = self.vehicles[follower];
        let cand = self.vehicles[leader];
        if cand.lane != me.lane {
            return false;
        }
        let dist = (cand.pos - me.pos).rem_euclid(self.cfg.road_length);
        self.vehicles.iter().enumerate().all(|(j, other)| {
            j == follower || j == leader || other.lane != me.lane || {
                (other.pos - me.pos).rem_euclid(self.cfg.road_length) >= dist
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alone_on_the_road_reaches_desired_speed() {
        let cfg = HighwayConfig { n_vehicles: 1, ..HighwayConfig::default() };
        let mut sim = HighwaySim::new(cfg, 1).unwrap();
        let mut info = sim.step(KEEP_LANE);
        for _ in 0..30 {
            info = sim.step(KEEP_LANE);
        }
        assert!((sim.ego().v - 25.0).abs() < 0.1);
        assert!(info.reward > 0.99);
        assert!(!info.any_collision);
    }

    #[test]
    fn lane_actions_move_the_ego_and_clamp_at_the_road_edge() {
        let cfg = HighwayConfig { n_vehicles: 1, ..HighwayConfig::default() };
        let mut sim = HighwaySim::new(cfg, 1).unwrap();
        assert_eq!(sim.ego().lane, 1);
        assert!(sim.step(LEFT).lane_changed);
        assert_eq!(sim.ego().lane, 2);
        // Already leftmost: a further left is a no-op.
        assert!(!sim.step(LEFT).lane_changed);
        assert_eq!(sim.ego().lane, 2);
        assert!(sim.step(RIGHT).lane_changed);
        assert!(sim.step(RIGHT).lane_changed);
        assert_eq!(sim.ego().lane, 0);
        assert!(!sim.step(RIGHT).lane_changed);
        assert_eq!(sim.ego().lane, 0);
    }

    #[test]
    fn dense_keep_lane_traffic_never_collides() {
        let cfg = HighwayConfig { n_vehicles: 60, ..HighwayConfig::default() };
        let mut sim = HighwaySim::new(cfg, 7).unwrap();
        for _ in 0..100 {
            let info = sim.step(KEEP_LANE);
            assert!(!info.any_collision);
        }
        for v in sim.vehicles() {
            assert!(v.v >= 0.0);
            assert!((0.0..1000.0).contains(&v.pos));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = HighwayConfig { n_vehicles: 40, ..HighwayConfig::default() };
        let mut a = HighwaySim::new(cfg.clone(), 11).unwrap();
        let mut b = HighwaySim::new(cfg, 11).unwrap();
        let actions = [KEEP_LANE, LEFT, KEEP_LANE, RIGHT, RIGHT, KEEP_LANE, LEFT];
        for (i, &act) in actions.iter().cycle().take(50).enumerate() {
            let ia = a.step(act);
            let ib = b.step(act);
            assert_eq!(ia, ib, "step {i}");
        }
        assert_eq!(a.vehicles(), b.vehicles());
    }

    #[test]
    fn observation_sees_only_nearby_vehicles_sorted() {
        let cfg = HighwayConfig { n_vehicles: 60, ..HighwayConfig::default() };
        let sim = HighwaySim::new(cfg, 3).unwrap();
        let state = sim.observe();
        assert!(!state.neighbors.is_empty());
        assert!(state.neighbors.len() < 59);
        for w in state.neighbors.windows(2) {
            assert!(w[0].dx <= w[1].dx);
        }
        for n in &state.neighbors {
            assert!(n.dx.abs() <= 100.0);
        }
    }

    #[test]
    fn leader_and_follower_lookups_agree_with_geometry() {
        let cfg = HighwayConfig { n_vehicles: 30, ..HighwayConfig::default() };
        let sim = HighwaySim::new(cfg, 5).unwrap();
        let state = sim.observe();
        if let Some((gap, _)) = state.leader_in_lane(state.ego_lane) {
            // The dynamics leader of the ego is the same vehicle.
            let dyn_leader = sim.dynamics_leader(0).unwrap();
            assert!((gap - dyn_leader.0).abs() < 1e-9);
        }
        if let Some((gap, _)) = state.follower_in_lane(state.ego_lane) {
            assert!(gap > -state.ego_length, "follower overlaps ego: {gap}");
        }
    }
}
