//! Scratch measurement: is there speed headroom for lane-changing policies?
//! Compares always-keep-lane against a scripted overtake heuristic under the
//! full violation-counting stack, across the evaluation densities.

use constrained_q::env::highway::{HighwayConfig, HighwaySim, HighwayState, KEEP_LANE, LEFT, RIGHT};
use constrained_q::highway_constraints::{build_stack, StackConfig};
use constrained_q::mdp::Step;

fn leader_gap_speed(s: &HighwayState, lane: usize) -> Option<(f64, f64)> {
    s.neighbors
        .iter()
        .filter(|n| n.lane == lane && n.dx > 0.0)
        .map(|n| (n.dx, n.v))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
}

fn lane_clear(s: &HighwayState, lane: usize, behind: f64, ahead: f64) -> bool {
    s.neighbors.iter().all(|n| n.lane != lane || n.dx < -behind || n.dx > ahead)
}

/// Greedy overtaker: pass slow leaders, ignore every driving rule.
fn overtake_action(s: &HighwayState) -> usize {
    let lane = s.ego_lane;
    match leader_gap_speed(s, lane) {
        Some((gap, v_lead)) if gap < 60.0 && v_lead < s.ego_v_des - 0.5 => {
            if lane + 1 < s.n_lanes && lane_clear(s, lane + 1, 15.0, 25.0) {
                LEFT
            } else if lane > 0 && lane_clear(s, lane - 1, 15.0, 25.0) {
                RIGHT
            } else {
                KEEP_LANE
            }
        }
        _ => KEEP_LANE,
    }
}

fn run(policy: impl Fn(&HighwayState) -> usize, density: usize, seed: u64) -> (f64, usize, usize, usize) {
    let cfg = HighwayConfig { n_vehicles: density, ..HighwayConfig::default() };
    let stack = build_stack(&StackConfig::full());
    let mut speed_sum = 0.0;
    let mut steps = 0usize;
    let mut violations = 0usize;
    let mut changes = 0usize;
    let mut collisions = 0usize;
    for ep in 0..25 {
        let mut sim = HighwaySim::new(cfg.clone(), seed * 1000 + ep).unwrap();
        let mut traj: Vec<Step<HighwayState>> = Vec::new();
        for _ in 0..60 {
            let s = sim.observe();
            let a = policy(&s);
            let info = sim.step(a);
            let next = sim.observe();
            speed_sum += next.ego_v;
            steps += 1;
            changes += info.lane_changed as usize;
            collisions += info.ego_collision as usize;
            traj.push(Step { state: s, action: a, reward: info.reward, next, terminal: false });
        }
        let v = constrained_q::deep::eval::count_violations(&traj, &stack);
        violations += v.safety + v.keep_right + v.comfort;
    }
    (speed_sum / steps as f64, violations, changes, collisions)
}

fn main() {
    println!(
        "{:>8} {:>10} | {:>7} {:>6} {:>4} {:>4} | {:>7} {:>6} {:>4} {:>4}",
        "density", "", "keep", "viol", "lc", "col", "overtake", "viol", "lc", "col"
    );
    for &density in &[20usize, 40, 60, 80] {
        let (ks, kv, kl, kc) = run(|_| KEEP_LANE, density, 9);
        let (os, ov, ol, oc) = run(overtake_action, density, 9);
        println!(
            "{:>8} {:>10} | {:>7.2} {:>6} {:>4} {:>4} | {:>7.2} {:>6} {:>4} {:>4}",
            density, "", ks, kv, kl, kc, os, ov, ol, oc
        );
    }
}
