//! Drives the highway simulator for a few decision steps with a scripted
//! action sequence and prints what the ego vehicle sees and earns.

use constrained_q::env::highway::{HighwayConfig, HighwaySim, KEEP_LANE, LEFT, RIGHT};

fn action_name(a: usize) -> &'static str {
    match a {
        KEEP_LANE => "keep-lane",
        LEFT => "left",
        RIGHT => "right",
        _ => "?",
    }
}

fn main() -> anyhow::Result<()> {
    let cfg = HighwayConfig { n_vehicles: 20, ..HighwayConfig::default() };
    let mut sim = HighwaySim::new(cfg, 7)?;

    let start = sim.observe();
    println!(
        "start: lane {} of {}, v {:.1} m/s (desired {:.1}), {} vehicles in sensor range",
        start.ego_lane,
        start.n_lanes,
        start.ego_v,
        start.ego_v_des,
        start.neighbors.len()
    );

    let script = [KEEP_LANE, LEFT, KEEP_LANE, KEEP_LANE, RIGHT, KEEP_LANE, RIGHT, KEEP_LANE];
    println!("\n{:<4} {:<10} {:>5} {:>7} {:>8} {:>8} {:>9}", "step", "action", "lane", "v", "reward", "changed", "collision");
    for (i, &a) in script.iter().enumerate() {
        let info = sim.step(a);
        let s = sim.observe();
        println!(
            "{:<4} {:<10} {:>5} {:>7.2} {:>8.3} {:>8} {:>9}",
            i,
            action_name(a),
            s.ego_lane,
            s.ego_v,
            info.reward,
            info.lane_changed,
            info.ego_collision
        );
    }

    let end = sim.observe();
    println!("\nclosest neighbors at the end (dx is ego-relative, metres):");
    let mut sorted = end.neighbors.clone();
    sorted.sort_by(|a, b| a.dx.abs().partial_cmp(&b.dx.abs()).unwrap());
    for n in sorted.iter().take(5) {
        println!("  lane {}  dx {:>7.1}  v {:>5.1}", n.lane, n.dx, n.v);
    }
    Ok(())
}
