//! Scratch probe: attribute keep-right violations of a trained checkpoint.

use constrained_q::deep::checkpoint::load_checkpoint;
use constrained_q::deep::encode::{Encode, HighwayEncoder};
use constrained_q::deep::net::{SetNet, ValueNet};
use constrained_q::deep::update::HeadValues;
use constrained_q::env::highway::{HighwayConfig, HighwaySim, KEEP_LANE, N_ACTIONS, RIGHT};
use constrained_q::highway_constraints::{build_stack, StackConfig};
use constrained_q::mdp::{safe_set, Priority};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "/tmp/cqfull/ckpt-cdqn-msc-s0.cqck".into());
    let ck = load_checkpoint(path.as_ref())?;
    let stack = build_stack(&StackConfig::full());
    let budget = stack.iter().find(|c| c.is_multi_step()).unwrap().clone();
    let net = SetNet::new(N_ACTIONS, budget.horizon());
    assert!(ck.matches(&net), "arch mismatch");
    let enc = HighwayEncoder;

    let mut fires = 0usize; // must-go-right active
    let mut complied = 0usize;
    let mut right_unsafe = 0usize; // safety masked RIGHT
    let mut right_budget_masked = 0usize; // budget head masked RIGHT (raw J > 2)
    let mut keep_budget_masked = 0usize; // budget head masked KEEP too
    let mut other_cause = 0usize;
    let mut j_right_at_conflict: Vec<f64> = Vec::new();
    let mut window_changes = 0usize;

    for &density in &[20usize, 40, 60, 80] {
        let mut master = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15 ^ density as u64);
        for _ in 0..25 {
            let cfg = HighwayConfig { n_vehicles: density, ..HighwayConfig::default() };
            let mut sim = HighwaySim::new(cfg, master.gen::<u64>())?;
            let mut state = sim.observe();
            let mut recent: Vec<bool> = Vec::new();
            for _ in 0..60 {
                let e = enc.encode(&state);
                let out = net.forward(&ck.params, e.as_input());
                let values = HeadValues::new(&budget, &out);
                let set = safe_set(&state, N_ACTIONS, &stack, &values, KEEP_LANE)?;
                let action = set.argmax(|a| out.q[a]).unwrap();

                // does must-go-right fire here?
                let kr = stack
                    .iter()
                    .find(|c| c.name == "keep-right")
                    .unwrap();
                if kr.violates_single_step(&state, KEEP_LANE) {
                    // rule active: anything but RIGHT violates
                    fires += 1;
                    if action == RIGHT {
                        complied += 1;
                    } else {
                        // why not RIGHT?
                        let safety_masks_right = stack
                            .iter()
                            .filter(|c| c.priority == Priority::Safety)
                            .any(|c| c.violates_single_step(&state, RIGHT));
                        let j_right = out.j[RIGHT * budget.horizon() + budget.horizon() - 1];
                        let j_keep = out.j[KEEP_LANE * budget.horizon() + budget.horizon() - 1];
                        if safety_masks_right {
                            right_unsafe += 1;
                        } else if j_right.clamp(0.0, 5.0) > 2.0 {
                            right_budget_masked += 1;
                            j_right_at_conflict.push(j_right);
                            if j_keep.clamp(0.0, 5.0) > 2.0 {
                                keep_budget_masked += 1;
                            }
                        } else {
                            other_cause += 1;
                        }
                    }
                }
                let info = sim.step(action);
                recent.push(info.lane_changed);
                if recent.len() > 5 {
                    recent.remove(0);
                }
                if recent.iter().filter(|&&c| c).count() > 2 {
                    window_changes += 1;
                }
                state = sim.observe();
            }
        }
    }
    println!("must-go-right fired: {fires}, complied: {complied}");
    println!("blocked by safety: {right_unsafe}");
    println!("blocked by budget head (J_5 raw > 2): {right_budget_masked} (keep also masked: {keep_budget_masked})");
    println!("other cause: {other_cause}");
    if !j_right_at_conflict.is_empty() {
        let n = j_right_at_conflict.len() as f64;
        let mean = j_right_at_conflict.iter().sum::<f64>() / n;
        let mx = j_right_at_conflict.iter().cloned().fold(f64::MIN, f64::max);
        println!("J_5(RIGHT) at budget conflicts: mean {mean:.3}, max {mx:.3}");
    }
    println!("3+-changes-in-5 windows hit: {window_changes}");
    Ok(())
}
