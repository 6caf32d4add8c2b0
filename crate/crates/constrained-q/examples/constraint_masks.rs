//! Shows how the driving rule stack turns a highway state into an allowed
//! action set: each single-step rule's own mask, their prioritized
//! intersection, and the fallback that keeps the set non-empty when the
//! rules disagree.

use constrained_q::env::highway::{HighwayConfig, HighwaySim, KEEP_LANE, N_ACTIONS};
use constrained_q::highway_constraints::{build_stack, StackConfig};
use constrained_q::mdp::{safe_set, safe_set_raw, NO_VALUES};

fn mask_str(set: &constrained_q::mdp::SafeSet) -> String {
    (0..N_ACTIONS)
        .map(|a| if set.allows(a) { 'o' } else { '.' })
        .collect()
}

fn main() -> anyhow::Result<()> {
    let cfg = HighwayConfig { n_vehicles: 40, ..HighwayConfig::default() };
    let mut sim = HighwaySim::new(cfg, 3)?;
    let stack = build_stack(&StackConfig::full());

    println!("actions: keep-lane / left / right; 'o' allowed, '.' blocked\n");
    for step in 0..6 {
        let state = sim.observe();
        println!(
            "step {step}: lane {} v {:.1} ({} neighbors)",
            state.ego_lane,
            state.ego_v,
            state.neighbors.len()
        );
        for rule in stack.iter().filter(|c| !c.is_multi_step()) {
            let mask = safe_set_raw(&state, N_ACTIONS, std::slice::from_ref(rule), &NO_VALUES)?;
            println!("  {:<22} {}", rule.name, mask_str(&mask));
        }
        // The budget rule needs learned violation values, so the resolved set
        // here uses the single-step rules only.
        let singles: Vec<_> = stack.iter().filter(|c| !c.is_multi_step()).cloned().collect();
        let resolved = safe_set(&state, N_ACTIONS, &singles, &NO_VALUES, KEEP_LANE)?;
        println!("  {:<22} {}", "=> resolved", mask_str(&resolved));
        // Follow the lowest-index allowed action so the tour stays legal.
        let action = resolved.iter().next().unwrap_or(KEEP_LANE);
        sim.step(action);
    }
    Ok(())
}
