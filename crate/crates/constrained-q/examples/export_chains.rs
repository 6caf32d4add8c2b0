//! Collects a small random-policy batch and exports the five-decision
//! transition windows around every lane change — the per-rule signal columns
//! are what a constraint learner trains its violation heads on.

use constrained_q::deep::replay::FixedBatch;
use constrained_q::env::highway::{chains::export_transition_chains, HighwayConfig};
use constrained_q::highway_constraints::{build_stack, StackConfig};
use constrained_q::mdp::Step;

fn main() -> anyhow::Result<()> {
    let cfg = HighwayConfig { n_vehicles: 25, ..HighwayConfig::default() };
    let (episodes, steps) = (30, 40);
    let batch = FixedBatch::collect(&cfg, episodes, steps, 11)?;
    println!("collected {} transitions ({} episodes x {} steps)", batch.len(), episodes, steps);
    println!("checksum: {}", batch.checksum_hex());

    let by_episode: Vec<Vec<Step<_>>> =
        batch.steps().chunks(steps).map(|c| c.to_vec()).collect();
    let stack = build_stack(&StackConfig::full());
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("chains.csv");
    let n = export_transition_chains(&by_episode, &stack, &path)?;
    println!("exported {n} lane-change chains");

    let text = std::fs::read_to_string(&path)?;
    println!("\nfirst rows:");
    for line in text.lines().take(6) {
        // The neighbor block is ragged and wide; show the fixed prefix.
        let prefix: Vec<&str> = line.split(',').take(12).collect();
        println!("  {} ...", prefix.join(","));
    }
    Ok(())
}
