//! Constrained policy iteration on a random task, checked two ways: the
//! initial-state value never decreases across iterates, and the fixed point
//! matches brute-force enumeration of all feasible deterministic policies.

use constrained_q::env::random::{random_task, RandomTaskParams};
use constrained_q::tabular::brute::brute_force_constrained_optimum;
use constrained_q::tabular::cpi::constrained_policy_iteration;
use constrained_q::tabular::dp::value_at_initial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mdp, constraints) = random_task(&mut rng, &RandomTaskParams::default());
    println!(
        "random task: {} states, {} actions, gamma {}",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.gamma()
    );

    let horizon = 3;
    let result = constrained_policy_iteration(&mdp, &constraints, horizon)?;
    println!("\niterate  initial_value  max_violation");
    for (i, it) in result.history.iter().enumerate() {
        let worst = it.violations.iter().cloned().fold(0.0_f64, f64::max);
        println!(
            "{:>7}  {:>13.6}  {:>13.2e}",
            i,
            value_at_initial(&mdp, &it.values),
            worst
        );
    }

    let brute = brute_force_constrained_optimum(&mdp, &constraints, horizon)?;
    println!("\npolicy iteration fixed point: {:.6}", result.initial_value);
    println!(
        "brute force over {} feasible policies: {:.6}",
        brute.feasible_count, brute.initial_value
    );
    println!("difference: {:.2e}", (result.initial_value - brute.initial_value).abs());
    Ok(())
}
