//! Random finite tasks with random action bans, for cross-checking the
//! iterative solvers against brute-force enumeration.

use crate::mdp::{ConstraintSpec, Direction, FiniteMdp, Priority};
use rand::prelude::*;

#[derive(Debug, Clone)]
pub struct RandomTaskParams {
    pub max_states: usize,
    pub max_actions: usize,
    pub gamma: f64,
    /// Probability that a given (state, action) pair is banned. At least one
    /// action always stays allowed per state.
    pub ban_prob: f64,
}

impl Default for RandomTaskParams {
    fn default() -> Self {
        RandomTaskParams { max_states: 8, max_actions: 3, gamma: 0.9, ban_prob: 0.35 }
    }
}

/// Draws a dense stochastic MDP (no terminal states) plus two single-step
/// safety constraints whose combined bans still leave every state at least
/// one allowed action.
pub fn random_task(
    rng: &mut impl Rng,
    params: &RandomTaskParams,
) -> (FiniteMdp, Vec<ConstraintSpec<usize>>) {
    let ns = rng.gen_range(2..=params.max_states);
    let na = rng.gen_range(2..=params.max_actions);
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    for sa in 0..ns * na {
        r[sa] = rng.gen_range(-1.0..1.0);
        // Random stick-breaking row; the last entry absorbs the remainder so
        // rows sum to exactly one.
        let mut acc = 0.0;
        for s2 in 0..ns - 1 {
            let x = rng.gen_range(0.0..=(1.0 - acc));
            p[sa * ns + s2] = x;
            acc += x;
        }
        p[sa * ns + ns - 1] = 1.0 - acc;
    }
    let mdp = FiniteMdp::new(
        ns,
        na,
        p,
        r,
        vec![false; ns],
        params.gamma,
        vec![1.0 / ns as f64; ns],
    )
    .expect("constructed rows are stochastic");

    // Two independent ban tables; their union keeps one action free.
    let mut bans_a = vec![vec![false; na]; ns];
    let mut bans_b = vec![vec![false; na]; ns];
    for s in 0..ns {
        let keep = rng.gen_range(0..na);
        for a in 0..na {
            if a == keep {
                continue;
            }
            bans_a[s][a] = rng.gen_bool(params.ban_prob);
            bans_b[s][a] = rng.gen_bool(params.ban_prob);
        }
    }
    let make = |name: &str, bans: Vec<Vec<bool>>| {
        ConstraintSpec::single_step(
            name,
            move |s: &usize, a| if bans[*s][a] { 1.0 } else { 0.0 },
            0.0,
            Direction::AtMost,
            Priority::Safety,
        )
    };
    let constraints = vec![make("ban-table-a", bans_a), make("ban-table-b", bans_b)];
    (mdp, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{safe_set_raw, NO_VALUES};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_state_keeps_an_allowed_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (mdp, constraints) = random_task(&mut rng, &RandomTaskParams::default());
            for s in 0..mdp.n_states() {
                let set =
                    safe_set_raw(&s, mdp.n_actions(), &constraints, &NO_VALUES).unwrap();
                assert!(!set.is_empty(), "state {s} lost all actions");
            }
        }
    }

    #[test]
    fn iterative_solver_matches_enumeration_per_state() {
        use crate::tabular::brute::brute_force_constrained_optimum;
        use crate::tabular::cpi::constrained_policy_iteration;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for i in 0..50 {
            let (mdp, constraints) = random_task(&mut rng, &RandomTaskParams::default());
            let horizon = rng.gen_range(1..=3);
            let cpi = constrained_policy_iteration(&mdp, &constraints, horizon).unwrap();
            let brute =
                brute_force_constrained_optimum(&mdp, &constraints, horizon).unwrap();
            for s in 0..mdp.n_states() {
                assert!(
                    (cpi.values[s] - brute.per_state_best[s]).abs() < 1e-6,
                    "task {i} state {s}: {} vs {}",
                    cpi.values[s],
                    brute.per_state_best[s]
                );
            }
        }
    }
}
