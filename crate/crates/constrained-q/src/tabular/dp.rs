//! Exact dynamic-programming oracles on finite MDPs: masked value iteration,
//! exact policy evaluation by linear solve, and optimal-action sets. These
//! are the references that learning runs are checked against.

use super::TabularError;
use crate::mdp::{
    safe_set, ConstraintSpec, FiniteMdp, SafeSet, TabularPolicy, ValueSource,
};

/// Per-state action masks from the single-step constraints of a stack,
/// resolved with the priority fallback. Multi-step constraints need learned
/// values and are rejected here.
pub fn single_step_masks(
    mdp: &FiniteMdp,
    constraints: &[ConstraintSpec<usize>],
    values: &dyn ValueSource<usize>,
    fallback_action: usize,
) -> Result<Vec<SafeSet>, TabularError> {
    (0..mdp.n_states())
        .map(|s| {
            safe_set(&s, mdp.n_actions(), constraints, values, fallback_action)
                .map_err(TabularError::from)
        })
        .collect()
}

pub fn full_masks(mdp: &FiniteMdp) -> Vec<SafeSet> {
    vec![SafeSet::all(mdp.n_actions()); mdp.n_states()]
}

/// Value iteration on Q with the bootstrap maximum restricted per state.
/// Returns the fixed-point Q values, flat `[s * n_actions + a]`.
pub fn masked_value_iteration(
    mdp: &FiniteMdp,
    masks: &[SafeSet],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, TabularError> {
    assert_eq!(masks.len(), mdp.n_states());
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![0.0; ns * na];
    for _ in 0..max_iter {
        let mut next = vec![0.0; ns * na];
        let mut delta = 0.0f64;
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                let mut v = mdp.r(s, a);
                for (s2, p) in mdp.successors(s, a) {
                    if !mdp.is_terminal(s2) {
                        let m = masks[s2]
                            .max_value(|a2| q[s2 * na + a2])
                            .expect("mask is never empty after fallback");
                        v += mdp.gamma() * p * m;
                    }
                }
                next[s * na + a] = v;
                delta = delta.max((v - q[s * na + a]).abs());
            }
        }
        q = next;
        if delta < tol {
            return Ok(q);
        }
    }
    Err(TabularError::NoConvergence(max_iter))
}

/// Greedy policy for masked Q values, ties toward the lowest action index.
pub fn greedy_policy(q: &[f64], masks: &[SafeSet], n_actions: usize) -> TabularPolicy {
    let actions = masks
        .iter()
        .enumerate()
        .map(|(s, m)| m.argmax(|a| q[s * n_actions + a]).expect("non-empty mask"))
        .collect();
    TabularPolicy::new(actions)
}

/// Per-state set of mask-allowed actions within `tol` of the masked optimum.
pub fn optimal_action_sets(
    mdp: &FiniteMdp,
    masks: &[SafeSet],
    tol: f64,
) -> Result<Vec<Vec<usize>>, TabularError> {
    let q = masked_value_iteration(mdp, masks, 1e-12, 100_000)?;
    let na = mdp.n_actions();
    Ok((0..mdp.n_states())
        .map(|s| {
            let best = masks[s].max_value(|a| q[s * na + a]).unwrap();
            masks[s].iter().filter(|&a| q[s * na + a] >= best - tol).collect()
        })
        .collect())
}

/// Exact state values of a fixed policy: solves `(I - gamma P_pi) v = r_pi`
/// on the non-terminal states by Gaussian elimination. Terminal states have
/// value zero.
pub fn policy_evaluation_exact(
    mdp: &FiniteMdp,
    policy: &TabularPolicy,
) -> Result<Vec<f64>, TabularError> {
    let ns = mdp.n_states();
    let live: Vec<usize> = (0..ns).filter(|&s| !mdp.is_terminal(s)).collect();
    let index_of: Vec<Option<usize>> = {
        let mut m = vec![None; ns];
        for (i, &s) in live.iter().enumerate() {
            m[s] = Some(i);
        }
        m
    };
    let n = live.len();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for (i, &s) in live.iter().enumerate() {
        let act = policy.action(s);
        a[i * n + i] = 1.0;
        b[i] = mdp.r(s, act);
        for (s2, p) in mdp.successors(s, act) {
            if let Some(j) = index_of[s2] {
                a[i * n + j] -= mdp.gamma() * p;
            }
        }
    }
    let x = solve_dense(&mut a, &mut b, n).ok_or(TabularError::SingularSystem)?;
    let mut v = vec![0.0; ns];
    for (i, &s) in live.iter().enumerate() {
        v[s] = x[i];
    }
    Ok(v)
}

/// Expected value of `v` under the MDP's initial distribution.
pub fn value_at_initial(mdp: &FiniteMdp, v: &[f64]) -> f64 {
    mdp.initial_dist().iter().zip(v).map(|(p, x)| p * x).sum()
}

/// In-place Gaussian elimination with partial pivoting; `a` is row-major
/// `n x n`, `b` the right-hand side. Returns `None` on a (near-)singular
/// system.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap()
            })
            .unwrap();
        if a[pivot * n + col].abs() < 1e-12 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DeterministicMdpBuilder;

    fn two_arm_chain() -> FiniteMdp {
        // 0 --a0--> 1 --> 3(+5, terminal), 0 --a1--> 2 --> 3(+1)
        let mut b = DeterministicMdpBuilder::new(4, 2, 1.0);
        b.edge(0, 0, 1, 0.0);
        b.edge(0, 1, 2, 0.0);
        b.chain(1, 3, 5.0);
        b.chain(2, 3, 1.0);
        b.terminal(3);
        b.start(0);
        b.build().unwrap()
    }

    #[test]
    fn value_iteration_finds_the_better_arm() {
        let mdp = two_arm_chain();
        let q = masked_value_iteration(&mdp, &full_masks(&mdp), 1e-12, 1000).unwrap();
        assert_eq!(q[0], 5.0);
        assert_eq!(q[1], 1.0);
        let pi = greedy_policy(&q, &full_masks(&mdp), 2);
        assert_eq!(pi.action(0), 0);
    }

    #[test]
    fn masking_the_better_arm_reroutes_the_optimum() {
        let mdp = two_arm_chain();
        let mut masks = full_masks(&mdp);
        masks[0] = SafeSet::only(2, 1);
        let q = masked_value_iteration(&mdp, &masks, 1e-12, 1000).unwrap();
        let pi = greedy_policy(&q, &masks, 2);
        assert_eq!(pi.action(0), 1);
        let v = policy_evaluation_exact(&mdp, &pi).unwrap();
        assert_eq!(value_at_initial(&mdp, &v), 1.0);
    }

    #[test]
    fn exact_evaluation_matches_geometric_series() {
        // Single state, self-loop, reward 1, gamma 0.5 => v = 2.
        let mdp = FiniteMdp::new(
            1,
            1,
            vec![1.0],
            vec![1.0],
            vec![false],
            0.5,
            vec![1.0],
        )
        .unwrap();
        let pi = TabularPolicy::new(vec![0]);
        let v = policy_evaluation_exact(&mdp, &pi).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn evaluation_agrees_with_value_iteration_on_random_mdps() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let ns = rng.gen_range(2..=6);
            let na = rng.gen_range(1..=3);
            let mut p = vec![0.0; ns * na * ns];
            let mut r = vec![0.0; ns * na];
            for sa in 0..ns * na {
                r[sa] = rng.gen_range(-1.0..1.0);
                let mut acc = 0.0;
                for s2 in 0..ns - 1 {
                    let x = rng.gen_range(0.0..(1.0 - acc));
                    p[sa * ns + s2] = x;
                    acc += x;
                }
                p[sa * ns + ns - 1] = 1.0 - acc;
            }
            let mdp =
                FiniteMdp::new(ns, na, p, r, vec![false; ns], 0.9, uniform(ns)).unwrap();
            let q = masked_value_iteration(&mdp, &full_masks(&mdp), 1e-13, 200_000).unwrap();
            let pi = greedy_policy(&q, &full_masks(&mdp), na);
            let v = policy_evaluation_exact(&mdp, &pi).unwrap();
            for s in 0..ns {
                let vq = full_masks(&mdp)[s].max_value(|a| q[s * na + a]).unwrap();
                assert!((v[s] - vq).abs() < 1e-6, "state {s}: {} vs {}", v[s], vq);
            }
        }
    }

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }
}
