//! Finite MDPs and constraint machinery.
//!
//! A [`FiniteMdp`] stores a dense transition kernel `p(s'|s,a)`, a reward table
//! `r(s,a)`, terminal flags and a start distribution. Constraints are attached
//! separately as [`ConstraintSpec`] values so the same MDP can be solved with
//! different constraint stacks.

mod constraint;
mod policy;
pub mod textfmt;

pub use constraint::{
    safe_set, safe_set_raw, ConstraintError, ConstraintKind, ConstraintSpec, Direction,
    PrecomputedValues, Priority, SafeSet, SignalFn, Step, StepSignalFn, ValueSource,
    NO_VALUES,
};
pub use policy::{extract_policy_spe, TabularPolicy};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("state {state} action {action}: transition probabilities sum to {sum}, expected 1")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },
    #[error("transition probability out of [0,1] at ({state},{action},{next})")]
    ProbabilityOutOfRange { state: usize, action: usize, next: usize },
    #[error("gamma must lie in [0,1], got {0}")]
    GammaOutOfRange(f64),
    #[error("gamma = 1 requires an acyclic non-terminal transition graph")]
    UndiscountedCycle,
    #[error("initial distribution sums to {0}, expected 1")]
    BadInitialDistribution(f64),
    #[error("mdp must have at least one state and one action")]
    Empty,
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense finite MDP. Terminal states carry a self-loop so every row of the
/// kernel is stochastic; sampling from a terminal state is a caller bug and
/// returns the state itself with zero reward.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[(s * n_actions + a) * n_states + s2]`.
    transition: Vec<f64>,
    /// Row-major `[s * n_actions + a]`.
    reward: Vec<f64>,
    terminal: Vec<bool>,
    gamma: f64,
    initial_dist: Vec<f64>,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        terminal: Vec<bool>,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Empty);
        }
        assert_eq!(transition.len(), n_states * n_actions * n_states);
        assert_eq!(reward.len(), n_states * n_actions);
        assert_eq!(terminal.len(), n_states);
        assert_eq!(initial_dist.len(), n_states);
        let mdp = FiniteMdp { n_states, n_actions, transition, reward, terminal, gamma, initial_dist };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<(), MdpError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(MdpError::GammaOutOfRange(self.gamma));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut sum = 0.0;
                for s2 in 0..self.n_states {
                    let p = self.p(s, a, s2);
                    if !(0.0..=1.0 + 1e-9).contains(&p) {
                        return Err(MdpError::ProbabilityOutOfRange { state: s, action: a, next: s2 });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(MdpError::RowNotStochastic { state: s, action: a, sum });
                }
            }
        }
        let dist_sum: f64 = self.initial_dist.iter().sum();
        if (dist_sum - 1.0).abs() > 1e-9 || self.initial_dist.iter().any(|p| *p < 0.0) {
            return Err(MdpError::BadInitialDistribution(dist_sum));
        }
        if self.gamma >= 1.0 && self.has_nonterminal_cycle() {
            return Err(MdpError::UndiscountedCycle);
        }
        Ok(())
    }

    /// Cycle detection over non-terminal states, following any edge with
    /// positive probability.
    fn has_nonterminal_cycle(&self) -> bool {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); self.n_states];
        for s in 0..self.n_states {
            if self.terminal[s] {
                continue;
            }
            let mut seen = vec![false; self.n_states];
            for a in 0..self.n_actions {
                for (s2, _) in self.successors(s, a) {
                    if !self.terminal[s2] && !seen[s2] {
                        seen[s2] = true;
                        adjacency[s].push(s2);
                    }
                }
            }
        }
        // Iterative DFS: 0 = unvisited, 1 = on stack, 2 = done.
        let mut color = vec![0u8; self.n_states];
        for start in 0..self.n_states {
            if color[start] != 0 || self.terminal[start] {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            color[start] = 1;
            while let Some(&mut (s, ref mut edge)) = stack.last_mut() {
                if *edge >= adjacency[s].len() {
                    color[s] = 2;
                    stack.pop();
                    continue;
                }
                let next = adjacency[s][*edge];
                *edge += 1;
                match color[next] {
                    0 => {
                        color[next] = 1;
                        stack.push((next, 0));
                    }
                    1 => return true,
                    _ => {}
                }
            }
        }
        false
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_states).filter(|&s| self.terminal[s])
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// States reachable from `(s, a)` with positive probability.
    pub fn successors(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let base = (s * self.n_actions + a) * self.n_states;
        self.transition[base..base + self.n_states]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(s2, p)| (s2, *p))
    }

    pub fn sample_initial<R: Rng>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial_dist, rng)
    }

    /// Sample `(s', r, terminal)` for one transition.
    pub fn sample_next<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> (usize, f64, bool) {
        if self.terminal[s] {
            return (s, 0.0, true);
        }
        let base = (s * self.n_actions + a) * self.n_states;
        let s2 = sample_index(&self.transition[base..base + self.n_states], rng);
        (s2, self.r(s, a), self.terminal[s2])
    }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.gen();
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    // Guard against accumulated rounding.
    weights.len() - 1
}

/// Convenience builder for deterministic MDPs given as edge lists.
pub struct DeterministicMdpBuilder {
    n_states: usize,
    n_actions: usize,
    next: Vec<usize>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    gamma: f64,
    start: usize,
}

impl DeterministicMdpBuilder {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        DeterministicMdpBuilder {
            n_states,
            n_actions,
            // Default: self-loops everywhere until an edge is set.
            next: (0..n_states).flat_map(|s| std::iter::repeat(s).take(n_actions)).collect(),
            reward: vec![0.0; n_states * n_actions],
            terminal: vec![false; n_states],
            gamma,
            start: 0,
        }
    }

    /// Set the successor for `(s, a)`, with reward `r`.
    pub fn edge(&mut self, s: usize, a: usize, s2: usize, r: f64) -> &mut Self {
        self.next[s * self.n_actions + a] = s2;
        self.reward[s * self.n_actions + a] = r;
        self
    }

    /// Set the successor for all actions of `s`.
    pub fn chain(&mut self, s: usize, s2: usize, r: f64) -> &mut Self {
        for a in 0..self.n_actions {
            self.edge(s, a, s2, r);
        }
        self
    }

    pub fn terminal(&mut self, s: usize) -> &mut Self {
        self.terminal[s] = true;
        self
    }

    pub fn start(&mut self, s: usize) -> &mut Self {
        self.start = s;
        self
    }

    pub fn successor(&self, s: usize, a: usize) -> usize {
        self.next[s * self.n_actions + a]
    }

    pub fn build(&self) -> Result<FiniteMdp, MdpError> {
        let mut transition = vec![0.0; self.n_states * self.n_actions * self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let s2 = if self.terminal[s] { s } else { self.next[s * self.n_actions + a] };
                transition[(s * self.n_actions + a) * self.n_states + s2] = 1.0;
            }
        }
        let mut reward = self.reward.clone();
        for s in 0..self.n_states {
            if self.terminal[s] {
                for a in 0..self.n_actions {
                    reward[s * self.n_actions + a] = 0.0;
                }
            }
        }
        let mut initial = vec![0.0; self.n_states];
        initial[self.start] = 1.0;
        FiniteMdp::new(
            self.n_states,
            self.n_actions,
            transition,
            reward,
            self.terminal.clone(),
            self.gamma,
            initial,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = FiniteMdp::new(
            2,
            1,
            vec![0.5, 0.4, 0.0, 1.0],
            vec![0.0, 0.0],
            vec![false, true],
            0.9,
            vec![1.0, 0.0],
        );
        assert!(matches!(err, Err(MdpError::RowNotStochastic { state: 0, .. })));
    }

    #[test]
    fn rejects_undiscounted_cycle() {
        // Two non-terminal states looping on each other.
        let err = FiniteMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0],
            vec![false, false],
            1.0,
            vec![1.0, 0.0],
        );
        assert!(matches!(err, Err(MdpError::UndiscountedCycle)));
        // Same structure is fine with gamma < 1.
        let ok = FiniteMdp::new(
            2,
            1,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0],
            vec![false, false],
            0.9,
            vec![1.0, 0.0],
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn acyclic_chain_allows_gamma_one() {
        let mut b = DeterministicMdpBuilder::new(3, 2, 1.0);
        b.chain(0, 1, 0.0).chain(1, 2, 1.0).terminal(2);
        let mdp = b.build().unwrap();
        assert_eq!(mdp.r(1, 0), 1.0);
        assert!(mdp.is_terminal(2));
    }

    #[test]
    fn sampling_follows_kernel() {
        let mdp = FiniteMdp::new(
            3,
            1,
            vec![0.0, 0.25, 0.75, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![false, true, true],
            0.9,
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let (s2, r, term) = mdp.sample_next(0, 0, &mut rng);
            assert_eq!(r, 1.0);
            assert!(term);
            counts[s2] += 1;
        }
        assert_eq!(counts[0], 0);
        let frac = counts[1] as f64 / 10_000.0;
        assert!((frac - 0.25).abs() < 0.02, "frac {frac}");
    }
}
