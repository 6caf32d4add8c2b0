//! Experiment configuration: one struct tree for every subcommand, TOML
//! round-trip, and a canonical hash stamped into every output file.
//!
//! Precedence is deliberate: command-line flags fill the struct first, and a
//! `--config` file then *overrides* whatever the flags said. Runs are
//! reproduced from files, not from shell history.

use crate::env::highway::HighwayConfig;
use crate::highway_constraints::StackConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Training/search algorithm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMethod {
    /// Plain DQN; constraints ignored everywhere.
    Dqn,
    /// Constrained DQN with single-step rules only.
    Cdqn,
    /// Constrained DQN with single- and multi-step rules plus a violation
    /// head.
    CdqnMsc,
    /// Unconstrained training, constraint masking only at execution.
    Spe,
    /// Plain DQN on a reward shaped with lane-change and left-lane
    /// penalties.
    RewardShaping,
    /// Plain DQN plus quadratic loss penalties on constraint-violating
    /// actions.
    LossPenalty,
}

impl TrainMethod {
    pub const ALL: [TrainMethod; 6] = [
        TrainMethod::Dqn,
        TrainMethod::Cdqn,
        TrainMethod::CdqnMsc,
        TrainMethod::Spe,
        TrainMethod::RewardShaping,
        TrainMethod::LossPenalty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMethod::Dqn => "dqn",
            TrainMethod::Cdqn => "cdqn",
            TrainMethod::CdqnMsc => "cdqn-msc",
            TrainMethod::Spe => "spe",
            TrainMethod::RewardShaping => "reward-shaping",
            TrainMethod::LossPenalty => "loss-penalty",
        }
    }
}

impl fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TrainMethod::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = TrainMethod::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown method '{s}' (expected one of: {})", names.join(", "))
            })
    }
}

/// Deep training knobs shared by `train`, `search`, and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: TrainMethod,
    /// Gradient updates per seed.
    pub updates: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    /// Polyak rate for the target network.
    pub tau: f64,
    /// Updates during which multi-step rules stay out of the bootstrap mask.
    pub warmup_updates: usize,
    /// Replay buffer shape: episodes x steps of random-policy transitions.
    pub buffer_episodes: usize,
    pub buffer_steps: usize,
    /// Evaluation snapshot cadence, in updates.
    pub eval_every: usize,
    /// Evaluation episodes per traffic density.
    pub eval_episodes: usize,
    pub eval_steps: usize,
    /// Traffic densities (vehicle counts) swept at evaluation time.
    pub densities: Vec<usize>,
    /// Lane-change penalty weight (reward shaping, loss penalty).
    pub lambda_lc: f64,
    /// Left-lane / keep-right penalty weight.
    pub lambda_kr: f64,
    /// Safety-group penalty weight (loss penalty only).
    pub lambda_safety: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: TrainMethod::CdqnMsc,
            updates: 2000,
            batch_size: 16,
            lr: 1e-3,
            gamma: 0.99,
            tau: 0.01,
            warmup_updates: 200,
            buffer_episodes: 40,
            buffer_steps: 50,
            eval_every: 1000,
            eval_episodes: 25,
            eval_steps: 60,
            densities: vec![20, 40, 60, 80],
            lambda_lc: 1.0,
            lambda_kr: 0.1,
            lambda_safety: 1.0,
        }
    }
}

/// Ladder-task sweep knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub depths: Vec<usize>,
    pub seeds_per_depth: usize,
    /// Episode cap per run; runs that never stabilize are recorded as
    /// censored, not dropped.
    pub episodes: usize,
    pub max_steps: usize,
    pub epsilon: f64,
    pub alpha: f64,
    /// Consecutive optimal evaluations required to call a run converged.
    pub k_stable: usize,
    /// Penalty per violation for the shaped baseline; 0 picks
    /// `max unconstrained return + 1` per depth automatically.
    pub shaping_penalty: f64,
    /// Emit full learning curves for the first seed of every cell.
    pub curves: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            depths: (1..=10).collect(),
            seeds_per_depth: 20,
            episodes: 4000,
            max_steps: 60,
            epsilon: 0.1,
            alpha: 0.1,
            k_stable: 50,
            shaping_penalty: 0.0,
            curves: false,
        }
    }
}

/// Random-search knobs for the penalty-weight baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub samples: usize,
    pub method: TrainMethod,
    /// Log-uniform sampling range for every penalty weight.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Fraction of `train.updates` each sample gets.
    pub budget_fraction: f64,
    /// Seed for the weight draws (training seeds come from `seeds`).
    pub search_seed: u64,
    pub eval_episodes: usize,
    pub eval_steps: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            samples: 50,
            method: TrainMethod::RewardShaping,
            lambda_min: 1e-3,
            lambda_max: 10.0,
            budget_fraction: 0.5,
            search_seed: 0,
            eval_episodes: 10,
            eval_steps: 60,
        }
    }
}

/// The full experiment description. Everything a run needs lives here; the
/// hash of this struct (minus `out_dir`) is the run's identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Subcommand tag, set by the CLI; informational.
    pub experiment: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub highway: HighwayConfig,
    pub stack: StackConfig,
    pub train: TrainConfig,
    pub tree: TreeConfig,
    pub search: SearchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            out_dir: PathBuf::from("runs"),
            seeds: (0..10).collect(),
            highway: HighwayConfig::default(),
            stack: StackConfig::default(),
            train: TrainConfig::default(),
            tree: TreeConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Loads `path` and lets it override `self` field by field. Tables merge
    /// recursively; scalars and arrays from the file win outright.
    pub fn with_file_overrides(&self, path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let file: toml::Value = toml::from_str(&text)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        let mut base = toml::Value::try_from(self).context("serializing flag defaults")?;
        merge_value(&mut base, file);
        let merged: ExperimentConfig = base
            .try_into()
            .with_context(|| format!("config file {} has invalid fields", path.display()))?;
        Ok(merged)
    }

    /// Rejects configurations that cannot run. Returns the first problem.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if let Some(s) = self.seeds.iter().find(|&&s| s > i64::MAX as u64) {
            bail!("seed {s} does not fit in a TOML integer");
        }
        let t = &self.train;
        if t.updates == 0 || t.batch_size == 0 {
            bail!("train.updates and train.batch_size must be positive");
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            bail!("train.gamma must be in (0, 1], got {}", t.gamma);
        }
        if !(t.tau > 0.0 && t.tau <= 1.0) {
            bail!("train.tau must be in (0, 1], got {}", t.tau);
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            bail!("train.lr must be positive and finite, got {}", t.lr);
        }
        if t.buffer_episodes * t.buffer_steps < t.batch_size {
            bail!(
                "replay buffer holds {} transitions but batch_size is {}",
                t.buffer_episodes * t.buffer_steps,
                t.batch_size
            );
        }
        if t.eval_episodes == 0 || t.eval_steps == 0 || t.eval_every == 0 {
            bail!("train.eval_every, eval_episodes and eval_steps must be positive");
        }
        if t.densities.is_empty() {
            bail!("train.densities must not be empty");
        }
        for &l in [t.lambda_lc, t.lambda_kr, t.lambda_safety].iter() {
            if !(l >= 0.0 && l.is_finite()) {
                bail!("penalty weights must be non-negative and finite");
            }
        }
        let tr = &self.tree;
        if tr.depths.is_empty() || tr.depths.contains(&0) {
            bail!("tree.depths must be non-empty and all >= 1");
        }
        if tr.seeds_per_depth == 0 || tr.episodes == 0 || tr.max_steps == 0 || tr.k_stable == 0 {
            bail!("tree run sizes must be positive");
        }
        if !(0.0..=1.0).contains(&tr.epsilon) {
            bail!("tree.epsilon must be in [0, 1], got {}", tr.epsilon);
        }
        if !(tr.alpha > 0.0 && tr.alpha <= 1.0) {
            bail!("tree.alpha must be in (0, 1], got {}", tr.alpha);
        }
        let s = &self.search;
        if s.samples == 0 {
            bail!("search.samples must be positive");
        }
        if !(s.lambda_min > 0.0 && s.lambda_max >= s.lambda_min) {
            bail!(
                "search weight range must satisfy 0 < lambda_min <= lambda_max, got [{}, {}]",
                s.lambda_min,
                s.lambda_max
            );
        }
        if !(s.budget_fraction > 0.0 && s.budget_fraction <= 1.0) {
            bail!("search.budget_fraction must be in (0, 1], got {}", s.budget_fraction);
        }
        if !matches!(s.method, TrainMethod::RewardShaping | TrainMethod::LossPenalty) {
            bail!("search.method must be reward-shaping or loss-penalty, got {}", s.method);
        }
        if self.highway.n_lanes == 0 || self.highway.n_vehicles == 0 {
            bail!("highway.n_lanes and highway.n_vehicles must be positive");
        }
        Ok(())
    }

    /// Canonical 16-hex-digit identity of this configuration. The output
    /// directory is excluded so that moving results around does not change
    /// what the run *is*.
    pub fn hash_hex(&self) -> String {
        self.hash_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Same identity as [`hash_hex`](Self::hash_hex), as the 8 raw bytes
    /// embedded in binary headers.
    pub fn hash_bytes(&self) -> [u8; 8] {
        let mut neutral = self.clone();
        neutral.out_dir = PathBuf::new();
        let text = toml::to_string(&neutral).expect("valid config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }
}

fn merge_value(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_value(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn default_config_validates_and_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn file_overrides_flags_but_keeps_unmentioned_fields() {
        let mut flags = ExperimentConfig::default();
        flags.train.lr = 0.5;
        flags.train.batch_size = 4;
        flags.seeds = vec![7];

        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "seeds = [1, 2]\n[train]\nlr = 0.25").unwrap();
        let merged = flags.with_file_overrides(f.path()).unwrap();

        assert_eq!(merged.seeds, vec![1, 2]);
        assert_eq!(merged.train.lr, 0.25);
        // Flag survives: the file never mentioned batch_size.
        assert_eq!(merged.train.batch_size, 4);
    }

    #[test]
    fn unknown_keys_in_the_file_are_rejected() {
        let flags = ExperimentConfig::default();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "grandeur = 11").unwrap();
        assert!(flags.with_file_overrides(f.path()).is_err());
    }

    #[test]
    fn hash_ignores_out_dir_and_tracks_everything_else() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/somewhere/else");
        assert_eq!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex().len(), 16);

        let mut c = a.clone();
        c.train.gamma = 0.95;
        assert_ne!(a.hash_hex(), c.hash_hex());
    }

    #[test]
    fn method_names_parse_both_ways() {
        for m in TrainMethod::ALL {
            assert_eq!(m.as_str().parse::<TrainMethod>().unwrap(), m);
        }
        assert!("gradient-vibes".parse::<TrainMethod>().is_err());
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let mut cfg = ExperimentConfig::default();
        cfg.train.gamma = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.search.budget_fraction = 0.0;
        assert!(cfg.validate().is_err());
    }
}
