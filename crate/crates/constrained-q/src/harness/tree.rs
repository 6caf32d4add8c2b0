//! Ladder-task sweep: samples-to-convergence of constrained Q-learning
//! against the shaped-reward baseline, across corridor depths and seeds.
//!
//! The constrained learner trains with masked bootstrapping and is evaluated
//! with masked greedy extraction; the baseline trains on penalized rewards
//! and is evaluated bare greedy, since shaping is supposed to have moved the
//! unconstrained optimum itself. Runs that never stabilize within the
//! episode cap are recorded as censored rather than silently dropped.

use super::config::ExperimentConfig;
use super::stats::{ci95_half_width, mean, std_dev};
use crate::env::tree;
use crate::tabular::training::{
    max_achievable_return, run_tabular_training, EvalMode, TabularAlgo, TrainParams,
};
use anyhow::{Context, Result};
use std::fmt::Write;
use std::path::Path;
use std::time::Instant;

pub const ALGO_CONSTRAINED: &str = "constrained-q";
pub const ALGO_SHAPED: &str = "reward-shaping";

/// One training run in the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRun {
    pub depth: usize,
    pub algorithm: &'static str,
    pub seed: u64,
    pub converged: bool,
    /// First episode of the stable window, when converged.
    pub episode: Option<usize>,
    /// Environment transitions consumed up to that episode.
    pub samples: Option<usize>,
    pub episodes_run: usize,
}

/// Per-depth aggregate over seeds.
#[derive(Debug, Clone)]
pub struct DepthSummary {
    pub depth: usize,
    pub cql_converged: usize,
    pub cql_mean_samples: f64,
    pub cql_std_samples: f64,
    pub cql_ci95: f64,
    pub rs_converged: usize,
    pub rs_mean_samples: f64,
    pub rs_std_samples: f64,
    pub rs_ci95: f64,
    /// Mean constrained samples over mean shaped samples; NaN when either
    /// side has no converged runs.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct TreeSweep {
    pub runs: Vec<TreeRun>,
    pub summaries: Vec<DepthSummary>,
    pub wall_ms: u128,
}

/// Penalty for the shaped baseline: either the configured constant, or ten
/// times the task's best achievable return — large enough to stand in for an
/// unbounded penalty without overflowing anything downstream.
fn shaping_penalty(cfg: &ExperimentConfig, task: &tree::TreeTask) -> Result<f64> {
    if cfg.tree.shaping_penalty > 0.0 {
        return Ok(cfg.tree.shaping_penalty);
    }
    let max_return = max_achievable_return(&task.mdp).context("sizing the shaped penalty")?;
    Ok(10.0 * max_return)
}

/// Runs the full grid. Seeds are `0..seeds_per_depth` offset by a per-depth
/// stride so no two cells share an RNG stream.
pub fn run_tree_sweep(cfg: &ExperimentConfig) -> Result<TreeSweep> {
    let started = Instant::now();
    let params = TrainParams {
        episodes: cfg.tree.episodes,
        max_steps: cfg.tree.max_steps,
        epsilon: cfg.tree.epsilon,
        alpha: cfg.tree.alpha,
        k_stable: cfg.tree.k_stable,
        stop_after_stable: true,
    };

    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for &depth in &cfg.tree.depths {
        let task = tree::build(depth);
        let penalty = shaping_penalty(cfg, &task)?;
        let mut cql_samples = Vec::new();
        let mut rs_samples = Vec::new();
        for i in 0..cfg.tree.seeds_per_depth {
            let seed = (depth as u64) * 10_000 + i as u64;
            let cql = run_tabular_training(
                &task.mdp,
                &task.constraints,
                TabularAlgo::ConstrainedQ,
                EvalMode::Masked,
                &params,
                seed,
            )
            .with_context(|| format!("constrained run, depth {depth} seed {seed}"))?;
            if let Some(c) = cql.convergence {
                cql_samples.push(c.samples as f64);
            }
            runs.push(TreeRun {
                depth,
                algorithm: ALGO_CONSTRAINED,
                seed,
                converged: cql.convergence.is_some(),
                episode: cql.convergence.map(|c| c.episode),
                samples: cql.convergence.map(|c| c.samples),
                episodes_run: cql.episodes_run,
            });

            let rs = run_tabular_training(
                &task.mdp,
                &task.constraints,
                TabularAlgo::RewardShaped { penalty },
                EvalMode::Greedy,
                &params,
                seed,
            )
            .with_context(|| format!("shaped run, depth {depth} seed {seed}"))?;
            if let Some(c) = rs.convergence {
                rs_samples.push(c.samples as f64);
            }
            runs.push(TreeRun {
                depth,
                algorithm: ALGO_SHAPED,
                seed,
                converged: rs.convergence.is_some(),
                episode: rs.convergence.map(|c| c.episode),
                samples: rs.convergence.map(|c| c.samples),
                episodes_run: rs.episodes_run,
            });
        }

        let ratio = if cql_samples.is_empty() || rs_samples.is_empty() {
            f64::NAN
        } else {
            mean(&cql_samples) / mean(&rs_samples)
        };
        summaries.push(DepthSummary {
            depth,
            cql_converged: cql_samples.len(),
            cql_mean_samples: mean(&cql_samples),
            cql_std_samples: std_dev(&cql_samples),
            cql_ci95: ci95_half_width(&cql_samples),
            rs_converged: rs_samples.len(),
            rs_mean_samples: mean(&rs_samples),
            rs_std_samples: std_dev(&rs_samples),
            rs_ci95: ci95_half_width(&rs_samples),
            ratio,
        });
    }

    Ok(TreeSweep { runs, summaries, wall_ms: started.elapsed().as_millis() })
}

/// Writes one row per training run. Censored runs keep empty episode/sample
/// fields.
pub fn write_runs_csv(sweep: &TreeSweep, config_hash: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "config_hash",
        "depth",
        "algorithm",
        "seed",
        "converged",
        "episode",
        "samples",
        "episodes_run",
    ])?;
    for r in &sweep.runs {
        w.write_record([
            config_hash.to_string(),
            r.depth.to_string(),
            r.algorithm.to_string(),
            r.seed.to_string(),
            r.converged.to_string(),
            r.episode.map(|e| e.to_string()).unwrap_or_default(),
            r.samples.map(|s| s.to_string()).unwrap_or_default(),
            r.episodes_run.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-depth aggregate, timing isolated in the last column so the
/// rest of the file is byte-stable across reruns.
pub fn write_summary_csv(sweep: &TreeSweep, config_hash: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "config_hash",
        "depth",
        "cql_converged",
        "cql_mean_samples",
        "cql_std_samples",
        "cql_ci95",
        "rs_converged",
        "rs_mean_samples",
        "rs_std_samples",
        "rs_ci95",
        "ratio",
        "wall_ms",
    ])?;
    for s in &sweep.summaries {
        w.write_record([
            config_hash.to_string(),
            s.depth.to_string(),
            s.cql_converged.to_string(),
            format!("{:.3}", s.cql_mean_samples),
            format!("{:.3}", s.cql_std_samples),
            format!("{:.3}", s.cql_ci95),
            s.rs_converged.to_string(),
            format!("{:.3}", s.rs_mean_samples),
            format!("{:.3}", s.rs_std_samples),
            format!("{:.3}", s.rs_ci95),
            format!("{:.4}", s.ratio),
            sweep.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Optional learning curves: every episode record of the first seed in each
/// (depth, algorithm) cell. Kept separate because the full grid would be
/// enormous.
pub fn write_curves_csv(cfg: &ExperimentConfig, config_hash: &str, path: &Path) -> Result<()> {
    let params = TrainParams {
        episodes: cfg.tree.episodes,
        max_steps: cfg.tree.max_steps,
        epsilon: cfg.tree.epsilon,
        alpha: cfg.tree.alpha,
        k_stable: cfg.tree.k_stable,
        // Curves should show the tail after convergence too.
        stop_after_stable: false,
    };
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "config_hash",
        "depth",
        "algorithm",
        "seed",
        "episode",
        "samples",
        "greedy_return",
        "is_optimal",
    ])?;
    for &depth in &cfg.tree.depths {
        let task = tree::build(depth);
        let penalty = shaping_penalty(cfg, &task)?;
        let seed = (depth as u64) * 10_000;
        for (algo, name, mode) in [
            (TabularAlgo::ConstrainedQ, ALGO_CONSTRAINED, EvalMode::Masked),
            (TabularAlgo::RewardShaped { penalty }, ALGO_SHAPED, EvalMode::Greedy),
        ] {
            let out = run_tabular_training(&task.mdp, &task.constraints, algo, mode, &params, seed)?;
            for rec in &out.records {
                w.write_record([
                    config_hash.to_string(),
                    depth.to_string(),
                    name.to_string(),
                    seed.to_string(),
                    rec.episode.to_string(),
                    rec.samples.to_string(),
                    format!("{:.6}", rec.eval_return),
                    rec.is_optimal.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Renders the summaries as an aligned text table for the terminal.
pub fn render_summaries(sweep: &TreeSweep) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>5} {:>12} {:>12} {:>8} {:>10} {:>10}\n",
        "depth", "cql_samples", "rs_samples", "ratio", "cql_conv", "rs_conv"
    ));
    for s in &sweep.summaries {
        out.push_str(&format!(
            "{:>5} {:>12.1} {:>12.1} {:>8.3} {:>10} {:>10}\n",
            s.depth, s.cql_mean_samples, s.rs_mean_samples, s.ratio, s.cql_converged, s.rs_converged
        ));
    }
    let _ = write!(out, "wall time: {} ms\n", sweep.wall_ms);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.tree.depths = vec![1];
        cfg.tree.seeds_per_depth = 3;
        cfg.tree.episodes = 3000;
        cfg
    }

    #[test]
    fn depth_one_prefers_the_masked_learner() {
        let sweep = run_tree_sweep(&tiny_cfg()).unwrap();
        assert_eq!(sweep.runs.len(), 6);
        let s = &sweep.summaries[0];
        assert_eq!(s.cql_converged, 3, "masked learner should always stabilize");
        assert!(s.rs_converged >= 1, "shaped baseline should mostly stabilize");
        assert!(
            s.ratio < 0.9,
            "masking should need clearly fewer samples than shaping, ratio = {}",
            s.ratio
        );
    }

    #[test]
    fn csv_files_round_trip_with_expected_headers() {
        let sweep = run_tree_sweep(&tiny_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let runs_path = dir.path().join("tree_runs.csv");
        let summary_path = dir.path().join("tree_summary.csv");
        write_runs_csv(&sweep, "abcd", &runs_path).unwrap();
        write_summary_csv(&sweep, "abcd", &summary_path).unwrap();

        let text = std::fs::read_to_string(&runs_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "config_hash,depth,algorithm,seed,converged,episode,samples,episodes_run"
        );
        assert_eq!(text.lines().count(), 1 + sweep.runs.len());

        let text = std::fs::read_to_string(&summary_path).unwrap();
        assert!(text.starts_with("config_hash,depth,cql_converged"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn curves_cover_both_algorithms_from_episode_zero() {
        let mut cfg = tiny_cfg();
        cfg.tree.episodes = 200;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        write_curves_csv(&cfg, "abcd", &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(ALGO_CONSTRAINED) && text.contains(ALGO_SHAPED));
        // Both algorithms run all 200 episodes (no early stop for curves).
        assert_eq!(text.lines().count(), 1 + 2 * 200);
    }
}
