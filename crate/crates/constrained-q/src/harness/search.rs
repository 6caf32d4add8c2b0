//! Random search over the penalty weight of the shaping / loss-penalty
//! baselines, exposing the speed-versus-violations trade-off that constraint
//! masking avoids tuning altogether.

use super::config::{ExperimentConfig, TrainMethod};
use super::highway::{method_plan, train_with, CombinedEval};
use super::stats::{permutation_p_positive, spearman_rho};
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// One penalty-weight configuration. Each weight the method actually uses is
/// drawn independently; `safety` stays `None` for reward shaping, which has
/// no safety term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDraw {
    pub lane_change: f64,
    pub keep_right: f64,
    pub safety: Option<f64>,
}

/// One sampled weight configuration and what it trained into.
pub struct SearchSample {
    pub index: usize,
    pub weights: WeightDraw,
    pub eval: CombinedEval,
    /// A policy that never changes lanes has dodged the trade-off rather
    /// than solved it; it is excluded from incumbent selection.
    pub collapsed: bool,
    pub aborted: bool,
    pub wall_ms: u128,
}

pub struct SearchOutcome {
    pub method: TrainMethod,
    pub samples: Vec<SearchSample>,
    /// Index into `samples` of the best non-collapsed run, if any survived.
    pub incumbent: Option<usize>,
    /// Rank correlation between mean speed and total violations across all
    /// samples, with its one-sided (positive) permutation p-value.
    pub rho: f64,
    pub p_value: f64,
}

/// Plugs one weight configuration into a per-sample copy of the experiment.
fn sample_config(cfg: &ExperimentConfig, w: &WeightDraw, budget: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.updates = budget;
    c.train.eval_every = budget;
    c.train.eval_episodes = cfg.search.eval_episodes;
    c.train.eval_steps = cfg.search.eval_steps;
    c.train.lambda_lc = w.lane_change;
    c.train.lambda_kr = w.keep_right;
    if let Some(s) = w.safety {
        c.train.lambda_safety = s;
    }
    c
}

pub fn run_search(cfg: &ExperimentConfig) -> Result<SearchOutcome> {
    let method = cfg.search.method;
    match method {
        TrainMethod::RewardShaping | TrainMethod::LossPenalty => {}
        other => bail!("search tunes a penalty baseline, not {other}"),
    }
    if cfg.search.lambda_min <= 0.0 || cfg.search.lambda_max <= cfg.search.lambda_min {
        bail!("search needs 0 < lambda_min < lambda_max");
    }
    let seed = *cfg.seeds.first().context("search needs at least one seed")?;
    let budget =
        ((cfg.search.budget_fraction * cfg.train.updates as f64).round() as usize).max(1);

    // Log-uniform draws per weight: equal mass per decade of penalty
    // strength, every used weight drawn independently.
    let (lo, hi) = (cfg.search.lambda_min.ln(), cfg.search.lambda_max.ln());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.search.search_seed);
    let draw = |rng: &mut ChaCha8Rng| (lo + rng.gen::<f64>() * (hi - lo)).exp();
    let weights: Vec<WeightDraw> = (0..cfg.search.samples)
        .map(|_| WeightDraw {
            lane_change: draw(&mut rng),
            keep_right: draw(&mut rng),
            safety: match method {
                TrainMethod::LossPenalty => Some(draw(&mut rng)),
                _ => None,
            },
        })
        .collect();

    // All samples train on the same seed's frozen batch; collect it once.
    super::highway::ensure_batch(cfg, seed)?;

    let samples: Vec<SearchSample> = weights
        .par_iter()
        .enumerate()
        .map(|(index, w)| {
            let c = sample_config(cfg, w, budget);
            let plan = method_plan(&c, method)?;
            let ckpt = c.out_dir.join(format!("search-{method}-{index:03}.cqck"));
            let run = train_with(&c, &plan, seed, &ckpt)?;
            let eval = *run.final_eval();
            Ok(SearchSample {
                index,
                weights: *w,
                eval,
                collapsed: eval.lane_changes == 0,
                aborted: run.aborted_at.is_some(),
                wall_ms: run.wall_ms,
            })
        })
        .collect::<Result<_>>()?;

    let incumbent = samples
        .iter()
        .filter(|s| !s.collapsed && !s.aborted)
        .min_by(|a, b| {
            (a.eval.total_violations(), b.eval.mean_speed())
                .partial_cmp(&(b.eval.total_violations(), a.eval.mean_speed()))
                .expect("violation counts and speeds are finite")
        })
        .map(|s| s.index);

    let speeds: Vec<f64> = samples.iter().map(|s| s.eval.mean_speed()).collect();
    let violations: Vec<f64> =
        samples.iter().map(|s| s.eval.total_violations() as f64).collect();
    let rho = spearman_rho(&speeds, &violations);
    let p_value = permutation_p_positive(
        &speeds,
        &violations,
        10_000,
        cfg.search.search_seed ^ 0x5eed,
    );

    Ok(SearchOutcome { method, samples, incumbent, rho, p_value })
}

pub const SEARCH_HEADER: &str = "config_hash,sample,lambda_lc,lambda_kr,lambda_safety,\
mean_speed,mean_reward,safety_violations,keep_right_violations,comfort_violations,\
lane_changes,collisions,total_violations,collapsed,incumbent,wall_ms";

pub fn write_search_csv(
    cfg: &ExperimentConfig,
    outcome: &SearchOutcome,
    path: &Path,
) -> Result<()> {
    let hash = cfg.hash_hex();
    let mut out = String::new();
    out.push_str(SEARCH_HEADER);
    out.push('\n');
    for s in &outcome.samples {
        let e = &s.eval;
        let _ = writeln!(
            out,
            "{hash},{i},{lc_w:.6e},{kr_w:.6e},{sf},{sp:.4},{rw:.4},{sv},{kr},{cv},{lc},{co},{tot},{col},{inc},{w}",
            i = s.index,
            lc_w = s.weights.lane_change,
            kr_w = s.weights.keep_right,
            sf = s.weights.safety.map(|v| format!("{v:.6e}")).unwrap_or_default(),
            sp = e.mean_speed(),
            rw = e.mean_reward(),
            sv = e.safety_violations,
            kr = e.keep_right_violations,
            cv = e.comfort_violations,
            lc = e.lane_changes,
            co = e.collisions,
            tot = e.total_violations(),
            col = s.collapsed,
            inc = outcome.incumbent == Some(s.index),
            w = s.wall_ms,
        );
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.out_dir = dir.to_path_buf();
        cfg.seeds = vec![7];
        cfg.highway.n_vehicles = 5;
        cfg.train.updates = 4;
        cfg.train.batch_size = 4;
        cfg.train.warmup_updates = 1;
        cfg.train.buffer_episodes = 4;
        cfg.train.buffer_steps = 5;
        cfg.train.densities = vec![4];
        cfg.search.samples = 3;
        cfg.search.budget_fraction = 0.5;
        cfg.search.eval_episodes = 1;
        cfg.search.eval_steps = 5;
        cfg
    }

    #[test]
    fn rejects_methods_without_a_penalty_knob() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.search.method = TrainMethod::Cdqn;
        assert!(run_search(&cfg).is_err());
    }

    #[test]
    fn search_smoke_draws_in_range_and_reports_an_incumbent_column() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let out = run_search(&cfg).unwrap();
        assert_eq!(out.samples.len(), 3);
        for s in &out.samples {
            for w in [s.weights.lane_change, s.weights.keep_right] {
                assert!(w >= cfg.search.lambda_min && w <= cfg.search.lambda_max);
            }
            assert!(s.weights.safety.is_none(), "shaping has no safety weight");
        }
        if let Some(i) = out.incumbent {
            assert!(!out.samples[i].collapsed);
        }

        let path = dir.path().join("search.csv");
        write_search_csv(&cfg, &out, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SEARCH_HEADER);
        assert_eq!(lines.count(), 3);
        let marked = text.matches(",true,").count();
        // `collapsed` and `incumbent` are the only boolean columns.
        assert!(marked <= 4);
    }

    #[test]
    fn search_is_deterministic_in_the_search_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let a = run_search(&cfg).unwrap();
        let b = run_search(&cfg).unwrap();
        let la: Vec<(u64, u64)> = a
            .samples
            .iter()
            .map(|s| (s.weights.lane_change.to_bits(), s.weights.keep_right.to_bits()))
            .collect();
        let lb: Vec<(u64, u64)> = b
            .samples
            .iter()
            .map(|s| (s.weights.lane_change.to_bits(), s.weights.keep_right.to_bits()))
            .collect();
        assert_eq!(la, lb);
        assert_eq!(a.incumbent, b.incumbent);
        assert_eq!(a.rho.to_bits(), b.rho.to_bits());
    }
}
