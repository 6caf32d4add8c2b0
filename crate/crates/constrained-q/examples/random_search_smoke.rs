//! Tiny random search over the reward-shaping penalty weight. Each sample
//! trains the same frozen batch with a different lambda and is evaluated
//! bare-greedy under the full rule stack — the spread of (speed, violations)
//! pairs is the tuning burden the constrained methods never pay.

use constrained_q::harness::config::ExperimentConfig;
use constrained_q::harness::search::run_search;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.seeds = vec![0];
    cfg.highway.n_vehicles = 15;
    cfg.train.updates = 200;
    cfg.train.warmup_updates = 25;
    cfg.train.buffer_episodes = 20;
    cfg.train.buffer_steps = 30;
    cfg.train.densities = vec![15, 30];
    cfg.search.samples = 6;
    cfg.search.eval_episodes = 4;
    cfg.search.eval_steps = 30;

    let outcome = run_search(&cfg)?;
    println!(
        "{:<7} {:>11} {:>11} {:>7} {:>11} {:>13}",
        "sample", "lambda_lc", "lambda_kr", "speed", "violations", "note"
    );
    for s in &outcome.samples {
        let note = if Some(s.index) == outcome.incumbent {
            "incumbent"
        } else if s.collapsed {
            "collapsed"
        } else {
            ""
        };
        println!(
            "{:<7} {:>11.4e} {:>11.4e} {:>7.2} {:>11} {:>13}",
            s.index,
            s.weights.lane_change,
            s.weights.keep_right,
            s.eval.mean_speed(),
            s.eval.total_violations(),
            note
        );
    }
    println!(
        "\nspeed-vs-violations Spearman rho {:.3} (one-sided p = {:.4})",
        outcome.rho, outcome.p_value
    );
    Ok(())
}
