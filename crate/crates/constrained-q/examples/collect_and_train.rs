//! End-to-end miniature of the batch-constrained pipeline: collect a frozen
//! random-policy batch, train the full constrained learner on it for a few
//! hundred updates, and evaluate the extracted policy under the complete
//! rule stack.
//!
//! Desk-scale settings so it finishes in seconds; the real runs go through
//! the `cq train` subcommand with the defaults.

use constrained_q::harness::config::{ExperimentConfig, TrainMethod};
use constrained_q::harness::highway::{method_plan, train_one};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = dir.path().to_path_buf();
    cfg.seeds = vec![0];
    cfg.highway.n_vehicles = 15;
    cfg.train.updates = 300;
    cfg.train.eval_every = 100;
    cfg.train.warmup_updates = 50;
    cfg.train.buffer_episodes = 20;
    cfg.train.buffer_steps = 30;
    cfg.train.eval_episodes = 5;
    cfg.train.eval_steps = 30;
    cfg.train.densities = vec![15, 30];

    let plan = method_plan(&cfg, TrainMethod::CdqnMsc)?;
    println!(
        "training {} (mask {} rules, learned head '{}', horizon {})",
        plan.method,
        plan.mask_stack.len(),
        plan.learn_j.as_ref().map(|c| c.name.as_str()).unwrap_or("-"),
        plan.horizon
    );

    let run = train_one(&cfg, &plan, 0)?;
    println!("\nupdate  q_loss    j_loss    speed   violations  lane-changes");
    for s in &run.snapshots {
        println!(
            "{:>6}  {:>8.5}  {:>8.5}  {:>6.2}  {:>10}  {:>12}",
            s.update,
            s.q_loss,
            s.j_loss,
            s.eval.mean_speed(),
            s.eval.total_violations(),
            s.eval.lane_changes
        );
    }
    let e = run.final_eval();
    println!(
        "\nfinal: {} episodes, speed {:.2} m/s, {} safety / {} keep-right / {} comfort violations, {} collisions",
        e.episodes,
        e.mean_speed(),
        e.safety_violations,
        e.keep_right_violations,
        e.comfort_violations,
        e.collisions
    );
    println!("checkpoint: {}", run.checkpoint.display());
    println!("wall time: {} ms", run.wall_ms);
    Ok(())
}
