//! Command-line front end for the constrained Q-learning toolkit.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! failure during training, 3 a requested invariant check failed.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use constrained_q::harness::config::ExperimentConfig;
use constrained_q::harness::{fig3, highway, plotdata, search, tree};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cq",
    version,
    about = "Constrained Q-learning: tabular counter-examples, tree sweeps, and batch-constrained highway training"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every experiment subcommand. A config file, when given,
/// overrides the flags field by field.
#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config; values in the file win over flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for batches, checkpoints, and CSV results.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seeds to run, comma-separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training method: dqn, cdqn, cdqn-msc, spe, reward-shaping, loss-penalty.
    #[arg(long)]
    method: Option<String>,
    /// Gradient updates per seed.
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    warmup_updates: Option<usize>,
    #[arg(long)]
    buffer_episodes: Option<usize>,
    #[arg(long)]
    buffer_steps: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Evaluation episodes per traffic density.
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    eval_steps: Option<usize>,
    /// Vehicle counts swept at evaluation, comma-separated.
    #[arg(long, value_delimiter = ',')]
    densities: Option<Vec<usize>>,
    #[arg(long)]
    lambda_lc: Option<f64>,
    #[arg(long)]
    lambda_kr: Option<f64>,
    #[arg(long)]
    lambda_safety: Option<f64>,
    /// Vehicles on the road while collecting the training batch.
    #[arg(long)]
    n_vehicles: Option<usize>,
    #[arg(long)]
    n_lanes: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the twelve-state counter-example and print the learned policy.
    Fig3 {
        /// Learn without the constraint to show the failure it prevents.
        #[arg(long)]
        unconstrained: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep decision-tree depths, comparing masked learning with shaping.
    TreeSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Tree depths, comma-separated.
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        #[arg(long)]
        seeds_per_depth: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Also write per-episode learning curves for the first seed.
        #[arg(long)]
        curves: bool,
    },
    /// Collect (or reuse) each seed's frozen exploration batch.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Also export lane-change transition chains per seed.
        #[arg(long)]
        chains: bool,
    },
    /// Train one method across all seeds on the frozen batches.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Random search over the penalty weight of a shaping/penalty baseline.
    Search {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        search_seed: Option<u64>,
        /// Baseline to tune: reward-shaping or loss-penalty.
        #[arg(long)]
        search_method: Option<String>,
        #[arg(long)]
        lambda_min: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        budget_fraction: Option<f64>,
    },
    /// Evaluate a stored checkpoint across the configured densities.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint file to load.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Fail (exit 3) unless the policy satisfies every constraint.
        #[arg(long = "assert")]
        assert_clean: bool,
    },
    /// Reshape a result CSV into tidy plot,series,x,y,aux rows.
    PlotData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn apply_common(cfg: &mut ExperimentConfig, c: &CommonArgs) {
    if let Some(d) = &c.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = s.clone();
    }
}

fn apply_train(cfg: &mut ExperimentConfig, t: &TrainArgs) -> Result<()> {
    if let Some(m) = &t.method {
        cfg.train.method = m.parse().map_err(anyhow::Error::msg)?;
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = &t.$field { cfg.train.$field = v.clone(); })*
        };
    }
    set!(
        updates,
        batch_size,
        lr,
        gamma,
        tau,
        warmup_updates,
        buffer_episodes,
        buffer_steps,
        eval_every,
        eval_episodes,
        eval_steps,
        densities,
        lambda_lc,
        lambda_kr,
        lambda_safety
    );
    if let Some(v) = t.n_vehicles {
        cfg.highway.n_vehicles = v;
    }
    if let Some(v) = t.n_lanes {
        cfg.highway.n_lanes = v;
    }
    Ok(())
}

/// Flags first, then the config file on top, then validation.
fn finalize(mut cfg: ExperimentConfig, common: &CommonArgs, experiment: &str) -> Result<ExperimentConfig> {
    cfg.experiment = experiment.to_string();
    if let Some(path) = &common.config {
        cfg = cfg.with_file_overrides(path)?;
        cfg.experiment = experiment.to_string();
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg)
}

fn run() -> Result<u8> {
    match Cli::parse().cmd {
        Cmd::Fig3 { unconstrained, seed } => {
            let report = fig3::run_fig3_demo(!unconstrained, seed)?;
            print!("{}", report.render());
            Ok(0)
        }
        Cmd::TreeSweep {
            common,
            depths,
            seeds_per_depth,
            episodes,
            epsilon,
            alpha,
            curves,
        } => {
            let mut cfg = ExperimentConfig::default();
            apply_common(&mut cfg, &common);
            if let Some(d) = depths {
                cfg.tree.depths = d;
            }
            if let Some(v) = seeds_per_depth {
                cfg.tree.seeds_per_depth = v;
            }
            if let Some(v) = episodes {
                cfg.tree.episodes = v;
            }
            if let Some(v) = epsilon {
                cfg.tree.epsilon = v;
            }
            if let Some(v) = alpha {
                cfg.tree.alpha = v;
            }
            cfg.tree.curves |= curves;
            let cfg = finalize(cfg, &common, "tree-sweep")?;
            let sweep = tree::run_tree_sweep(&cfg)?;
            let hash = cfg.hash_hex();
            let runs_path = cfg.out_dir.join("tree_runs.csv");
            let summary_path = cfg.out_dir.join("tree_summary.csv");
            tree::write_runs_csv(&sweep, &hash, &runs_path)?;
            tree::write_summary_csv(&sweep, &hash, &summary_path)?;
            print!("{}", tree::render_summaries(&sweep));
            println!("wrote {}", runs_path.display());
            println!("wrote {}", summary_path.display());
            if cfg.tree.curves {
                let curves_path = cfg.out_dir.join("tree_curves.csv");
                tree::write_curves_csv(&cfg, &hash, &curves_path)?;
                println!("wrote {}", curves_path.display());
            }
            Ok(0)
        }
        Cmd::Collect { common, train, chains } => {
            let mut cfg = ExperimentConfig::default();
            apply_common(&mut cfg, &common);
            apply_train(&mut cfg, &train)?;
            let cfg = finalize(cfg, &common, "collect")?;
            for line in highway::run_collect(&cfg, chains)? {
                println!("{line}");
            }
            Ok(0)
        }
        Cmd::Train { common, train } => {
            let mut cfg = ExperimentConfig::default();
            apply_common(&mut cfg, &common);
            apply_train(&mut cfg, &train)?;
            let cfg = finalize(cfg, &common, "train")?;
            let method = cfg.train.method;
            let runs = highway::run_training(&cfg, method)?;
            let metrics = highway::metrics_path(&cfg, method);
            highway::write_metrics_csv(&cfg, &runs, &metrics)?;
            let mut any_aborted = false;
            for run in &runs {
                let e = run.final_eval();
                let status = match run.aborted_at {
                    Some(u) => {
                        any_aborted = true;
                        format!("ABORTED at update {u} (non-finite loss)")
                    }
                    None => "ok".to_string(),
                };
                println!(
                    "seed {:>3}: speed {:>6.2}  violations {:>4} (safety {}, keep-right {}, comfort {})  collisions {}  lane-changes {:>3}  [{}]",
                    run.seed,
                    e.mean_speed(),
                    e.total_violations(),
                    e.safety_violations,
                    e.keep_right_violations,
                    e.comfort_violations,
                    e.collisions,
                    e.lane_changes,
                    status
                );
            }
            println!("wrote {}", metrics.display());
            Ok(if any_aborted { 2 } else { 0 })
        }
        Cmd::Search {
            common,
            train,
            samples,
            search_seed,
            search_method,
            lambda_min,
            lambda_max,
            budget_fraction,
        } => {
            let mut cfg = ExperimentConfig::default();
            apply_common(&mut cfg, &common);
            apply_train(&mut cfg, &train)?;
            if let Some(v) = samples {
                cfg.search.samples = v;
            }
            if let Some(v) = search_seed {
                cfg.search.search_seed = v;
            }
            if let Some(m) = &search_method {
                cfg.search.method = m.parse().map_err(anyhow::Error::msg)?;
            }
            if let Some(v) = lambda_min {
                cfg.search.lambda_min = v;
            }
            if let Some(v) = lambda_max {
                cfg.search.lambda_max = v;
            }
            if let Some(v) = budget_fraction {
                cfg.search.budget_fraction = v;
            }
            let cfg = finalize(cfg, &common, "search")?;
            let outcome = search::run_search(&cfg)?;
            let path = cfg.out_dir.join(format!("search-{}.csv", outcome.method));
            search::write_search_csv(&cfg, &outcome, &path)?;
            for s in &outcome.samples {
                let e = &s.eval;
                let mut tags = Vec::new();
                if s.collapsed {
                    tags.push("collapsed");
                }
                if s.aborted {
                    tags.push("aborted");
                }
                if outcome.incumbent == Some(s.index) {
                    tags.push("incumbent");
                }
                let safety = s
                    .weights
                    .safety
                    .map(|v| format!(" safety {v:>9.3e}"))
                    .unwrap_or_default();
                println!(
                    "sample {:>3}  lc {:>9.3e} kr {:>9.3e}{}  speed {:>6.2}  violations {:>4}  lane-changes {:>3}  {}",
                    s.index,
                    s.weights.lane_change,
                    s.weights.keep_right,
                    safety,
                    e.mean_speed(),
                    e.total_violations(),
                    e.lane_changes,
                    tags.join(" ")
                );
            }
            println!(
                "speed-vs-violations Spearman rho = {:.3}, one-sided p = {:.4}",
                outcome.rho, outcome.p_value
            );
            match outcome.incumbent {
                Some(i) => {
                    let w = &outcome.samples[i].weights;
                    println!(
                        "incumbent: sample {i} (lc {:.3e}, kr {:.3e}{})",
                        w.lane_change,
                        w.keep_right,
                        w.safety.map(|v| format!(", safety {v:.3e}")).unwrap_or_default()
                    );
                }
                None => println!("incumbent: none (every sample collapsed or aborted)"),
            }
            println!("wrote {}", path.display());
            let all_aborted = outcome.samples.iter().all(|s| s.aborted);
            Ok(if all_aborted { 2 } else { 0 })
        }
        Cmd::Eval { common, train, checkpoint, assert_clean } => {
            let mut cfg = ExperimentConfig::default();
            apply_common(&mut cfg, &common);
            apply_train(&mut cfg, &train)?;
            let cfg = finalize(cfg, &common, "eval")?;
            let report = highway::evaluate_checkpoint_file(&cfg, cfg.train.method, &checkpoint)?;
            print!("{}", report.render());
            if assert_clean && !report.satisfies_all_constraints() {
                eprintln!("constraint check failed: the policy violated at least one rule");
                return Ok(3);
            }
            Ok(0)
        }
        Cmd::PlotData { input, output } => {
            let n = plotdata::write_plot_data(&input, &output)?;
            println!("wrote {} tidy rows to {}", n, output.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
