//! Fixed-batch highway training: batch collection, method dispatch, seed
//! fan-out, evaluation snapshots, checkpoints, and the metrics CSV.
//!
//! Every method trains on the same per-seed frozen batch and is judged by the
//! same full rule set at evaluation time; they differ only in which
//! constraints enter the bootstrap masks, the loss, the reward, or the
//! execution-time action filter.

use super::config::{ExperimentConfig, TrainMethod};
use crate::deep::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::deep::encode::HighwayEncoder;
use crate::deep::eval::{evaluate_policy, EvalOutcome, EvalParams};
use crate::deep::net::{SetNet, ValueNet};
use crate::deep::optim::Optimizer;
use crate::deep::replay::FixedBatch;
use crate::deep::update::{shape_steps, Learner, UpdateParams};
use crate::deep::DeepError;
use crate::env::highway::{chains, HighwayConfig, HighwayState, KEEP_LANE, N_ACTIONS};
use crate::highway_constraints::build_stack;
use crate::mdp::{ConstraintSpec, Direction, Priority, Step};
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// What a training method feeds into the shared update/evaluation plumbing.
pub struct MethodPlan {
    pub method: TrainMethod,
    /// Constraints masking the bootstrap max (constrained update rule).
    pub mask_stack: Vec<ConstraintSpec<HighwayState>>,
    /// Multi-step constraint whose value heads are learned jointly.
    pub learn_j: Option<ConstraintSpec<HighwayState>>,
    /// Constraints masking action selection when the policy runs.
    pub exec_stack: Vec<ConstraintSpec<HighwayState>>,
    /// `(lambda, group)` penalty terms for the loss-penalty rule.
    pub penalty_groups: Vec<(f64, Vec<ConstraintSpec<HighwayState>>)>,
    /// Reward-shaping penalties `(lane_change, keep_right)`, if any.
    pub shaping: Option<(f64, f64)>,
    /// Truncated-value head horizon the network must carry.
    pub horizon: usize,
}

/// Single-step constraint marking any lane-change action, so a penalty weight
/// can price lane changes without a learned head.
fn lane_change_action_constraint() -> ConstraintSpec<HighwayState> {
    ConstraintSpec::single_step(
        "lane-change-action",
        |_s: &HighwayState, a| if a == KEEP_LANE { 0.0 } else { 1.0 },
        0.0,
        Direction::AtMost,
        Priority::Regular,
    )
}

fn single_step_of(stack: &[ConstraintSpec<HighwayState>]) -> Vec<ConstraintSpec<HighwayState>> {
    stack.iter().filter(|c| !c.is_multi_step()).cloned().collect()
}

fn safety_of(stack: &[ConstraintSpec<HighwayState>]) -> Vec<ConstraintSpec<HighwayState>> {
    stack
        .iter()
        .filter(|c| !c.is_multi_step() && c.priority == Priority::Safety)
        .cloned()
        .collect()
}

fn regular_singles_of(stack: &[ConstraintSpec<HighwayState>]) -> Vec<ConstraintSpec<HighwayState>> {
    stack
        .iter()
        .filter(|c| !c.is_multi_step() && c.priority == Priority::Regular)
        .cloned()
        .collect()
}

/// Resolves a training method against the configured constraint stack.
pub fn method_plan(cfg: &ExperimentConfig, method: TrainMethod) -> Result<MethodPlan> {
    let full = build_stack(&cfg.stack);
    let multi = full.iter().find(|c| c.is_multi_step()).cloned();
    let mut plan = MethodPlan {
        method,
        mask_stack: vec![],
        learn_j: None,
        exec_stack: vec![],
        penalty_groups: vec![],
        shaping: None,
        horizon: 0,
    };
    match method {
        TrainMethod::Dqn => {}
        TrainMethod::Cdqn => {
            plan.mask_stack = single_step_of(&full);
            plan.exec_stack = single_step_of(&full);
        }
        TrainMethod::CdqnMsc => {
            let spec = multi.context(
                "cdqn-msc needs a multi-step constraint in the stack; pick a comfort rule",
            )?;
            plan.horizon = spec.horizon();
            plan.learn_j = Some(spec);
            plan.mask_stack = full.clone();
            plan.exec_stack = full;
        }
        TrainMethod::Spe => {
            // Vanilla value learning; only the safety rules gate the argmax
            // when the policy is extracted.
            plan.exec_stack = safety_of(&full);
        }
        TrainMethod::RewardShaping => {
            plan.shaping = Some((cfg.train.lambda_lc, cfg.train.lambda_kr));
        }
        TrainMethod::LossPenalty => {
            plan.penalty_groups = vec![
                (cfg.train.lambda_safety, safety_of(&full)),
                (cfg.train.lambda_kr, regular_singles_of(&full)),
                (cfg.train.lambda_lc, vec![lane_change_action_constraint()]),
            ];
        }
    }
    Ok(plan)
}

/// Evaluation tallies pooled over the density sweep of one snapshot.
#[derive(Debug, Clone, Copy, Default)]
pub struct CombinedEval {
    pub episodes: usize,
    pub steps: usize,
    speed_weighted: f64,
    reward_weighted: f64,
    pub safety_violations: usize,
    pub keep_right_violations: usize,
    pub comfort_violations: usize,
    pub lane_changes: usize,
    pub collisions: usize,
}

impl CombinedEval {
    pub fn add(&mut self, o: &EvalOutcome) {
        self.episodes += o.episodes;
        self.steps += o.steps;
        self.speed_weighted += o.mean_speed * o.steps as f64;
        self.reward_weighted += o.mean_reward * o.steps as f64;
        self.safety_violations += o.safety_violations;
        self.keep_right_violations += o.keep_right_violations;
        self.comfort_violations += o.comfort_violations;
        self.lane_changes += o.lane_changes;
        self.collisions += o.collisions;
    }

    pub fn mean_speed(&self) -> f64 {
        if self.steps == 0 { f64::NAN } else { self.speed_weighted / self.steps as f64 }
    }

    pub fn mean_reward(&self) -> f64 {
        if self.steps == 0 { f64::NAN } else { self.reward_weighted / self.steps as f64 }
    }

    pub fn total_violations(&self) -> usize {
        self.safety_violations + self.keep_right_violations + self.comfort_violations
    }

    pub fn violations_per_episode(&self) -> f64 {
        if self.episodes == 0 {
            f64::NAN
        } else {
            self.total_violations() as f64 / self.episodes as f64
        }
    }

    pub fn violations_per_1000_steps(&self) -> f64 {
        if self.steps == 0 {
            f64::NAN
        } else {
            self.total_violations() as f64 * 1000.0 / self.steps as f64
        }
    }
}

/// One periodic evaluation during training.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot {
    pub update: usize,
    /// Mean losses over the updates since the previous snapshot.
    pub q_loss: f64,
    pub j_loss: f64,
    pub eval: CombinedEval,
}

/// Outcome of training one method on one seed.
pub struct SeedRun {
    pub seed: u64,
    pub method: TrainMethod,
    pub snapshots: Vec<Snapshot>,
    /// Update index at which the loss went non-finite, if it did; the saved
    /// checkpoint then holds the last finite parameters.
    pub aborted_at: Option<usize>,
    pub checkpoint: PathBuf,
    pub wall_ms: u128,
}

impl SeedRun {
    pub fn final_eval(&self) -> &CombinedEval {
        &self.snapshots.last().expect("every run evaluates at least once").eval
    }
}

/// Per-seed RNG streams, all derived from the seed so that every method sees
/// identical batch, initialization, and sampling randomness.
struct SeedStreams {
    batch: u64,
    init: u64,
    sampler: u64,
    eval: u64,
}

impl SeedStreams {
    fn derive(seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        SeedStreams {
            batch: master.gen(),
            init: master.gen(),
            sampler: master.gen(),
            eval: master.gen(),
        }
    }
}

pub fn batch_path(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("batch-s{seed}.cqbt"))
}

pub fn checkpoint_path(cfg: &ExperimentConfig, method: TrainMethod, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("ckpt-{method}-s{seed}.cqck"))
}

pub fn metrics_path(cfg: &ExperimentConfig, method: TrainMethod) -> PathBuf {
    cfg.out_dir.join(format!("metrics-{method}.csv"))
}

/// Loads the seed's frozen batch if the file exists, otherwise collects and
/// saves it. The batch depends only on the highway scenario, the buffer
/// shape, and the seed — never on the training method.
pub fn ensure_batch(cfg: &ExperimentConfig, seed: u64) -> Result<FixedBatch> {
    let path = batch_path(cfg, seed);
    let want = cfg.train.buffer_episodes * cfg.train.buffer_steps;
    if path.exists() {
        let batch = FixedBatch::load(&path)
            .with_context(|| format!("loading batch {}", path.display()))?;
        if batch.len() == want {
            return Ok(batch);
        }
        // Buffer shape changed under the file; fall through and recollect.
    }
    let streams = SeedStreams::derive(seed);
    let batch = FixedBatch::collect(
        &cfg.highway,
        cfg.train.buffer_episodes,
        cfg.train.buffer_steps,
        streams.batch,
    )
    .context("collecting the exploration batch")?;
    fs::create_dir_all(&cfg.out_dir)?;
    batch.save(&path).with_context(|| format!("saving batch {}", path.display()))?;
    Ok(batch)
}

/// Collects (or reuses) every configured seed's batch; optionally exports the
/// lane-change transition chains alongside. Returns one report line per seed.
pub fn run_collect(cfg: &ExperimentConfig, export_chains: bool) -> Result<Vec<String>> {
    let count_stack = build_stack(&cfg.stack);
    let mut lines = Vec::new();
    for &seed in &cfg.seeds {
        let batch = ensure_batch(cfg, seed)?;
        let mut line = format!(
            "seed {seed}: {} transitions, checksum {}",
            batch.len(),
            batch.checksum_hex()
        );
        if export_chains {
            let episodes: Vec<Vec<Step<HighwayState>>> = batch
                .steps()
                .chunks(cfg.train.buffer_steps)
                .map(|c| c.to_vec())
                .collect();
            let path = cfg.out_dir.join(format!("chains-s{seed}.csv"));
            let n = chains::export_transition_chains(&episodes, &count_stack, &path)
                .with_context(|| format!("writing {}", path.display()))?;
            let _ = write!(line, ", {n} chains -> {}", path.display());
        }
        lines.push(line);
    }
    Ok(lines)
}

fn eval_over_densities(
    cfg: &ExperimentConfig,
    net: &dyn ValueNet,
    params: &[f64],
    exec_stack: &[ConstraintSpec<HighwayState>],
    count_stack: &[ConstraintSpec<HighwayState>],
    eval_seed_base: u64,
) -> Result<CombinedEval, DeepError> {
    let p = EvalParams {
        episodes: cfg.train.eval_episodes,
        steps_per_episode: cfg.train.eval_steps,
        fallback_action: KEEP_LANE,
    };
    let mut combined = CombinedEval::default();
    for (di, &density) in cfg.train.densities.iter().enumerate() {
        let scenario = HighwayConfig { n_vehicles: density, ..cfg.highway.clone() };
        let out = evaluate_policy(
            net,
            params,
            &HighwayEncoder,
            &scenario,
            exec_stack,
            count_stack,
            &p,
            eval_seed_base.wrapping_add(di as u64),
        )?;
        combined.add(&out);
    }
    Ok(combined)
}

/// Trains one method on one seed's frozen batch, saving the checkpoint to
/// the method's default path.
pub fn train_one(cfg: &ExperimentConfig, plan: &MethodPlan, seed: u64) -> Result<SeedRun> {
    let ckpt = checkpoint_path(cfg, plan.method, seed);
    train_with(cfg, plan, seed, &ckpt)
}

/// Training core with an explicit checkpoint destination, so sweeps can keep
/// many runs of the same method and seed apart.
pub fn train_with(
    cfg: &ExperimentConfig,
    plan: &MethodPlan,
    seed: u64,
    ckpt: &Path,
) -> Result<SeedRun> {
    let started = Instant::now();
    let streams = SeedStreams::derive(seed);
    let batch = ensure_batch(cfg, seed)?;
    if !batch.verify_unchanged() {
        bail!("batch for seed {seed} failed its checksum before training");
    }

    // The shaping baseline trains on a rewritten copy; the original stays
    // frozen and is re-verified afterwards.
    let training_steps: Vec<Step<HighwayState>> = match plan.shaping {
        Some((lc, kr)) => shape_steps(batch.steps(), lc, kr),
        None => batch.steps().to_vec(),
    };

    let net = SetNet::new(N_ACTIONS, plan.horizon);
    let n_params = net.n_params();
    let mut learner = Learner::new(net, streams.init, Optimizer::adam(cfg.train.lr, n_params));
    let up = UpdateParams {
        gamma: cfg.train.gamma,
        tau: cfg.train.tau,
        warmup_updates: cfg.train.warmup_updates,
        fallback_action: KEEP_LANE,
    };
    let count_stack = build_stack(&cfg.stack);
    let mut sampler = ChaCha8Rng::seed_from_u64(streams.sampler);

    let mut snapshots = Vec::new();
    let mut aborted_at = None;
    let mut q_sum = 0.0;
    let mut j_sum = 0.0;
    let mut since_snapshot = 0usize;
    let mut snapshot_idx = 0u64;

    for update in 1..=cfg.train.updates {
        let idx = batch.sample_indices(cfg.train.batch_size, &mut sampler);
        let mb: Vec<&Step<HighwayState>> = idx.iter().map(|&i| &training_steps[i]).collect();
        let stepped = if !plan.penalty_groups.is_empty() {
            learner.loss_penalty_update(&mb, &HighwayEncoder, &plan.penalty_groups, &up)
        } else if plan.mask_stack.is_empty() && plan.learn_j.is_none() {
            learner.plain_dqn_update(&mb, &HighwayEncoder, &up)
        } else {
            learner.constrained_update(&mb, &HighwayEncoder, &plan.mask_stack, plan.learn_j.as_ref(), &up)
        };
        match stepped {
            Ok(stats) => {
                q_sum += stats.q_loss;
                j_sum += stats.j_loss;
                since_snapshot += 1;
            }
            Err(DeepError::NonFiniteLoss { update: at }) => {
                // The optimizer never applied the bad gradient, so the online
                // parameters are still the last finite ones.
                aborted_at = Some(at);
            }
            Err(e) => return Err(e).context("training update failed"),
        }
        let due = update % cfg.train.eval_every == 0
            || update == cfg.train.updates
            || aborted_at.is_some();
        if due {
            let eval = eval_over_densities(
                cfg,
                &learner.net,
                &learner.online,
                &plan.exec_stack,
                &count_stack,
                streams.eval.wrapping_add(snapshot_idx << 8),
            )
            .context("evaluation snapshot failed")?;
            let denom = since_snapshot.max(1) as f64;
            snapshots.push(Snapshot {
                update,
                q_loss: q_sum / denom,
                j_loss: j_sum / denom,
                eval,
            });
            q_sum = 0.0;
            j_sum = 0.0;
            since_snapshot = 0;
            snapshot_idx += 1;
        }
        if aborted_at.is_some() {
            break;
        }
    }

    if !batch.verify_unchanged() {
        bail!("batch for seed {seed} was mutated during training");
    }

    fs::create_dir_all(&cfg.out_dir)?;
    save_checkpoint(ckpt, cfg.hash_bytes(), &learner.net, &learner.online)
        .with_context(|| format!("saving checkpoint {}", ckpt.display()))?;

    Ok(SeedRun {
        seed,
        method: plan.method,
        snapshots,
        aborted_at,
        checkpoint: ckpt.to_path_buf(),
        wall_ms: started.elapsed().as_millis(),
    })
}

/// Trains the configured method across all seeds, one worker per seed,
/// results in seed order.
pub fn run_training(cfg: &ExperimentConfig, method: TrainMethod) -> Result<Vec<SeedRun>> {
    let plan = method_plan(cfg, method)?;
    // Batches are collected up front so parallel workers only read.
    for &seed in &cfg.seeds {
        ensure_batch(cfg, seed)?;
    }
    cfg.seeds.par_iter().map(|&seed| train_one(cfg, &plan, seed)).collect()
}

pub const METRICS_HEADER: &str = "config_hash,run_id,seed,update,q_loss,j_loss,mean_speed,\
mean_reward,safety_violations,keep_right_violations,comfort_violations,lane_changes,collisions,\
violations_per_episode,violations_per_1000_steps,wall_ms";

/// One metrics row per evaluation snapshot per seed; wall time sits in the
/// last column so reruns stay byte-identical up to it.
pub fn write_metrics_csv(cfg: &ExperimentConfig, runs: &[SeedRun], path: &Path) -> Result<()> {
    let hash = cfg.hash_hex();
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for run in runs {
        for snap in &run.snapshots {
            let e = &snap.eval;
            let _ = writeln!(
                out,
                "{hash},{m}-s{seed},{seed},{u},{ql:.6},{jl:.6},{sp:.4},{rw:.4},{sv},{kr},{cv},{lc},{co},{vpe:.4},{vpk:.4},{w}",
                m = run.method,
                seed = run.seed,
                u = snap.update,
                ql = snap.q_loss,
                jl = snap.j_loss,
                sp = e.mean_speed(),
                rw = e.mean_reward(),
                sv = e.safety_violations,
                kr = e.keep_right_violations,
                cv = e.comfort_violations,
                lc = e.lane_changes,
                co = e.collisions,
                vpe = e.violations_per_episode(),
                vpk = e.violations_per_1000_steps(),
                w = run.wall_ms,
            );
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Per-density evaluation of a stored checkpoint.
pub struct EvalReport {
    pub method: TrainMethod,
    pub per_density: Vec<(usize, CombinedEval)>,
    pub combined: CombinedEval,
}

impl EvalReport {
    /// The invariants `eval --assert` enforces: nothing the full rule set
    /// watches may have fired, and nobody may have been hit.
    pub fn satisfies_all_constraints(&self) -> bool {
        self.combined.total_violations() == 0 && self.combined.collisions == 0
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8}  {:>8}  {:>6}  {:>6}  {:>7}  {:>7}  {:>7}  {:>10}",
            "vehicles", "episodes", "speed", "safety", "keep-r", "comfort", "lane-ch", "collisions"
        );
        for (density, e) in &self.per_density {
            let _ = writeln!(
                out,
                "{density:>8}  {:>8}  {:>6.2}  {:>6}  {:>7}  {:>7}  {:>7}  {:>10}",
                e.episodes,
                e.mean_speed(),
                e.safety_violations,
                e.keep_right_violations,
                e.comfort_violations,
                e.lane_changes,
                e.collisions,
            );
        }
        let c = &self.combined;
        let _ = writeln!(
            out,
            "{:>8}  {:>8}  {:>6.2}  {:>6}  {:>7}  {:>7}  {:>7}  {:>10}",
            "all",
            c.episodes,
            c.mean_speed(),
            c.safety_violations,
            c.keep_right_violations,
            c.comfort_violations,
            c.lane_changes,
            c.collisions,
        );
        out
    }
}

/// Fixed so `eval` runs are reproducible without referencing training state.
const EVAL_CLI_SEED: u64 = 0x9e3779b97f4a7c15;

/// Evaluates a checkpoint under a method's execution stack, judged against
/// the full rule set, sweeping the configured densities.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    method: TrainMethod,
    ckpt: &Checkpoint,
) -> Result<EvalReport> {
    let plan = method_plan(cfg, method)?;
    let net = SetNet::new(N_ACTIONS, plan.horizon);
    if !ckpt.matches(&net) {
        bail!(
            "checkpoint architecture does not fit method {method} (got dims {:?})",
            ckpt.arch_dims
        );
    }
    let count_stack = build_stack(&cfg.stack);
    let p = EvalParams {
        episodes: cfg.train.eval_episodes,
        steps_per_episode: cfg.train.eval_steps,
        fallback_action: KEEP_LANE,
    };
    let mut per_density = Vec::new();
    let mut combined = CombinedEval::default();
    for (di, &density) in cfg.train.densities.iter().enumerate() {
        let scenario = HighwayConfig { n_vehicles: density, ..cfg.highway.clone() };
        let out = evaluate_policy(
            &net,
            &ckpt.params,
            &HighwayEncoder,
            &scenario,
            &plan.exec_stack,
            &count_stack,
            &p,
            EVAL_CLI_SEED.wrapping_add(di as u64),
        )?;
        let mut single = CombinedEval::default();
        single.add(&out);
        per_density.push((density, single));
        combined.add(&out);
    }
    Ok(EvalReport { method, per_density, combined })
}

/// Convenience for the CLI: load + evaluate.
pub fn evaluate_checkpoint_file(
    cfg: &ExperimentConfig,
    method: TrainMethod,
    path: &Path,
) -> Result<EvalReport> {
    let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    evaluate_checkpoint(cfg, method, &ckpt)
}
