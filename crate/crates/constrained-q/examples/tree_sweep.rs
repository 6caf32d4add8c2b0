//! Sample-complexity sweep over decision-tree depth: constrained Q-learning
//! against reward shaping, same seeds, same exploration. The ratio column is
//! masked samples over shaped samples at convergence — smaller is better for
//! masking, and it shrinks as the tree deepens and the shaped learner has
//! ever more decision states to unlearn.

use constrained_q::harness::config::ExperimentConfig;
use constrained_q::harness::tree::{render_summaries, run_tree_sweep};

fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.tree.depths = vec![1, 2, 3, 4];
    cfg.tree.seeds_per_depth = 10;

    let sweep = run_tree_sweep(&cfg)?;
    print!("{}", render_summaries(&sweep));
    Ok(())
}
