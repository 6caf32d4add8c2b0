//! Transition-chain export: five-decision windows centered on lane changes.
//!
//! Recorded driving logs come as short chains around each lane change (the
//! two decisions before, the change itself, the two after). This writes the
//! same shape from simulated episodes so downstream tooling can treat both
//! alike. One CSV row per decision step; columns are
//! `chain_id, step, ego_lane, ego_v, ego_v_des, action, reward`, one signal
//! column per constraint (its raw per-transition value), then `n_neighbors`
//! followed by three ego-relative features per visible neighbor
//! (`dx / sensor_range`, `(v - ego_v) / 10`, `lane - ego_lane`), so rows are
//! intentionally ragged.

use super::HighwayState;
use crate::mdp::{ConstraintSpec, Step};
use std::path::Path;

/// Writes every complete lane-change-centered chain; returns how many chains
/// were exported. Lane changes closer than two decisions to an episode
/// boundary have no complete window and are skipped.
pub fn export_transition_chains(
    episodes: &[Vec<Step<HighwayState>>],
    constraints: &[ConstraintSpec<HighwayState>],
    path: &Path,
) -> Result<usize, csv::Error> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    let mut header: Vec<String> = ["chain_id", "step", "ego_lane", "ego_v", "ego_v_des", "action", "reward"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for c in constraints {
        header.push(format!("sig_{}", c.name.replace('-', "_")));
    }
    header.push("n_neighbors".to_string());
    w.write_record(&header)?;

    let mut chain_id = 0usize;
    for episode in episodes {
        for t in 0..episode.len() {
            let changed = episode[t].next.ego_lane != episode[t].state.ego_lane;
            if !changed || t < 2 || t + 2 >= episode.len() {
                continue;
            }
            for (offset, step) in episode[t - 2..=t + 2].iter().enumerate() {
                let mut row: Vec<String> = vec![
                    chain_id.to_string(),
                    (t - 2 + offset).to_string(),
                    step.state.ego_lane.to_string(),
                    format!("{}", step.state.ego_v),
                    format!("{}", step.state.ego_v_des),
                    step.action.to_string(),
                    format!("{}", step.reward),
                ];
                for c in constraints {
                    row.push(format!("{}", c.signal_value(step)));
                }
                let s = &step.state;
                row.push(s.neighbors.len().to_string());
                for n in &s.neighbors {
                    row.push(format!("{}", n.dx / s.sensor_range));
                    row.push(format!("{}", (n.v - s.ego_v) / 10.0));
                    row.push(format!("{}", n.lane as f64 - s.ego_lane as f64));
                }
                w.write_record(&row)?;
            }
            chain_id += 1;
        }
    }
    w.flush()?;
    Ok(chain_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::highway::NeighborView;

    fn state(lane: usize) -> HighwayState {
        HighwayState {
            ego_v: 24.0,
            ego_lane: lane,
            ego_v_des: 25.0,
            ego_length: 5.0,
            n_lanes: 3,
            sensor_range: 100.0,
            neighbors: vec![NeighborView { dx: 40.0, v: 22.0, lane: 0, length: 5.0 }],
        }
    }

    fn episode_with_changes(at: &[usize], len: usize) -> Vec<Step<HighwayState>> {
        (0..len)
            .map(|t| {
                let changed = at.contains(&t);
                Step {
                    state: state(1),
                    action: if changed { 2 } else { 0 },
                    reward: 0.5,
                    next: state(if changed { 0 } else { 1 }),
                    terminal: false,
                }
            })
            .collect()
    }

    #[test]
    fn one_interior_change_yields_one_five_row_chain() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chains.csv");
        let episodes = vec![episode_with_changes(&[4], 10)];
        let n = export_transition_chains(&episodes, &[], &path).unwrap();
        assert_eq!(n, 1);
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6); // header + 5 rows
        assert!(lines[0].starts_with("chain_id,step,ego_lane"));
        // Window covers steps 2..=6.
        assert!(lines[1].starts_with("0,2,"));
        assert!(lines[5].starts_with("0,6,"));
    }

    #[test]
    fn quiet_episodes_and_boundary_changes_export_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chains.csv");
        let episodes = vec![
            episode_with_changes(&[], 10),
            episode_with_changes(&[0], 10),
            episode_with_changes(&[9], 10),
        ];
        let n = export_transition_chains(&episodes, &[], &path).unwrap();
        assert_eq!(n, 0);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn three_changes_make_three_chains_with_signal_columns() {
        use crate::mdp::{Direction, Priority};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chains.csv");
        let episodes = vec![episode_with_changes(&[3, 5, 7], 12)];
        let lc = ConstraintSpec::multi_step(
            "lane-change-budget",
            5,
            |s: &Step<HighwayState>| (s.next.ego_lane != s.state.ego_lane) as u8 as f64,
            2.0,
            Direction::AtMost,
            Priority::Regular,
        );
        let n = export_transition_chains(&episodes, &[lc], &path).unwrap();
        assert_eq!(n, 3);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("sig_lane_change_budget"));
        // The centered row of the first chain carries the active signal; the
        // neighbor block is one vehicle wide.
        let center: Vec<&str> =
            text.lines().find(|l| l.starts_with("0,3,")).unwrap().split(',').collect();
        assert_eq!(center[7], "1");
        assert_eq!(center[8], "1"); // one neighbor
        assert_eq!(center.len(), 9 + 3);
    }
}
