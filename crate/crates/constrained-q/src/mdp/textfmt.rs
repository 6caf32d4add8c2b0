//! Line-based text format for finite MDPs, used for test fixtures.
//!
//! ```text
//! # finite-mdp v1
//! states 3
//! actions 2
//! gamma 0.9
//! terminal 2
//! start 0 1
//! reward 0 1 0.5
//! transition 0 0 1 1
//! transition 0 1 2 1
//! ```
//!
//! `reward s a r` and `transition s a s2 p` lines are sparse; omitted rewards
//! are zero and omitted transition rows default to a self-loop so terminal
//! states need no explicit entries. Floats round-trip exactly through the
//! shortest decimal representation.

use super::{FiniteMdp, MdpError};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

pub fn write_mdp<W: Write>(mdp: &FiniteMdp, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# finite-mdp v1")?;
    writeln!(w, "states {}", mdp.n_states())?;
    writeln!(w, "actions {}", mdp.n_actions())?;
    writeln!(w, "gamma {}", mdp.gamma())?;
    let terminals: Vec<String> = mdp.terminal_states().map(|s| s.to_string()).collect();
    if !terminals.is_empty() {
        writeln!(w, "terminal {}", terminals.join(" "))?;
    }
    for (s, p) in mdp.initial_dist().iter().enumerate() {
        if *p > 0.0 {
            writeln!(w, "start {} {}", s, p)?;
        }
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let r = mdp.r(s, a);
            if r != 0.0 {
                writeln!(w, "reward {} {} {}", s, a, r)?;
            }
        }
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for (s2, p) in mdp.successors(s, a) {
                // Terminal self-loops are implied.
                if mdp.is_terminal(s) && s2 == s && p == 1.0 {
                    continue;
                }
                writeln!(w, "transition {} {} {} {}", s, a, s2, p)?;
            }
        }
    }
    Ok(())
}

pub fn read_mdp<R: Read>(r: R) -> Result<FiniteMdp, MdpError> {
    let reader = BufReader::new(r);
    let mut n_states: Option<usize> = None;
    let mut n_actions: Option<usize> = None;
    let mut gamma = 1.0;
    let mut terminal_list: Vec<usize> = Vec::new();
    let mut starts: Vec<(usize, f64)> = Vec::new();
    let mut rewards: Vec<(usize, usize, f64)> = Vec::new();
    let mut transitions: Vec<(usize, usize, usize, f64)> = Vec::new();

    let parse_err = |line: usize, message: &str| MdpError::Parse { line, message: message.to_string() };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap();
        let rest: Vec<&str> = parts.collect();
        let usize_at = |i: usize| -> Result<usize, MdpError> {
            rest.get(i)
                .ok_or_else(|| parse_err(line_no, "missing field"))?
                .parse()
                .map_err(|_| parse_err(line_no, "expected integer"))
        };
        let f64_at = |i: usize| -> Result<f64, MdpError> {
            rest.get(i)
                .ok_or_else(|| parse_err(line_no, "missing field"))?
                .parse()
                .map_err(|_| parse_err(line_no, "expected number"))
        };
        match keyword {
            "states" => n_states = Some(usize_at(0)?),
            "actions" => n_actions = Some(usize_at(0)?),
            "gamma" => gamma = f64_at(0)?,
            "terminal" => {
                for (i, _) in rest.iter().enumerate() {
                    terminal_list.push(usize_at(i)?);
                }
            }
            "start" => starts.push((usize_at(0)?, f64_at(1)?)),
            "reward" => rewards.push((usize_at(0)?, usize_at(1)?, f64_at(2)?)),
            "transition" => transitions.push((usize_at(0)?, usize_at(1)?, usize_at(2)?, f64_at(3)?)),
            other => return Err(parse_err(line_no, &format!("unknown keyword {other:?}"))),
        }
    }

    let n_states = n_states.ok_or_else(|| parse_err(0, "missing states line"))?;
    let n_actions = n_actions.ok_or_else(|| parse_err(0, "missing actions line"))?;
    let in_range = |s: usize| s < n_states;

    let mut terminal = vec![false; n_states];
    for s in terminal_list {
        if !in_range(s) {
            return Err(parse_err(0, "terminal state out of range"));
        }
        terminal[s] = true;
    }

    let mut kernel = vec![0.0; n_states * n_actions * n_states];
    let mut row_touched = vec![false; n_states * n_actions];
    for (s, a, s2, p) in transitions {
        if !in_range(s) || !in_range(s2) || a >= n_actions {
            return Err(parse_err(0, "transition index out of range"));
        }
        kernel[(s * n_actions + a) * n_states + s2] = p;
        row_touched[s * n_actions + a] = true;
    }
    // Untouched rows default to self-loops (covers terminal states).
    for s in 0..n_states {
        for a in 0..n_actions {
            if !row_touched[s * n_actions + a] {
                kernel[(s * n_actions + a) * n_states + s] = 1.0;
            }
        }
    }

    let mut reward = vec![0.0; n_states * n_actions];
    for (s, a, r) in rewards {
        if !in_range(s) || a >= n_actions {
            return Err(parse_err(0, "reward index out of range"));
        }
        reward[s * n_actions + a] = r;
    }

    let mut initial = vec![0.0; n_states];
    for (s, p) in starts {
        if !in_range(s) {
            return Err(parse_err(0, "start state out of range"));
        }
        initial[s] = p;
    }

    FiniteMdp::new(n_states, n_actions, kernel, reward, terminal, gamma, initial)
}

pub fn save_mdp(mdp: &FiniteMdp, path: &Path) -> Result<(), MdpError> {
    let file = std::fs::File::create(path)?;
    write_mdp(mdp, file)?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<FiniteMdp, MdpError> {
    let file = std::fs::File::open(path)?;
    read_mdp(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::DeterministicMdpBuilder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    #[test]
    fn round_trip_deterministic_mdp() {
        let mut b = DeterministicMdpBuilder::new(4, 2, 1.0);
        b.edge(0, 0, 1, 0.0).edge(0, 1, 2, 0.25).chain(1, 3, 2.0).chain(2, 3, -1.0).terminal(3);
        let mdp = b.build().unwrap();
        let mut buf = Vec::new();
        write_mdp(&mdp, &mut buf).unwrap();
        let back = read_mdp(buf.as_slice()).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn round_trip_random_stochastic_mdp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (ns, na) = (5, 3);
        let mut kernel = vec![0.0; ns * na * ns];
        for row in kernel.chunks_mut(ns) {
            let mut sum = 0.0;
            for p in row.iter_mut() {
                *p = rng.gen::<f64>();
                sum += *p;
            }
            let mut acc = 0.0;
            for p in row.iter_mut().take(ns - 1) {
                *p /= sum;
                acc += *p;
            }
            row[ns - 1] = 1.0 - acc;
        }
        let reward: Vec<f64> = (0..ns * na).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut initial = vec![0.0; ns];
        initial[0] = 1.0;
        let mdp =
            crate::mdp::FiniteMdp::new(ns, na, kernel, reward, vec![false; ns], 0.9, initial).unwrap();
        let mut buf = Vec::new();
        write_mdp(&mdp, &mut buf).unwrap();
        let back = read_mdp(buf.as_slice()).unwrap();
        assert_eq!(mdp, back);
    }

    #[test]
    fn malformed_line_reports_position() {
        let text = "states 2\nactions 1\nbogus 1 2\n";
        let err = read_mdp(text.as_bytes());
        match err {
            Err(MdpError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
