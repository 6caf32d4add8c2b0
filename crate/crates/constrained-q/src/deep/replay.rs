//! Fixed transition batches for offline training.
//!
//! Training on a frozen batch keeps experiments reproducible; the batch
//! carries a content checksum so any accidental mutation is caught.

use super::DeepError;
use crate::env::highway::{
    HighwayConfig, HighwayError, HighwaySim, HighwayState, NeighborView, N_ACTIONS,
};
use crate::mdp::Step;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const BATCH_MAGIC: &[u8; 4] = b"CQBT";
const BATCH_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct FixedBatch {
    steps: Vec<Step<HighwayState>>,
    checksum: [u8; 32],
}

impl FixedBatch {
    /// Collects `episodes * steps_per_episode` transitions by driving fresh
    /// scenarios with uniformly random actions. Episode boundaries never
    /// produce cross-episode transitions, and nothing is marked terminal —
    /// the task is continuing, truncation is not termination.
    pub fn collect(
        cfg: &HighwayConfig,
        episodes: usize,
        steps_per_episode: usize,
        seed: u64,
    ) -> Result<Self, HighwayError> {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut steps = Vec::with_capacity(episodes * steps_per_episode);
        for _ in 0..episodes {
            let sim_seed = master.gen::<u64>();
            let mut sim = HighwaySim::new(cfg.clone(), sim_seed)?;
            let mut state = sim.observe();
            for _ in 0..steps_per_episode {
                let action = master.gen_range(0..N_ACTIONS);
                let info = sim.step(action);
                let next = sim.observe();
                steps.push(Step {
                    state,
                    action,
                    reward: info.reward,
                    next: next.clone(),
                    terminal: false,
                });
                state = next;
            }
        }
        Ok(FixedBatch::from_steps(steps))
    }

    pub fn from_steps(steps: Vec<Step<HighwayState>>) -> Self {
        let checksum = hash_steps(&steps);
        FixedBatch { steps, checksum }
    }

    pub fn steps(&self) -> &[Step<HighwayState>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn checksum(&self) -> [u8; 32] {
        self.checksum
    }

    pub fn checksum_hex(&self) -> String {
        self.checksum.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Recomputes the content hash and compares it against the one taken at
    /// construction.
    pub fn verify_unchanged(&self) -> bool {
        hash_steps(&self.steps) == self.checksum
    }

    /// Uniformly samples a minibatch of indices.
    pub fn sample_indices(&self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..size.min(self.steps.len()))
            .map(|_| rng.gen_range(0..self.steps.len()))
            .collect()
    }

    /// Writes the batch to a binary file, checksum included.
    pub fn save(&self, path: &Path) -> Result<(), DeepError> {
        fn write_state<W: Write>(w: &mut W, s: &HighwayState) -> std::io::Result<()> {
            w.write_f64::<LittleEndian>(s.ego_v)?;
            w.write_u32::<LittleEndian>(s.ego_lane as u32)?;
            w.write_f64::<LittleEndian>(s.ego_v_des)?;
            w.write_f64::<LittleEndian>(s.ego_length)?;
            w.write_u32::<LittleEndian>(s.n_lanes as u32)?;
            w.write_f64::<LittleEndian>(s.sensor_range)?;
            w.write_u32::<LittleEndian>(s.neighbors.len() as u32)?;
            for n in &s.neighbors {
                w.write_f64::<LittleEndian>(n.dx)?;
                w.write_f64::<LittleEndian>(n.v)?;
                w.write_u32::<LittleEndian>(n.lane as u32)?;
                w.write_f64::<LittleEndian>(n.length)?;
            }
            Ok(())
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BATCH_MAGIC)?;
        w.write_u32::<LittleEndian>(BATCH_VERSION)?;
        w.write_all(&self.checksum)?;
        w.write_u64::<LittleEndian>(self.steps.len() as u64)?;
        for step in &self.steps {
            write_state(&mut w, &step.state)?;
            w.write_u32::<LittleEndian>(step.action as u32)?;
            w.write_f64::<LittleEndian>(step.reward)?;
            write_state(&mut w, &step.next)?;
            w.write_u8(step.terminal as u8)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a batch back and verifies the stored checksum against the
    /// recomputed content hash.
    pub fn load(path: &Path) -> Result<Self, DeepError> {
        fn read_state<R: Read>(r: &mut R) -> Result<HighwayState, DeepError> {
            let ego_v = r.read_f64::<LittleEndian>()?;
            let ego_lane = r.read_u32::<LittleEndian>()? as usize;
            let ego_v_des = r.read_f64::<LittleEndian>()?;
            let ego_length = r.read_f64::<LittleEndian>()?;
            let n_lanes = r.read_u32::<LittleEndian>()? as usize;
            let sensor_range = r.read_f64::<LittleEndian>()?;
            let n_neighbors = r.read_u32::<LittleEndian>()?;
            if n_neighbors > 10_000 {
                return Err(DeepError::BadCheckpoint(format!(
                    "implausible neighbor count {n_neighbors}"
                )));
            }
            let mut neighbors = Vec::with_capacity(n_neighbors as usize);
            for _ in 0..n_neighbors {
                neighbors.push(NeighborView {
                    dx: r.read_f64::<LittleEndian>()?,
                    v: r.read_f64::<LittleEndian>()?,
                    lane: r.read_u32::<LittleEndian>()? as usize,
                    length: r.read_f64::<LittleEndian>()?,
                });
            }
            Ok(HighwayState {
                ego_v,
                ego_lane,
                ego_v_des,
                ego_length,
                n_lanes,
                sensor_range,
                neighbors,
            })
        }
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BATCH_MAGIC {
            return Err(DeepError::BadCheckpoint("not a batch file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != BATCH_VERSION {
            return Err(DeepError::BadCheckpoint(format!("unsupported batch version {version}")));
        }
        let mut stored = [0u8; 32];
        r.read_exact(&mut stored)?;
        let n_steps = r.read_u64::<LittleEndian>()?;
        if n_steps > 50_000_000 {
            return Err(DeepError::BadCheckpoint(format!("implausible step count {n_steps}")));
        }
        let mut steps = Vec::with_capacity(n_steps as usize);
        for _ in 0..n_steps {
            let state = read_state(&mut r)?;
            let action = r.read_u32::<LittleEndian>()? as usize;
            let reward = r.read_f64::<LittleEndian>()?;
            let next = read_state(&mut r)?;
            let terminal = r.read_u8()? != 0;
            steps.push(Step { state, action, reward, next, terminal });
        }
        let batch = FixedBatch::from_steps(steps);
        if batch.checksum != stored {
            return Err(DeepError::BadCheckpoint(
                "stored checksum does not match file contents".into(),
            ));
        }
        Ok(batch)
    }
}

fn hash_steps(steps: &[Step<HighwayState>]) -> [u8; 32] {
    fn hash_state(hasher: &mut Sha256, s: &HighwayState) {
        hasher.update(s.ego_v.to_le_bytes());
        hasher.update((s.ego_lane as u64).to_le_bytes());
        hasher.update(s.ego_v_des.to_le_bytes());
        hasher.update(s.ego_length.to_le_bytes());
        hasher.update((s.n_lanes as u64).to_le_bytes());
        hasher.update(s.sensor_range.to_le_bytes());
        hasher.update((s.neighbors.len() as u64).to_le_bytes());
        for n in &s.neighbors {
            hasher.update(n.dx.to_le_bytes());
            hasher.update(n.v.to_le_bytes());
            hasher.update((n.lane as u64).to_le_bytes());
            hasher.update(n.length.to_le_bytes());
        }
    }
    let mut hasher = Sha256::new();
    for step in steps {
        hash_state(&mut hasher, &step.state);
        hasher.update((step.action as u64).to_le_bytes());
        hasher.update(step.reward.to_le_bytes());
        hash_state(&mut hasher, &step.next);
        hasher.update([step.terminal as u8]);
    }
    hasher.finalize().into()
}
