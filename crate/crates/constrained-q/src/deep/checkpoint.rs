//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian): the magic bytes `CQCK`, a format
//! version, an 8-byte configuration hash, the architecture tag and dimension
//! list, then the raw `f64` parameters. The config hash ties a checkpoint to
//! the exact run configuration that produced it; the architecture fields let
//! a loader refuse parameters that do not fit the network it is about to
//! drive.

use super::net::ValueNet;
use super::DeepError;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"CQCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: [u8; 8],
    pub arch_tag: u32,
    pub arch_dims: Vec<u32>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    /// Whether these parameters plug into `net` without reinterpretation.
    pub fn matches(&self, net: &dyn ValueNet) -> bool {
        self.arch_tag == net.arch_tag()
            && self.arch_dims == net.arch_dims()
            && self.params.len() == net.n_params()
    }
}

pub fn save_checkpoint(
    path: &Path,
    config_hash: [u8; 8],
    net: &dyn ValueNet,
    params: &[f64],
) -> Result<(), DeepError> {
    assert_eq!(params.len(), net.n_params());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_all(&config_hash)?;
    w.write_u32::<LittleEndian>(net.arch_tag())?;
    let dims = net.arch_dims();
    w.write_u32::<LittleEndian>(dims.len() as u32)?;
    for d in &dims {
        w.write_u32::<LittleEndian>(*d)?;
    }
    w.write_u64::<LittleEndian>(params.len() as u64)?;
    for p in params {
        w.write_f64::<LittleEndian>(*p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, DeepError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DeepError::BadCheckpoint("wrong magic bytes".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(DeepError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let mut config_hash = [0u8; 8];
    r.read_exact(&mut config_hash)?;
    let arch_tag = r.read_u32::<LittleEndian>()?;
    let n_dims = r.read_u32::<LittleEndian>()?;
    if n_dims > 64 {
        return Err(DeepError::BadCheckpoint(format!("implausible dim count {n_dims}")));
    }
    let mut arch_dims = Vec::with_capacity(n_dims as usize);
    for _ in 0..n_dims {
        arch_dims.push(r.read_u32::<LittleEndian>()?);
    }
    let n_params = r.read_u64::<LittleEndian>()?;
    if n_params > 1 << 30 {
        return Err(DeepError::BadCheckpoint(format!("implausible parameter count {n_params}")));
    }
    let mut params = Vec::with_capacity(n_params as usize);
    for _ in 0..n_params {
        params.push(r.read_f64::<LittleEndian>()?);
    }
    // Trailing junk means the file is not what the header promised.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(DeepError::BadCheckpoint("trailing bytes after parameters".into()));
    }
    Ok(Checkpoint { config_hash, arch_tag, arch_dims, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::net::{LinearNet, SetNet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_everything_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ck");
        let net = SetNet::new(3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = net.init_params(&mut rng);
        params[0] = f64::MIN_POSITIVE; // subnormal-adjacent edge
        params[1] = -0.0;
        let hash = *b"abcdefgh";
        save_checkpoint(&path, hash, &net, &params).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config_hash, hash);
        assert!(ck.matches(&net));
        assert_eq!(ck.params.len(), params.len());
        for (a, b) in ck.params.iter().zip(&params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_magic_and_truncation_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ck");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DeepError::BadCheckpoint(_))));

        let net = LinearNet::new(4, 2, 0);
        let params = vec![1.0; net.n_params()];
        save_checkpoint(&path, [0; 8], &net, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(DeepError::Io(_))));
    }

    #[test]
    fn architecture_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lin.ck");
        let lin = LinearNet::new(4, 2, 0);
        let params = vec![0.5; lin.n_params()];
        save_checkpoint(&path, [7; 8], &lin, &params).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert!(ck.matches(&lin));
        assert!(!ck.matches(&SetNet::new(2, 0)));
        assert!(!ck.matches(&LinearNet::new(5, 2, 0)));
    }
}
