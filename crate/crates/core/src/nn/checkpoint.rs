use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::embed::Embedding;
use super::mlp::{param_count, Activation, Mlp};
use super::model::ScoreNet;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DMMK";
pub const FORMAT_VERSION: u32 = 1;

/// JSON sidecar written next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config_hash: String,
    pub params_sha256: String,
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub embedding: Embedding,
    pub epoch: usize,
}

/// SHA-256 of the canonical JSON serialization, hex encoded.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::to_value(config)?)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

fn params_hash(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary checkpoint and its sidecar.
pub fn save_checkpoint(path: &Path, net: &ScoreNet, config_hash: &str, epoch: usize) -> Result<CheckpointMeta> {
    let mlp = net.mlp();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(mlp.sizes().len() as u32).to_le_bytes())?;
    for &s in mlp.sizes() {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for p in mlp.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        config_hash: config_hash.to_string(),
        params_sha256: params_hash(mlp.params()),
        sizes: mlp.sizes().to_vec(),
        activation: mlp.activation(),
        embedding: net.embedding,
        epoch,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Checkpoint(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a checkpoint and verifies it against its sidecar.
pub fn load_checkpoint(path: &Path) -> Result<(ScoreNet, CheckpointMeta)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let n_sizes = read_u32(&mut r)? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Checkpoint(format!("implausible layer count {n_sizes}")));
    }
    let sizes = (0..n_sizes).map(|_| read_u32(&mut r).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let n = param_count(&sizes);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n {
        return Err(Error::Checkpoint(format!("expected {n} parameters, found {} bytes", bytes.len())));
    }
    let params: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();

    let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if meta.sizes != sizes {
        return Err(Error::Checkpoint("sidecar layer sizes disagree with the binary".into()));
    }
    if meta.params_sha256 != params_hash(&params) {
        return Err(Error::Checkpoint("parameter hash disagrees with the sidecar".into()));
    }
    let mut mlp = Mlp::zeros(sizes, meta.activation)?;
    mlp.set_params(&params)?;
    Ok((ScoreNet::new(meta.embedding, mlp)?, meta))
}
