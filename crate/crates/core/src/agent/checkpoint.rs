//! Checkpoint container.
//!
//! ```text
//! GRLSTOP-CHECKPOINT <version>\n
//! <JSON header: version, parameter names and shapes, configs>\n
//! <little-endian f64 parameter arrays, in header order>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};

use super::network::PolicyNetwork;
use super::ppo::TrainerConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "GRLSTOP-CHECKPOINT";

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub policy: PolicyNetwork,
    pub trainer: TrainerConfig,
    pub env: EnvConfig,
    pub rollouts: usize,
    pub env_steps: usize,
}

impl PolicyCheckpoint {
    /// Errors unless the policy accepts observations of an environment with `batches` batches.
    pub fn check_batches(&self, batches: usize) -> Result<()> {
        if self.env.batches != batches || self.policy.obs_dim() != batches + 2 {
            return Err(Error::Shape(format!(
                "checkpoint was trained with B = {} (input length {}), requested B = {batches}",
                self.env.batches,
                self.policy.obs_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub actor_layers: usize,
    pub params: Vec<ParamSpec>,
    pub trainer: TrainerConfig,
    pub env: EnvConfig,
    pub rollouts: usize,
    pub env_steps: usize,
}

impl CheckpointHeader {
    fn of(ckpt: &PolicyCheckpoint) -> Self {
        let p = &ckpt.policy;
        Self {
            format_version: FORMAT_VERSION,
            actor_layers: p.actor.layers.len(),
            params: p
                .param_names()
                .into_iter()
                .zip(p.shapes())
                .map(|(name, shape)| ParamSpec { name, shape })
                .collect(),
            trainer: ckpt.trainer.clone(),
            env: ckpt.env.clone(),
            rollouts: ckpt.rollouts,
            env_steps: ckpt.env_steps,
        }
    }
}

pub fn encode(ckpt: &PolicyCheckpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_string(&CheckpointHeader::of(ckpt))?;
    let mut out = Vec::with_capacity(header.len() + 64 + ckpt.policy.num_params() * 8);
    writeln!(out, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(out, "{header}")?;
    for slice in ckpt.policy.param_slices() {
        for v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn split_line(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let pos = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let line = std::str::from_utf8(&bytes[..pos])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    Ok((line, &bytes[pos + 1..]))
}

/// Reads just the header.
pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    let (first, rest) = split_line(bytes)?;
    let version = first
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Checkpoint("missing checkpoint signature".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let (json, body) = split_line(rest)?;
    let header: CheckpointHeader = serde_json::from_str(json)?;
    if header.format_version != version {
        return Err(Error::VersionMismatch {
            expected: version,
            found: header.format_version,
        });
    }
    Ok((header, body))
}

pub fn decode(bytes: &[u8]) -> Result<PolicyCheckpoint> {
    let (header, body) = decode_header(bytes)?;
    let total: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if body.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} bytes of weights, found {}",
            total * 8,
            body.len()
        )));
    }
    let mut arrays = Vec::with_capacity(header.params.len());
    let mut chunks = body.chunks_exact(8);
    for p in &header.params {
        let len: usize = p.shape.iter().product();
        let arr: Vec<f64> = chunks
            .by_ref()
            .take(len)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        arrays.push(arr);
    }
    let shapes: Vec<Vec<usize>> = header.params.iter().map(|p| p.shape.clone()).collect();
    let policy = PolicyNetwork::from_parts(&shapes, arrays, header.actor_layers)
        .ok_or_else(|| Error::Checkpoint("inconsistent layer shapes".into()))?;
    Ok(PolicyCheckpoint {
        policy,
        trainer: header.trainer,
        env: header.env,
        rollouts: header.rollouts,
        env_steps: header.env_steps,
    })
}

pub fn save_checkpoint(ckpt: &PolicyCheckpoint, path: &Path) -> Result<()> {
    fs::write(path, encode(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyCheckpoint> {
    decode(&fs::read(path)?)
}
