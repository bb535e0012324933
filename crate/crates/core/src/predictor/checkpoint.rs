//! Binary checkpoint format.
//!
//! ```text
//! b"MDLM" | version: u32 LE | header_len: u32 LE | header (TOML, UTF-8)
//! | parameter blocks as f32 LE, in header order
//! | optional AdamW first and second moments (f32 LE, flat)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::optim::AdamWState;

const MAGIC: &[u8; 4] = b"MDLM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub phase: String,
    pub training_step: u64,
    pub vocab_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer_step: Option<u64>,
    pub model: ModelConfig,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
    pub optimizer: Option<AdamWState>,
}

impl Checkpoint {
    pub fn new(params: ModelParams, phase: &str, training_step: u64, vocab_hash: String) -> Self {
        let header = CheckpointHeader {
            phase: phase.to_string(),
            training_step,
            vocab_hash,
            config_hash: None,
            optimizer_step: None,
            model: *params.config(),
            blocks: params
                .config()
                .blocks()
                .into_iter()
                .map(|b| BlockEntry {
                    name: b.name,
                    rows: b.rows,
                    cols: b.cols,
                })
                .collect(),
        };
        Self {
            header,
            params,
            optimizer: None,
        }
    }

    pub fn with_optimizer(mut self, state: AdamWState) -> Self {
        self.header.optimizer_step = Some(state.step);
        self.optimizer = Some(state);
        self
    }

    pub fn with_config_hash(mut self, hash: String) -> Self {
        self.header.config_hash = Some(hash);
        self
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = toml::to_string(&self.header)
            .map_err(|e| Error::format("checkpoint header", e.to_string()))?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        write_f32s(&mut out, &self.params.data);
        if let Some(opt) = &self.optimizer {
            write_f32s(&mut out, &opt.m);
            write_f32s(&mut out, &opt.v);
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("checkpoint", "bad magic bytes"));
        }
        let version = read_u32(&mut bytes)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let len = read_u32(&mut bytes)? as usize;
        if bytes.len() < len {
            return Err(Error::format("checkpoint", "truncated header"));
        }
        let (head, rest) = bytes.split_at(len);
        let head = std::str::from_utf8(head)
            .map_err(|e| Error::format("checkpoint header", e.to_string()))?;
        let header: CheckpointHeader =
            toml::from_str(head).map_err(|e| Error::format("checkpoint header", e.to_string()))?;
        let expected: Vec<BlockEntry> = header
            .model
            .blocks()
            .into_iter()
            .map(|b| BlockEntry {
                name: b.name,
                rows: b.rows,
                cols: b.cols,
            })
            .collect();
        if expected != header.blocks {
            return Err(Error::format(
                "checkpoint",
                "block table does not match model config",
            ));
        }
        let n = header.model.param_count();
        let mut rest = rest;
        let data = read_f32s(&mut rest, n)?;
        let params = ModelParams::from_data(header.model, data)?;
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let m = read_f32s(&mut rest, n)?;
                let v = read_f32s(&mut rest, n)?;
                Some(AdamWState { m, v, step })
            }
            None => None,
        };
        if !rest.is_empty() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self {
            header,
            params,
            optimizer,
        })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

fn write_f32s(out: &mut Vec<u8>, xs: &[f64]) {
    for &x in xs {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("checkpoint", "truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if r.len() < 4 * n {
        return Err(Error::format("checkpoint", "truncated parameter block"));
    }
    let (body, rest) = r.split_at(4 * n);
    *r = rest;
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}
