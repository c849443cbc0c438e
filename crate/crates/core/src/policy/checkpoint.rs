//! Checkpoint file:
//!
//! ```text
//! "TBPC"  u32 version  u32 json_len  json (config echo)
//! u32 tensor_count
//! per tensor: u16 name_len, name, u8 ndim, u32 dims[ndim], f32 LE payload
//! ```

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

use super::config::{Ablation, PolicyConfig, TrainConfig};
use super::data::Normalizer;
use super::net::PolicyNet;
use super::Policy;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TBPC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConfigEcho {
    policy: PolicyConfig,
    ablation: Ablation,
    train: TrainConfig,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated("checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn push_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: impl IntoIterator<Item = f64>) {
    out.extend((name.len() as u16).to_le_bytes());
    out.extend(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend((d as u32).to_le_bytes());
    }
    for v in values {
        out.extend((v as f32).to_le_bytes());
    }
}

fn norm_tensors(norm: &Normalizer) -> [(&'static str, Vec<f64>); 4] {
    [
        ("norm.kin_mean", norm.kin_mean.to_vec()),
        ("norm.kin_std", norm.kin_std.to_vec()),
        ("norm.action_mean", norm.action_mean.to_vec()),
        ("norm.action_std", norm.action_std.to_vec()),
    ]
}

pub fn to_bytes(policy: &Policy) -> Result<Vec<u8>> {
    let echo = ConfigEcho {
        policy: policy.net.config.clone(),
        ablation: policy.ablation,
        train: policy.train_config.clone(),
    };
    let json = serde_json::to_vec(&echo)?;
    let mut out = Vec::new();
    out.extend(CHECKPOINT_MAGIC);
    out.extend(CHECKPOINT_VERSION.to_le_bytes());
    out.extend((json.len() as u32).to_le_bytes());
    out.extend(&json);
    let net = &policy.net;
    out.extend(((net.tensors.len() + 4) as u32).to_le_bytes());
    for t in &net.tensors {
        push_tensor(&mut out, &t.name, &t.shape, net.params[t.offset..t.offset + t.len()].iter().copied());
    }
    for (name, v) in norm_tensors(&policy.norm) {
        push_tensor(&mut out, name, &[v.len()], v);
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Policy> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic("checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            what: "checkpoint".into(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let json_len = r.u32()? as usize;
    let echo: ConfigEcho = serde_json::from_slice(r.take(json_len)?)?;
    let mut net = PolicyNet::zeros(&echo.policy)?;
    let mut norm = Normalizer::default();
    let count = r.u32()? as usize;
    let mut seen = vec![false; net.tensors.len()];
    let mut norm_seen = 0;
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Consistency("tensor name is not UTF-8".into()))?;
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let values: Vec<f64> = r
            .take(4 * len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if let Some(i) = net.tensors.iter().position(|t| t.name == name) {
            let spec = &net.tensors[i];
            if spec.shape != shape {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name}: expected {:?}, found {:?}",
                    spec.shape, shape
                )));
            }
            let off = spec.offset;
            net.params[off..off + len].copy_from_slice(&values);
            seen[i] = true;
            continue;
        }
        let target: &mut [f64] = match name.as_str() {
            "norm.kin_mean" => &mut norm.kin_mean,
            "norm.kin_std" => &mut norm.kin_std,
            "norm.action_mean" => &mut norm.action_mean,
            "norm.action_std" => &mut norm.action_std,
            _ => return Err(Error::Consistency(format!("unknown tensor {name}"))),
        };
        if target.len() != values.len() {
            return Err(Error::ShapeMismatch(format!("tensor {name}")));
        }
        target.copy_from_slice(&values);
        norm_seen += 1;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Consistency(format!("checkpoint lacks tensor {}", net.tensors[i].name)));
    }
    if norm_seen != 4 {
        return Err(Error::Consistency("checkpoint lacks normalization statistics".into()));
    }
    if r.pos != bytes.len() {
        return Err(Error::Consistency("trailing bytes after checkpoint".into()));
    }
    Ok(Policy {
        net,
        norm,
        ablation: echo.ablation,
        train_config: echo.train,
    })
}

pub fn save(policy: &Policy, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(policy)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Policy> {
    from_bytes(&fs::read(path)?)
}
