//! Binary checkpoints: magic, little-endian u64 header length, JSON header,
//! then every tensor as little-endian f64 in header order.

use super::mlp::Mlp;
use super::sac::{SacConfig, SacLearner};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"AFFDSAC\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub config_hash: String,
    pub updates: u64,
    pub env_steps: u64,
    /// Adam step counters for actor, critics and temperature.
    pub adam_steps: [u64; 3],
    pub sac: SacConfig,
    pub tensors: Vec<TensorEntry>,
}

fn net_entries(prefix: &str, net: &Mlp, out: &mut Vec<(String, Vec<f64>)>) {
    for (i, t) in net.tensors().into_iter().enumerate() {
        let kind = if i % 2 == 0 { "w" } else { "b" };
        out.push((format!("{prefix}.{kind}{}", i / 2), t.to_vec()));
    }
}

/// Every persisted array in file order.
fn tensors_of(l: &SacLearner) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![("log_alpha".to_string(), vec![l.log_alpha])];
    net_entries("actor", &l.actor, &mut out);
    net_entries("q1", &l.q1, &mut out);
    net_entries("q2", &l.q2, &mut out);
    net_entries("q1_target", &l.q1_target, &mut out);
    net_entries("q2_target", &l.q2_target, &mut out);
    for (name, opt) in [("adam_actor", &l.actor_opt), ("adam_critic", &l.critic_opt), ("adam_alpha", &l.alpha_opt)] {
        for (i, m) in opt.m.iter().enumerate() {
            out.push((format!("{name}.m{i}"), m.clone()));
        }
        for (i, v) in opt.v.iter().enumerate() {
            out.push((format!("{name}.v{i}"), v.clone()));
        }
    }
    out
}

/// Mutable views in the same order as [`tensors_of`].
fn tensor_slots(l: &mut SacLearner) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = vec![std::slice::from_mut(&mut l.log_alpha)];
    out.extend(l.actor.tensors_mut());
    out.extend(l.q1.tensors_mut());
    out.extend(l.q2.tensors_mut());
    out.extend(l.q1_target.tensors_mut());
    out.extend(l.q2_target.tensors_mut());
    for opt in [&mut l.actor_opt, &mut l.critic_opt, &mut l.alpha_opt] {
        out.extend(opt.m.iter_mut().map(|v| v.as_mut_slice()));
        out.extend(opt.v.iter_mut().map(|v| v.as_mut_slice()));
    }
    out
}

pub fn to_bytes(l: &SacLearner) -> Result<Vec<u8>> {
    let tensors = tensors_of(l);
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        obs_dim: l.obs_dim,
        act_dim: l.act_dim,
        config_hash: l.config_hash.clone(),
        updates: l.updates,
        env_steps: l.env_steps,
        adam_steps: [l.actor_opt.t, l.critic_opt.t, l.alpha_opt.t],
        sac: l.cfg.clone(),
        tensors: tensors.iter().map(|(n, v)| TensorEntry { name: n.clone(), len: v.len() }).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::checkpoint("header", e.to_string()))?;
    let n_vals: usize = tensors.iter().map(|(_, v)| v.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * n_vals);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, v) in &tensors {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<SacLearner> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::checkpoint("magic", "not a checkpoint file"));
    }
    let mut pos = MAGIC.len();
    let len_bytes: [u8; 8] = bytes
        .get(pos..pos + 8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::checkpoint("header_length", "file truncated"))?;
    pos += 8;
    let hlen = u64::from_le_bytes(len_bytes) as usize;
    let json = bytes
        .get(pos..pos.saturating_add(hlen))
        .ok_or_else(|| Error::checkpoint("header", "file truncated inside header"))?;
    pos += hlen;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| Error::checkpoint("header", e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::checkpoint(
            "format_version",
            format!("found {}, this build reads {FORMAT_VERSION}", header.format_version),
        ));
    }
    let mut l = SacLearner::new(header.obs_dim, header.act_dim, header.sac.clone(), 0)
        .map_err(|e| Error::checkpoint("sac", e.to_string()))?;
    let expected: Vec<TensorEntry> =
        tensors_of(&l).into_iter().map(|(name, v)| TensorEntry { name, len: v.len() }).collect();
    if expected != header.tensors {
        return Err(Error::checkpoint("tensors", "tensor list does not match the declared architecture"));
    }
    for (slot, entry) in tensor_slots(&mut l).into_iter().zip(&header.tensors) {
        let n = 8 * entry.len;
        let raw = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::checkpoint(entry.name.clone(), "file truncated inside tensor data"))?;
        for (dst, chunk) in slot.iter_mut().zip(raw.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        pos += n;
    }
    if pos != bytes.len() {
        return Err(Error::checkpoint("trailing", format!("{} unexpected bytes after tensor data", bytes.len() - pos)));
    }
    l.config_hash = header.config_hash;
    l.updates = header.updates;
    l.env_steps = header.env_steps;
    [l.actor_opt.t, l.critic_opt.t, l.alpha_opt.t] = header.adam_steps;
    Ok(l)
}

pub fn save_checkpoint(l: &SacLearner, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(l)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SacLearner> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn learner() -> SacLearner {
        let mut l = SacLearner::new(4, 2, SacConfig { hidden: vec![5, 3], ..Default::default() }, 3).unwrap();
        l.config_hash = "abc".into();
        l.updates = 17;
        l.log_alpha = -0.123456789;
        l.actor_opt.t = 4;
        l.actor_opt.m[0][1] = 0.5;
        l
    }

    #[test]
    fn round_trip_is_exact() {
        let l = learner();
        let b = to_bytes(&l).unwrap();
        let back = from_bytes(&b).unwrap();
        assert_eq!(back, l);
        assert_eq!(to_bytes(&back).unwrap(), b);
    }

    #[test]
    fn truncation_names_the_field() {
        let b = to_bytes(&learner()).unwrap();
        let err = from_bytes(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { ref field, .. } if field == "adam_alpha.v0"), "{err}");
        let err = from_bytes(&b[..12]).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { ref field, .. } if field == "header_length"), "{err}");
        assert!(matches!(from_bytes(b"nonsense"), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut b = to_bytes(&learner()).unwrap();
        let key = b"\"format_version\":1";
        let at = b.windows(key.len()).position(|w| w == key).unwrap();
        // same length, so the header length field stays valid
        b[at + key.len() - 1] = b'7';
        let err = from_bytes(&b).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { ref field, .. } if field == "format_version"), "{err}");
    }
}
