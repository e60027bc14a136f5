//! Binary checkpoint container.
//!
//! ```text
//! magic      8 bytes   "DSTCKPT\0"
//! version    u32 LE
//! header     u64 LE length, then UTF-8 JSON {"model": ModelConfig, "meta": CheckpointMeta}
//! tensors    u32 LE count, then per tensor:
//!              u32 LE name length, name bytes,
//!              u32 LE rank, rank × u64 LE dims,
//!              product(dims) × f64 LE values
//! checksum   32-byte SHA-256 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, Tracker};
use crate::error::{Error, Result};
use crate::numerics::{Params, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DSTCKPT\0";

/// Provenance stored next to the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Domain the parameters were last trained on.
    pub domain: String,
    /// `pretrain`, `finetune-pg`, `finetune-weak` or `init`.
    pub stage: String,
    pub epoch: Option<usize>,
    pub dev_metric: Option<f64>,
    pub seed: u64,
    pub train_config: Option<serde_json::Value>,
    pub pg_config: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    meta: CheckpointMeta,
}

fn encode(model: &Tracker, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        model: model.config().clone(),
        meta: meta.clone(),
    })?;
    let mut buf = Vec::with_capacity(header.len() + 8 * model.params().count() + 1024);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, t) in model.params().iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            buf.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub fn save_checkpoint(model: &Tracker, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptCheckpoint("length overflow".into()))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Tracker, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<(Tracker, CheckpointMeta)> {
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 4 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    if bytes.len() < 12 + 32 {
        return Err(corrupt("truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 12 };
    let header_len = r.len()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
    let count = r.u32()? as usize;
    let mut params = Params::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| corrupt("parameter name is not UTF-8"))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(format!("{name}: {e}")))?;
        if params.index_of(name).is_some() {
            return Err(Error::CorruptCheckpoint(format!("duplicate parameter {name}")));
        }
        params.add(name, t);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes"));
    }
    let model = Tracker::from_parts(header.model, params)?;
    Ok((model, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Tracker {
        let mut cfg = ModelConfig::desk();
        cfg.embedding.dim = 6;
        cfg.receptor_dim = 2;
        cfg.turn_dim = 5;
        cfg.gru_dim = 4;
        Tracker::new(cfg).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small();
        let meta = CheckpointMeta {
            domain: "taxi".into(),
            stage: "pretrain".into(),
            epoch: Some(3),
            dev_metric: Some(0.25),
            seed: 9,
            train_config: Some(serde_json::json!({"learning_rate": 0.001})),
            pg_config: None,
        };
        let bytes = encode(&m, &meta).unwrap();
        let (back, meta2) = decode(&bytes).unwrap();
        assert!(back.params().bit_eq(m.params()));
        assert_eq!(back.config(), m.config());
        assert_eq!(meta2, meta);
    }

    #[test]
    fn wrong_version_is_reported() {
        let m = small();
        let mut bytes = encode(&m, &CheckpointMeta::default()).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        match decode(&bytes) {
            Err(Error::CheckpointVersion { expected: 1, found: 7 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corruption_is_detected() {
        let m = small();
        let bytes = encode(&m, &CheckpointMeta::default()).unwrap();
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(matches!(decode(&flipped), Err(Error::CorruptCheckpoint(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(Error::CorruptCheckpoint(_))));
        assert!(matches!(decode(b"garbage!garbage"), Err(Error::CorruptCheckpoint(_))));
    }
}
