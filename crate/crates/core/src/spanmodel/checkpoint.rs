//! Single-file checkpoint: magic, version, JSON header (config, vocab,
//! tensor shapes), then every tensor as little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::EncoderParams;
use super::{SpanModel, SpanModelConfig};
use crate::corpus::Vocab;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"QADBCKPT";

#[derive(Serialize, Deserialize)]
struct Header {
    config: SpanModelConfig,
    vocab: Vocab,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

pub fn to_bytes(model: &SpanModel) -> Result<Vec<u8>> {
    let tensors = model.params.named_tensors();
    let header = Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorMeta { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let n_values: usize = tensors.iter().map(|(_, t)| t.len()).sum();

    let mut out = Vec::with_capacity(8 + 4 + 8 + header_bytes.len() + 8 + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&(n_values as u64).to_le_bytes());
    for (_, t) in &tensors {
        for &x in t.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(buf: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::CorruptCheckpoint(format!("truncated while reading {what}")));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn read_u64(buf: &mut &[u8], what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(take(buf, 8, what)?.try_into().unwrap()))
}

pub fn from_bytes(bytes: &[u8]) -> Result<SpanModel> {
    let mut buf = bytes;
    if take(&mut buf, 8, "magic")? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(&mut buf, 4, "version")?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, supported: CHECKPOINT_VERSION });
    }
    let header_len = read_u64(&mut buf, "header length")? as usize;
    let header: Header = serde_json::from_slice(take(&mut buf, header_len, "header")?)
        .map_err(|e| Error::json("checkpoint header", e))?;
    let n_values = read_u64(&mut buf, "value count")? as usize;
    if buf.len() != n_values.saturating_mul(8) {
        return Err(Error::CorruptCheckpoint(format!(
            "expected {} tensor bytes, found {}",
            n_values.saturating_mul(8),
            buf.len()
        )));
    }

    header.config.validate()?;
    if header.vocab.fingerprint() != header.config.vocab_fingerprint {
        return Err(Error::Fingerprint {
            expected: header.config.vocab_fingerprint.clone(),
            found: header.vocab.fingerprint(),
        });
    }
    let mut params = EncoderParams::zeros(header.config.dims(header.vocab.len()));
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    let found: Vec<(String, Vec<usize>)> =
        header.tensors.iter().map(|m| (m.name.clone(), m.shape.clone())).collect();
    if expected != found {
        return Err(Error::CorruptCheckpoint("tensor layout does not match the config".into()));
    }
    let mut values = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for mut t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = values
                .next()
                .ok_or_else(|| Error::CorruptCheckpoint("too few tensor values".into()))?;
        }
    }
    if values.next().is_some() {
        return Err(Error::CorruptCheckpoint("trailing tensor values".into()));
    }
    Ok(SpanModel { config: header.config, vocab: header.vocab, params })
}

pub fn save_checkpoint(model: &SpanModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SpanModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Reads a vocabulary from either a vocabulary JSON file or a checkpoint.
pub fn load_vocab(path: &Path) -> Result<Vocab> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        return Ok(from_bytes(&bytes)?.vocab);
    }
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path.display().to_string(), e))
}
