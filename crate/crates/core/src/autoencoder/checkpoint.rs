//! Binary checkpoint: versioned header followed by raw little-endian `f64` tensors.
//!
//! ```text
//! magic    8 bytes  "RAMNCKPT"
//! version  u32
//! vocab_size, d_model, d_ff, layers   u64 each
//! positional_encoding                 u8
//! vocab_fingerprint                   u64
//! tensor_count                        u64
//! per tensor: length u64, then length × f64
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::params::{ModelConfig, Params};
use super::AutoencoderModel;
use crate::error::{Error, Result};
use crate::kernel::ParamSet;
use crate::text::Vocabulary;

const MAGIC: &[u8; 8] = b"RAMNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &AutoencoderModel) -> Vec<u8> {
    let cfg = model.config();
    let tensors = model.params().tensors();
    let mut buf = Vec::with_capacity(64 + 8 * model.params().num_params() + 8 * tensors.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [cfg.vocab_size, cfg.d_model, cfg.d_ff, cfg.layers] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.push(cfg.positional_encoding as u8);
    buf.extend_from_slice(&model.vocab_fingerprint().to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn save_checkpoint(model: &AutoencoderModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("dimension overflow".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], vocab: &Vocabulary) -> Result<AutoencoderModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let cfg = ModelConfig {
        vocab_size: r.usize()?,
        d_model: r.usize()?,
        d_ff: r.usize()?,
        layers: r.usize()?,
        positional_encoding: r.take(1)?[0] != 0,
    };
    let fingerprint = r.u64()?;
    if fingerprint != vocab.fingerprint() || cfg.vocab_size != vocab.len() {
        return Err(Error::Checkpoint(format!(
            "vocabulary mismatch: checkpoint {fingerprint:016x}/{} vs {:016x}/{}",
            cfg.vocab_size,
            vocab.fingerprint(),
            vocab.len()
        )));
    }
    let mut params = Params::zeros(&cfg);
    let count = r.usize()?;
    let mut tensors = params.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors, expected {}",
            tensors.len()
        )));
    }
    for t in tensors.iter_mut() {
        let len = r.usize()?;
        if len != t.len() {
            return Err(Error::Checkpoint(format!("tensor of {len}, expected {}", t.len())));
        }
        let raw = r.take(len * 8)?;
        for (v, chunk) in t.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    drop(tensors);
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    AutoencoderModel::from_parts(cfg, params, fingerprint)
}

/// Loads a checkpoint, rejecting it unless it was trained against `vocab`.
pub fn load_checkpoint(path: &Path, vocab: &Vocabulary) -> Result<AutoencoderModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, vocab)
}
