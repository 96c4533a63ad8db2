//! Checkpoint container.
//!
//! Layout: 8-byte magic `OPRMCKP1`, a u32-LE length-prefixed UTF-8 header of
//! `key=value` lines, then every learnable tensor as little-endian f32 in
//! [`ModelParams::tensor_slices`] order. The loader rejects unknown magic and
//! unknown format versions.

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::vocab::Vocab;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"OPRMCKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub vocab_size: usize,
    pub d: usize,
    pub d_state: usize,
    pub conv_k: usize,
    pub n_layers: usize,
    pub seed: u64,
    pub train_step: u64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub vocab_spec: String,
}

fn header_text(meta: &CheckpointMeta) -> String {
    // Fixed key order keeps checkpoint bytes stable across runs.
    format!(
        "format-version={}\nvocab-size={}\nd={}\nd-state={}\nconv-k={}\nn-layers={}\nseed={}\ntrain-step={}\ndt-min={:e}\ndt-max={:e}\nvocab={}\n",
        meta.format_version,
        meta.vocab_size,
        meta.d,
        meta.d_state,
        meta.conv_k,
        meta.n_layers,
        meta.seed,
        meta.train_step,
        meta.dt_min,
        meta.dt_max,
        meta.vocab_spec,
    )
}

fn parse_header(text: &str) -> Result<CheckpointMeta> {
    let mut kv = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed header line {line:?}")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    fn req<'a>(kv: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
        kv.get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Checkpoint(format!("header missing {key}")))
    }
    fn num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
        s.parse()
            .map_err(|_| Error::Checkpoint(format!("bad value for {key}: {s:?}")))
    }
    Ok(CheckpointMeta {
        format_version: num(req(&kv, "format-version")?, "format-version")?,
        vocab_size: num(req(&kv, "vocab-size")?, "vocab-size")?,
        d: num(req(&kv, "d")?, "d")?,
        d_state: num(req(&kv, "d-state")?, "d-state")?,
        conv_k: num(req(&kv, "conv-k")?, "conv-k")?,
        n_layers: num(req(&kv, "n-layers")?, "n-layers")?,
        seed: num(req(&kv, "seed")?, "seed")?,
        train_step: num(req(&kv, "train-step")?, "train-step")?,
        dt_min: num(req(&kv, "dt-min")?, "dt-min")?,
        dt_max: num(req(&kv, "dt-max")?, "dt-max")?,
        vocab_spec: req(&kv, "vocab")?.to_string(),
    })
}

/// Write a checkpoint. Tensor values are stored as f32.
pub fn save(path: &Path, params: &ModelParams, vocab: &Vocab, train_step: u64) -> Result<()> {
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        vocab_size: params.cfg.vocab_size,
        d: params.cfg.d,
        d_state: params.cfg.d_state,
        conv_k: params.cfg.conv_k,
        n_layers: params.cfg.n_layers,
        seed: params.cfg.seed,
        train_step,
        dt_min: params.cfg.dt_min,
        dt_max: params.cfg.dt_max,
        vocab_spec: vocab.spec_string(),
    };
    let header = header_text(&meta);
    let mut out = Vec::with_capacity(header.len() + params.param_count() * 4 + 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for t in params.tensor_slices() {
        for &x in t {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Read a checkpoint back into parameters, the vocabulary, and its metadata.
pub fn load(path: &Path) -> Result<(ModelParams, Vocab, CheckpointMeta)> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let mut len_bytes = [0u8; 4];
    f.read_exact(&mut len_bytes)
        .map_err(|_| Error::Checkpoint("file too short for header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header = vec![0u8; header_len];
    f.read_exact(&mut header)
        .map_err(|_| Error::Checkpoint("file too short for header".into()))?;
    let header =
        String::from_utf8(header).map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let meta = parse_header(&header)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            meta.format_version
        )));
    }

    let vocab = Vocab::from_spec_string(&meta.vocab_spec)?;
    if vocab.size() != meta.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocab spec {} disagrees with vocab-size {}",
            meta.vocab_spec, meta.vocab_size
        )));
    }
    let cfg = ModelConfig {
        vocab_size: meta.vocab_size,
        d: meta.d,
        d_state: meta.d_state,
        conv_k: meta.conv_k,
        n_layers: meta.n_layers,
        dt_min: meta.dt_min,
        dt_max: meta.dt_max,
        seed: meta.seed,
    };
    let mut params = ModelParams::init(cfg)?;

    let mut body = Vec::new();
    f.read_to_end(&mut body)?;
    let expected = params.param_count() * 4;
    if body.len() != expected {
        return Err(Error::Checkpoint(format!(
            "tensor payload is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let mut off = 0;
    for t in params.tensor_slices_mut() {
        for x in t {
            let mut b = [0u8; 4];
            b.copy_from_slice(&body[off..off + 4]);
            *x = f32::from_le_bytes(b) as f64;
            off += 4;
        }
    }
    params.validate()?;
    Ok((params, vocab, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip_dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn save_load_roundtrip_preserves_f32_values() {
        let dir = roundtrip_dir();
        let path = dir.path().join("m.oprmckpt");
        let vocab = Vocab::controlled(6, 6).unwrap();
        let params = ModelParams::init(ModelConfig::new(vocab.size(), 8, 2, 21)).unwrap();
        save(&path, &params, &vocab, 17).unwrap();
        let (loaded, lv, meta) = load(&path).unwrap();
        assert_eq!(lv, vocab);
        assert_eq!(meta.train_step, 17);
        assert_eq!(meta.seed, 21);
        for (a, b) in params.tensor_slices().iter().zip(loaded.tensor_slices()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, (*x as f32) as f64);
            }
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let dir = roundtrip_dir();
        let path = dir.path().join("m.oprmckpt");
        let vocab = Vocab::controlled(6, 6).unwrap();
        let params = ModelParams::init(ModelConfig::new(vocab.size(), 8, 2, 21)).unwrap();
        save(&path, &params, &vocab, 0).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.path().join("bad_magic");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load(&bad), Err(Error::Checkpoint(_))));

        let mut bytes = std::fs::read(&path).unwrap();
        // Header starts after magic+len; flip the version digit.
        let pos = 12 + "format-version=".len();
        bytes[pos] = b'9';
        let bad = dir.path().join("bad_version");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load(&bad), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = roundtrip_dir();
        let path = dir.path().join("m.oprmckpt");
        let vocab = Vocab::controlled(6, 6).unwrap();
        let params = ModelParams::init(ModelConfig::new(vocab.size(), 8, 2, 21)).unwrap();
        save(&path, &params, &vocab, 0).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let trunc = dir.path().join("trunc");
        std::fs::write(&trunc, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(load(&trunc), Err(Error::Checkpoint(_))));
    }
}
