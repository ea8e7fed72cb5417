//! Model checkpoint files.
//!
//! Layout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `MKGCCKPT` |
//! | 1     | format version (`1`) |
//! | 1     | byte order of the payload, `b'L'` (little endian) |
//! | 4     | header length `n`, u32 little endian |
//! | n     | UTF-8 JSON header ([`CheckpointHeader`]) |
//! | rest  | every tensor listed in the header, f64 little endian, row-major, in header order |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{LayerWeights, ModelParams, ModelShape};
use super::tensor::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MKGCCKPT";
const VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub shape: ModelShape,
    /// Digest of the entity and relation vocabularies the model was trained on.
    pub vocab_digest: String,
    pub tensors: Vec<TensorEntry>,
}

/// SHA-256 over the vocabulary names, hex encoded.
pub fn vocab_digest<'a>(
    entities: impl IntoIterator<Item = &'a str>,
    relations: impl IntoIterator<Item = &'a str>,
) -> String {
    let mut h = Sha256::new();
    for e in entities {
        h.update(b"e\0");
        h.update(e.as_bytes());
        h.update(b"\n");
    }
    for r in relations {
        h.update(b"r\0");
        h.update(r.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, vocab_digest: &str) -> Result<()> {
    let named = params.named_tensors();
    let header = CheckpointHeader {
        shape: params.shape,
        vocab_digest: vocab_digest.to_string(),
        tensors: named
            .iter()
            .map(|(name, m)| TensorEntry {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(14 + json.len() + 8 * params.num_values());
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(b'L');
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, m) in &named {
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 14 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    if bytes[8] != VERSION {
        return Err(bad(&format!("unsupported format version {}", bytes[8])));
    }
    if bytes[9] != b'L' {
        return Err(bad("unsupported byte order"));
    }
    let n = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = bytes.get(14..14 + n).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(&format!("bad header: {e}")))?;
    let mut offset = 14 + n;
    let mut mats = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let len = t.rows * t.cols * 8;
        let raw = bytes
            .get(offset..offset + len)
            .ok_or_else(|| bad(&format!("truncated tensor {}", t.name)))?;
        offset += len;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        mats.push((t.name.as_str(), Matrix::from_vec(t.rows, t.cols, data)));
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after the last tensor"));
    }
    let params = assemble(header.shape, mats).map_err(|m| bad(&m))?;
    params.validate()?;
    Ok((params, header))
}

fn assemble(shape: ModelShape, mats: Vec<(&str, Matrix)>) -> std::result::Result<ModelParams, String> {
    let mut it = mats.into_iter();
    let mut next = |expect: &str| match it.next() {
        Some((name, m)) if name == expect => Ok(m),
        Some((name, _)) => Err(format!("expected tensor {expect}, found {name}")),
        None => Err(format!("missing tensor {expect}")),
    };
    let entity_emb = next("entity_emb")?;
    let relation_emb = next("relation_emb")?;
    let self_loop_rel = next("self_loop_rel")?;
    let mut layers = Vec::with_capacity(shape.layers);
    for i in 0..shape.layers {
        layers.push(LayerWeights {
            w_in: next(&format!("layer{i}.w_in"))?,
            w_out: next(&format!("layer{i}.w_out"))?,
            w_loop: next(&format!("layer{i}.w_loop"))?,
            w_rel: next(&format!("layer{i}.w_rel"))?,
            w_align: if shape.fused {
                Some(next(&format!("layer{i}.w_align"))?)
            } else {
                None
            },
        });
    }
    if let Some((name, _)) = it.next() {
        return Err(format!("unexpected tensor {name}"));
    }
    Ok(ModelParams {
        shape,
        entity_emb,
        relation_emb,
        self_loop_rel,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::{Activation, Composition, ScoreFn};
    use rand::SeedableRng;

    fn params() -> ModelParams {
        let shape = ModelShape {
            n_entities: 4,
            n_relations: 2,
            dim: 3,
            layers: 2,
            fused: true,
            composition: Composition::Sub,
            activation: Activation::Tanh,
            score_fn: ScoreFn::DistMult,
        };
        ModelParams::init(shape, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = params();
        save_checkpoint(&path, &p, "abc").unwrap();
        let (q, h) = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(h.vocab_digest, "abc");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &params(), "abc").unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        fs::write(&path, b"hello").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn digest_depends_on_names_and_roles() {
        let a = vocab_digest(["x", "y"], ["r"]);
        assert_eq!(a.len(), 64);
        assert_ne!(a, vocab_digest(["x", "y", "r"], []));
        assert_ne!(a, vocab_digest(["xy"], ["r"]));
    }
}
