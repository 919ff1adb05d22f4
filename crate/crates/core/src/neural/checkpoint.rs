//! `NNCK1` checkpoint files: the magic bytes, a little-endian `u32` length,
//! that many bytes of JSON metadata, then every tensor as little-endian `f32`
//! in the order listed in the metadata.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayViewD;
use serde::{Deserialize, Serialize};

use super::{NeuralError, Parameters};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"NNCK1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: String,
    pub dims: BTreeMap<String, usize>,
    pub seed: u64,
    /// Training schedule and any other settings needed to rebuild the model.
    #[serde(default)]
    pub config: serde_json::Value,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub values: Vec<Vec<f32>>,
}

impl Checkpoint {
    /// Snapshot of `params`; the tensor list in `meta` is filled in here.
    pub fn from_params<P: Parameters>(
        architecture: &str,
        dims: BTreeMap<String, usize>,
        seed: u64,
        config: serde_json::Value,
        params: &P,
    ) -> Self {
        let mut tensors = Vec::new();
        let mut values = Vec::new();
        for (name, t) in params.tensors() {
            tensors.push(TensorInfo {
                name,
                shape: t.shape().to_vec(),
            });
            values.push(to_f32(&t));
        }
        Self {
            meta: CheckpointMeta {
                architecture: architecture.to_string(),
                dims,
                seed,
                config,
                tensors,
            },
            values,
        }
    }

    pub fn dim(&self, key: &str) -> Result<usize, NeuralError> {
        self.meta
            .dims
            .get(key)
            .copied()
            .ok_or_else(|| NeuralError::Checkpoint(format!("missing dimension '{key}'")))
    }

    /// Copies the stored values into `params`, which must have the same
    /// tensor names and shapes in the same order.
    pub fn load_into<P: Parameters>(&self, params: &mut P) -> Result<(), NeuralError> {
        let expected: Vec<TensorInfo> = params
            .tensors()
            .into_iter()
            .map(|(name, t)| TensorInfo {
                name,
                shape: t.shape().to_vec(),
            })
            .collect();
        if expected != self.meta.tensors {
            return Err(NeuralError::Checkpoint(format!(
                "tensor layout does not match the {} model",
                self.meta.architecture
            )));
        }
        for (mut t, v) in params.tensors_mut().into_iter().zip(&self.values) {
            t.iter_mut().zip(v).for_each(|(p, &x)| *p = f64::from(x));
        }
        Ok(())
    }

    pub fn to_writer(&self, mut w: impl Write) -> Result<(), NeuralError> {
        let json = serde_json::to_vec(&self.meta).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| NeuralError::Checkpoint("metadata too large".into()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for v in &self.values {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_reader(mut r: impl Read) -> Result<Self, NeuralError> {
        let mut magic = [0u8; 5];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NeuralError::Checkpoint("bad magic, not an NNCK1 checkpoint".into()));
        }
        let mut len = [0u8; 4];
        read_exact(&mut r, &mut len, "metadata length")?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        read_exact(&mut r, &mut json, "metadata")?;
        let meta: CheckpointMeta =
            serde_json::from_slice(&json).map_err(|e| NeuralError::Checkpoint(format!("metadata: {e}")))?;
        let mut values = Vec::with_capacity(meta.tensors.len());
        for info in &meta.tensors {
            let mut buf = vec![0u8; info.len() * 4];
            read_exact(&mut r, &mut buf, &info.name)?;
            let v: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NeuralError::NonFinite(format!("tensor '{}'", info.name)));
            }
            values.push(v);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NeuralError::Checkpoint("trailing bytes after the last tensor".into()));
        }
        Ok(Self { meta, values })
    }
}

fn to_f32(t: &ArrayViewD<'_, f64>) -> Vec<f32> {
    t.iter().map(|&x| x as f32).collect()
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<(), NeuralError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NeuralError::Checkpoint(format!("truncated while reading {what}")),
        _ => NeuralError::Io(e),
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), NeuralError> {
    ckpt.to_writer(BufWriter::new(File::create(path)?))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NeuralError> {
    Checkpoint::from_reader(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{seeded_rng, Dense};

    fn sample() -> (Dense, Checkpoint) {
        let layer = Dense::glorot(3, 2, &mut seeded_rng(4));
        let dims = BTreeMap::from([("input".to_string(), 3), ("output".to_string(), 2)]);
        let ck = Checkpoint::from_params("dense", dims, 4, serde_json::json!({"lr": 0.001}), &layer);
        (layer, ck)
    }

    #[test]
    fn round_trip_through_bytes() {
        let (layer, ck) = sample();
        let mut bytes = Vec::new();
        ck.to_writer(&mut bytes).unwrap();
        assert_eq!(&bytes[..5], CHECKPOINT_MAGIC);
        let back = Checkpoint::from_reader(bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut restored = Dense::zeros(3, 2);
        back.load_into(&mut restored).unwrap();
        for (a, b) in restored.flatten().iter().zip(layer.flatten()) {
            assert_eq!(*a, b as f32 as f64);
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let (_, a) = sample();
        let (_, b) = sample();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.to_writer(&mut x).unwrap();
        b.to_writer(&mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn truncation_bad_magic_and_trailing_bytes_are_errors() {
        let (_, ck) = sample();
        let mut bytes = Vec::new();
        ck.to_writer(&mut bytes).unwrap();
        assert!(Checkpoint::from_reader(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_reader(extra.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_reader(bad.as_slice()).is_err());
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let (_, ck) = sample();
        assert!(ck.load_into(&mut Dense::zeros(2, 2)).is_err());
    }
}
