//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "FRLT" | version u32 | config_len u64 | config JSON
//! tensor_count u32
//!   per tensor: name_len u32, name, ndim u32, dims u64..., payload f32...
//! has_state u8
//!   if 1: step u64, rng_state u64,
//!         history_len u32, (step u64, train f32, has_val u8, val f32)...,
//!         moment_count u32, (name, len u64, m f32..., len u64, v f32...)...
//! checksum u64 (FNV-1a of every preceding byte)
//! ```
//!
//! Floats are stored as raw `f32` bits, so save/load round trips are
//! bit-exact and `save(load(save(x)))` is byte-identical.

use std::path::Path;

use thiserror::Error;

use crate::model::{tensor_layout, ModelConfig, ModelWeights};
use crate::rng::fnv1a64;
use crate::tensor::Tensor;
use crate::trainer::{LossPoint, Moments, TrainingState};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FRLT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic")]
    BadMagic,

    #[error("unsupported checkpoint version {found}, expected {expected}")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),

    #[error("checksum mismatch: file is corrupt or truncated")]
    ChecksumMismatch,

    #[error("tensor {index}: expected {expected:?}, found {found:?}")]
    TensorMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("config json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A model snapshot: config, parameters, and optionally the training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub weights: ModelWeights,
    pub state: Option<TrainingState>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config_json = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&(config_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&config_json);

        let named = self.weights.named_tensors();
        out.extend_from_slice(&(named.len() as u32).to_le_bytes());
        for (name, tensor) in &named {
            write_str(&mut out, name);
            out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }

        match &self.state {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                out.extend_from_slice(&state.step.to_le_bytes());
                out.extend_from_slice(&state.rng_state.to_le_bytes());
                out.extend_from_slice(&(state.history.len() as u32).to_le_bytes());
                for p in &state.history {
                    out.extend_from_slice(&p.step.to_le_bytes());
                    out.extend_from_slice(&p.train_loss.to_le_bytes());
                    out.push(p.val_loss.is_some() as u8);
                    out.extend_from_slice(&p.val_loss.unwrap_or(0.0).to_le_bytes());
                }
                out.extend_from_slice(&(state.moments.len() as u32).to_le_bytes());
                for ((name, _), moments) in named.iter().zip(&state.moments) {
                    write_str(&mut out, name);
                    write_f32s(&mut out, &moments.m);
                    write_f32s(&mut out, &moments.v);
                }
            }
        }

        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 {
            return Err(CheckpointError::Truncated(bytes.len()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a64(body) != stored {
            return Err(CheckpointError::ChecksumMismatch);
        }

        let mut cur = Cursor { data: body, pos: 0 };
        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = cur.read_u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let config_len = cur.read_u64()? as usize;
        let config: ModelConfig = serde_json::from_slice(cur.take(config_len)?)?;

        let layout = tensor_layout(&config);
        let n_tensors = cur.read_u32()? as usize;
        if n_tensors != layout.len() {
            return Err(CheckpointError::TensorMismatch {
                index: 0,
                expected: format!("{} tensors", layout.len()),
                found: format!("{n_tensors} tensors"),
            });
        }
        let mut weights = ModelWeights::zeros(&config);
        {
            let mut slots = weights.named_tensors_mut();
            for (index, ((expected_name, expected_shape), (_, slot))) in
                layout.iter().zip(slots.iter_mut()).enumerate()
            {
                let name = cur.read_str()?;
                let ndim = cur.read_u32()? as usize;
                let mut shape = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    shape.push(cur.read_u64()? as usize);
                }
                if &name != expected_name || &shape != expected_shape {
                    return Err(CheckpointError::TensorMismatch {
                        index,
                        expected: format!("{expected_name} {expected_shape:?}"),
                        found: format!("{name} {shape:?}"),
                    });
                }
                let n: usize = shape.iter().product();
                let data = cur.read_f32s(n)?;
                **slot = Tensor::new(shape, data).expect("shape matches data by construction");
            }
        }

        let has_state = cur.read_u8()?;
        let state = if has_state == 1 {
            let step = cur.read_u64()?;
            let rng_state = cur.read_u64()?;
            let n_history = cur.read_u32()? as usize;
            let mut history = Vec::with_capacity(n_history);
            for _ in 0..n_history {
                let step = cur.read_u64()?;
                let train_loss = cur.read_f32()?;
                let has_val = cur.read_u8()?;
                let val = cur.read_f32()?;
                history.push(LossPoint {
                    step,
                    train_loss,
                    val_loss: (has_val == 1).then_some(val),
                });
            }
            let n_moments = cur.read_u32()? as usize;
            if n_moments != layout.len() {
                return Err(CheckpointError::TensorMismatch {
                    index: 0,
                    expected: format!("{} moment tensors", layout.len()),
                    found: format!("{n_moments}"),
                });
            }
            let mut moments = Vec::with_capacity(n_moments);
            for (index, (expected_name, expected_shape)) in layout.iter().enumerate() {
                let name = cur.read_str()?;
                if &name != expected_name {
                    return Err(CheckpointError::TensorMismatch {
                        index,
                        expected: expected_name.clone(),
                        found: name,
                    });
                }
                let expected_len: usize = expected_shape.iter().product();
                let m_len = cur.read_u64()? as usize;
                let m = cur.read_f32s(m_len)?;
                let v_len = cur.read_u64()? as usize;
                let v = cur.read_f32s(v_len)?;
                if m_len != expected_len || v_len != expected_len {
                    return Err(CheckpointError::TensorMismatch {
                        index,
                        expected: format!("{expected_name} moments of {expected_len}"),
                        found: format!("{m_len}/{v_len}"),
                    });
                }
                moments.push(Moments { m, v });
            }
            Some(TrainingState {
                step,
                moments,
                rng_state,
                history,
            })
        } else {
            None
        };

        if cur.pos != body.len() {
            return Err(CheckpointError::TensorMismatch {
                index: 0,
                expected: "end of file".into(),
                found: format!("{} trailing bytes", body.len() - cur.pos),
            });
        }
        Ok(Self {
            config,
            weights,
            state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn write_f32s(out: &mut Vec<u8>, data: &[f32]) {
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.data.len() {
            return Err(CheckpointError::Truncated(self.pos));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn read_u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn read_u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn read_u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn read_f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn read_f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let bytes = self.take(4 * n)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
            .collect())
    }

    fn read_str(&mut self) -> Result<String, CheckpointError> {
        let len = self.read_u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CheckpointError::TensorMismatch {
                index: 0,
                expected: "utf-8 name".into(),
                found: "invalid bytes".into(),
            })
    }
}
