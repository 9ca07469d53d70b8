//! Self-describing binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SHARECKP"
//! version    u32
//! config     embed_dim u32, num_layers u32, max_window u32, variant u8,
//!            dropout f64, l2 f64, seed u64
//! epoch      u32
//! vocab      sha256 [32], count u64, then per key: len u32 + utf-8 bytes
//! tensors    count u32, then per tensor: name len u16 + utf-8 name,
//!            rows u64, cols u64, rows*cols f64
//! ```

use std::fs;
use std::path::Path;

use crate::data::Vocabulary;
use crate::error::ModelError;
use crate::linalg::Mat;
use crate::model::{ModelConfig, ModelParams, Variant};

const MAGIC: &[u8; 8] = b"SHARECKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Epoch the parameters come from (0 = untrained).
    pub epoch: u32,
    pub vocabulary: Vocabulary,
    pub params: ModelParams,
}

fn err(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| err("truncated checkpoint"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn string(&mut self, len: usize) -> Result<String, ModelError> {
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| err("invalid utf-8"))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let c = &self.config;
        out.extend_from_slice(&(c.embed_dim as u32).to_le_bytes());
        out.extend_from_slice(&(c.num_layers as u32).to_le_bytes());
        out.extend_from_slice(&(c.max_window as u32).to_le_bytes());
        out.push(match c.variant {
            Variant::FullShare => 0,
            Variant::NoHypergraph => 1,
        });
        out.extend_from_slice(&c.dropout_rate.to_le_bytes());
        out.extend_from_slice(&c.l2_coefficient.to_le_bytes());
        out.extend_from_slice(&c.rng_seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.vocabulary.hash());
        out.extend_from_slice(&(self.vocabulary.len() as u64).to_le_bytes());
        for k in self.vocabulary.keys() {
            out.extend_from_slice(&(k.len() as u32).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
        }
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, [rows, cols], data) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(rows as u64).to_le_bytes());
            out.extend_from_slice(&(cols as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(err("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(err(format!("unsupported checkpoint version {version}")));
        }
        let embed_dim = r.u32()? as usize;
        let num_layers = r.u32()? as usize;
        let max_window = r.u32()? as usize;
        let variant = match r.u8()? {
            0 => Variant::FullShare,
            1 => Variant::NoHypergraph,
            v => return Err(err(format!("unknown variant tag {v}"))),
        };
        let config = ModelConfig {
            embed_dim,
            num_layers,
            max_window,
            variant,
            dropout_rate: r.f64()?,
            l2_coefficient: r.f64()?,
            rng_seed: r.u64()?,
        };
        config.validate()?;
        let epoch = r.u32()?;
        let hash: [u8; 32] = r.array()?;
        let n_items = r.u64()? as usize;
        let mut keys = Vec::with_capacity(n_items.min(1 << 20));
        for _ in 0..n_items {
            let len = r.u32()? as usize;
            keys.push(r.string(len)?);
        }
        let vocabulary = Vocabulary::from_keys(keys).map_err(|e| err(e.to_string()))?;
        if vocabulary.hash() != hash {
            return Err(err("vocabulary hash does not match stored keys"));
        }

        // Shapes are dictated by the config; a template gives the expected order.
        let mut params = template(&config, n_items)?;
        let expected: Vec<(String, [usize; 2])> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(err(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        let mut slots = params.tensors_mut();
        for ((name, shape), slot) in expected.iter().zip(slots.iter_mut()) {
            let len = r.u16()? as usize;
            let got = r.string(len)?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            if &got != name || [rows, cols] != *shape {
                return Err(err(format!(
                    "tensor `{got}` {rows}x{cols} where `{name}` {}x{} was expected",
                    shape[0], shape[1]
                )));
            }
            for v in slot.iter_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != buf.len() {
            return Err(err("trailing bytes after tensors"));
        }
        Ok(Self {
            config,
            epoch,
            vocabulary,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn template(config: &ModelConfig, n_items: usize) -> Result<ModelParams, ModelError> {
    let mut p = ModelParams::init(config, n_items.max(1))?;
    if n_items == 0 {
        p.embeddings = Mat::zeros(0, config.embed_dim);
    }
    Ok(p)
}
