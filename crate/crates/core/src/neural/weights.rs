//! Binary weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "FSNN"
//! version    u16      1
//! kind       u8       1 = MLP, 2 = CNN
//! n_tensors  u16
//! table      n_tensors × { name_len u8, name bytes, rows u32, cols u32 }
//! payload    Σ rows·cols × f32, tensors in table order
//! crc32      u32      over every preceding byte
//! ```

use super::layers::Dense;
use super::{CnnModel, MlpModel, ModelKind, Network, NnError, NormParams};
use crate::imu::N_FEATURES;
use std::path::Path;

const MAGIC: &[u8; 4] = b"FSNN";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawWeights {
    pub kind: ModelKind,
    pub tensors: Vec<RawTensor>,
}

pub fn encode<N: Network>(model: &N) -> Vec<u8> {
    let tensors = model.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.kind() as u8);
    out.extend_from_slice(&(tensors.len() as u16).to_le_bytes());
    for t in &tensors {
        out.push(t.name.len() as u8);
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.rows as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols as u32).to_le_bytes());
    }
    for t in &tensors {
        for &v in t.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_weights<N: Network>(model: &N, path: impl AsRef<Path>) -> Result<(), NnError> {
    std::fs::write(path, encode(model))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::CorruptFile("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses and checksums a weight file without interpreting the tensors.
pub fn decode(bytes: &[u8]) -> Result<RawWeights, NnError> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..4] != MAGIC {
        return Err(NnError::CorruptFile("missing FSNN magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(NnError::CorruptFile("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(NnError::SchemaMismatch(format!(
            "version {version}, expected {VERSION}"
        )));
    }
    let kind_byte = r.u8()?;
    let kind = ModelKind::from_u8(kind_byte)
        .ok_or_else(|| NnError::SchemaMismatch(format!("unknown model kind {kind_byte}")))?;
    let n = r.u16()? as usize;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NnError::CorruptFile("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        table.push((name, rows, cols));
    }
    let mut tensors = Vec::with_capacity(n);
    for (name, rows, cols) in table {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| NnError::CorruptFile("tensor size overflow".into()))?;
        let raw = r.take(
            count
                .checked_mul(4)
                .ok_or_else(|| NnError::CorruptFile("tensor size overflow".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(RawTensor { name, rows, cols, data });
    }
    if r.pos != body.len() {
        return Err(NnError::CorruptFile("trailing bytes after payload".into()));
    }
    Ok(RawWeights { kind, tensors })
}

impl RawWeights {
    fn take(&self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>, NnError> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| NnError::SchemaMismatch(format!("missing tensor {name}")))?;
        if t.rows != rows || t.cols != cols {
            return Err(NnError::ShapeMismatch(format!(
                "{name} is {}x{}, expected {rows}x{cols}",
                t.rows, t.cols
            )));
        }
        Ok(t.data.iter().map(|&v| v as f64).collect())
    }

    fn shape_of(&self, name: &str) -> Result<(usize, usize), NnError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| (t.rows, t.cols))
            .ok_or_else(|| NnError::SchemaMismatch(format!("missing tensor {name}")))
    }

    fn dense(&self, prefix: &str, n_in: usize, n_out: usize) -> Result<Dense, NnError> {
        Ok(Dense {
            n_in,
            n_out,
            weight: self.take(&format!("{prefix}.weight"), n_out, n_in)?,
            bias: self.take(&format!("{prefix}.bias"), 1, n_out)?,
        })
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<(), NnError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(NnError::SchemaMismatch(format!(
                "file holds {:?}, expected {kind:?}",
                self.kind
            )))
        }
    }

    /// Builds an MLP; `expected_classes` pins the output width when given.
    pub fn to_mlp(&self, expected_classes: Option<usize>) -> Result<MlpModel, NnError> {
        self.expect_kind(ModelKind::Mlp)?;
        let (classes, _) = self.shape_of("out.weight")?;
        if let Some(want) = expected_classes {
            if want != classes {
                return Err(NnError::ShapeMismatch(format!(
                    "file has {classes} classes, expected {want}"
                )));
            }
        }
        let mean = self.take("norm.mean", 1, N_FEATURES)?;
        let std = self.take("norm.std", 1, N_FEATURES)?;
        Ok(MlpModel {
            dense1: self.dense("dense1", N_FEATURES, 128)?,
            dense2: self.dense("dense2", 128, 64)?,
            dense3: self.dense("dense3", 64, 32)?,
            out: self.dense("out", 32, classes)?,
            norm: NormParams {
                mean: mean.try_into().unwrap(),
                std: std.try_into().unwrap(),
            },
        })
    }

    pub fn to_cnn(&self) -> Result<CnnModel, NnError> {
        self.expect_kind(ModelKind::Cnn)?;
        let template = CnnModel::zeros();
        Ok(CnnModel {
            conv_weight: self.take(
                "conv.weight",
                super::CONV_FILTERS,
                template.conv_weight.len() / super::CONV_FILTERS,
            )?,
            conv_bias: self.take("conv.bias", 1, super::CONV_FILTERS)?,
            attention: self.take("attention.weight", 1, super::CONV_FILTERS)?,
            dense1: self.dense("dense1", super::CONV_FILTERS, 64)?,
            out: self.dense("out", 64, 2)?,
            input_scale: self.take("input.scale", 1, 1)?,
        })
    }
}

pub fn load_mlp(path: impl AsRef<Path>, expected_classes: Option<usize>) -> Result<MlpModel, NnError> {
    decode(&std::fs::read(path)?)?.to_mlp(expected_classes)
}

pub fn load_cnn(path: impl AsRef<Path>) -> Result<CnnModel, NnError> {
    decode(&std::fs::read(path)?)?.to_cnn()
}
