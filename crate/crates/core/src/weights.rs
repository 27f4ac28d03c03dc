//! The `CNF1` named-tensor container.
//!
//! All integers are little-endian and every length is explicit:
//!
//! ```text
//! magic        4 bytes   "CNF1"
//! version      u16       1
//! meta_len     u32       byte length of the metadata
//! metadata     meta_len  UTF-8 JSON
//! n_records    u32
//! record * n_records:
//!   name_len   u16
//!   name       name_len  UTF-8, unique within the file
//!   dtype      u8        0 = f32
//!   ndim       u8
//!   extents    u32 * ndim
//!   data_len   u64       = 4 * product(extents)
//!   data       data_len  row-major f32
//! crc32        u32       CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! See `docs/cnf1.md` for an annotated hex dump.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{ArchitectureSpec, LayerParams, Mode, ModelState, Tensor};

pub const MAGIC: &[u8; 4] = b"CNF1";
pub const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;
/// `metadata.format` of a full convnet model file.
pub const MODEL_FORMAT: &str = "convnet-model";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a CNF1 file (bad magic)")]
    BadMagic,
    #[error("unsupported CNF1 version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("records do not match the declared model: {0}")]
    RecordMismatch(String),
    #[error("malformed CNF1 content: {0}")]
    Malformed(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WeightsError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<u32>,
    pub data: Vec<f32>,
}

impl TensorRecord {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Self {
        Self { name: name.into(), shape: shape.iter().map(|&d| d as u32).collect(), data }
    }

    fn expected_len(&self) -> usize {
        self.shape.iter().map(|&d| d as usize).product()
    }
}

/// Metadata JSON plus an ordered list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub metadata: serde_json::Value,
    pub records: Vec<TensorRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| WeightsError::Malformed(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl WeightFile {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self { metadata, records: Vec::new() }
    }

    pub fn get(&self, name: &str) -> Option<&TensorRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata).map_err(|e| WeightsError::Malformed(e.to_string()))?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for r in &self.records {
            if !seen.insert(r.name.as_str()) {
                return Err(WeightsError::Malformed(format!("duplicate record name '{}'", r.name)));
            }
            if r.data.len() != r.expected_len() {
                return Err(WeightsError::Malformed(format!("record '{}' has {} values for shape {:?}", r.name, r.data.len(), r.shape)));
            }
            let name_len = u16::try_from(r.name.len()).map_err(|_| WeightsError::Malformed("record name too long".into()))?;
            let ndim = u8::try_from(r.shape.len()).map_err(|_| WeightsError::Malformed("too many dimensions".into()))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.push(DTYPE_F32);
            out.push(ndim);
            for d in &r.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.extend_from_slice(&((r.data.len() * 4) as u64).to_le_bytes());
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Validates magic, checksum and version, then parses.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(WeightsError::BadMagic);
        }
        if bytes.len() < 8 {
            return Err(WeightsError::ChecksumMismatch { stored: 0, computed: crc32fast::hash(&bytes[..4]) });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(WeightsError::ChecksumMismatch { stored, computed });
        }
        let mut rd = Reader { bytes: body, pos: 4 };
        let version = rd.u16()?;
        if version != VERSION {
            return Err(WeightsError::UnsupportedVersion(version));
        }
        let meta_len = rd.u32()? as usize;
        let metadata = serde_json::from_slice(rd.take(meta_len)?).map_err(|e| WeightsError::Malformed(format!("metadata: {e}")))?;
        let n = rd.u32()? as usize;
        let mut records = Vec::with_capacity(n.min(1 << 16));
        let mut seen = HashSet::new();
        for _ in 0..n {
            let name_len = rd.u16()? as usize;
            let name = String::from_utf8(rd.take(name_len)?.to_vec()).map_err(|_| WeightsError::Malformed("record name is not UTF-8".into()))?;
            let dtype = rd.u8()?;
            if dtype != DTYPE_F32 {
                return Err(WeightsError::Malformed(format!("record '{name}': unknown dtype {dtype}")));
            }
            let ndim = rd.u8()? as usize;
            let shape = (0..ndim).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
            let data_len = rd.u64()? as usize;
            let expected = shape.iter().map(|&d| d as usize).product::<usize>() * 4;
            if data_len != expected {
                return Err(WeightsError::Malformed(format!("record '{name}': {data_len} bytes for shape {shape:?}")));
            }
            let data = rd.take(data_len)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            if !seen.insert(name.clone()) {
                return Err(WeightsError::Malformed(format!("duplicate record name '{name}'")));
            }
            records.push(TensorRecord { name, shape, data });
        }
        if rd.pos != body.len() {
            return Err(WeightsError::Malformed(format!("{} trailing bytes before checksum", body.len() - rd.pos)));
        }
        Ok(Self { metadata, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Where a model's weights came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSource {
    Random,
    Trained,
}

impl ModelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelSource::Random => "random",
            ModelSource::Trained => "trained",
        }
    }
}

/// Metadata JSON of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub spec: ArchitectureSpec,
    pub source: ModelSource,
    pub seed: Option<u64>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl ModelMeta {
    pub fn new(spec: &ArchitectureSpec, source: ModelSource, seed: Option<u64>) -> Self {
        Self { format: MODEL_FORMAT.into(), spec: spec.clone(), source, seed, provenance: serde_json::Value::Null }
    }
}

/// Canonical record names and shapes for a spec, in file order.
pub fn model_record_layout(spec: &ArchitectureSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for l in 0..spec.n_layers {
        let p = format!("layer{}", l + 1);
        let c = spec.channels;
        out.push((format!("{p}.conv_w"), vec![c, spec.layer_in_channels(l), spec.kernel.0, spec.kernel.1]));
        for field in ["conv_b", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"] {
            out.push((format!("{p}.{field}"), vec![c]));
        }
    }
    out.push(("head.w".into(), vec![spec.n_outputs, spec.channels]));
    out.push(("head.b".into(), vec![spec.n_outputs]));
    out
}

pub fn model_to_container(model: &ModelState<f32>, meta: &ModelMeta) -> Result<WeightFile> {
    let metadata = serde_json::to_value(meta).map_err(|e| WeightsError::Malformed(e.to_string()))?;
    let mut file = WeightFile::new(metadata);
    for (l, layer) in model.layers.iter().enumerate() {
        let p = format!("layer{}", l + 1);
        let c = layer.conv_b.len();
        file.records.push(TensorRecord::new(format!("{p}.conv_w"), layer.conv_w.shape(), layer.conv_w.data().to_vec()));
        for (field, v) in [
            ("conv_b", &layer.conv_b),
            ("bn_gamma", &layer.bn_gamma),
            ("bn_beta", &layer.bn_beta),
            ("bn_running_mean", &layer.bn_running_mean),
            ("bn_running_var", &layer.bn_running_var),
        ] {
            file.records.push(TensorRecord::new(format!("{p}.{field}"), &[c], v.clone()));
        }
    }
    file.records.push(TensorRecord::new("head.w", model.head_w.shape(), model.head_w.data().to_vec()));
    file.records.push(TensorRecord::new("head.b", &[model.head_b.len()], model.head_b.clone()));
    Ok(file)
}

pub fn model_from_container(file: &WeightFile) -> Result<(ModelState<f32>, ModelMeta)> {
    let meta: ModelMeta =
        serde_json::from_value(file.metadata.clone()).map_err(|e| WeightsError::Malformed(format!("model metadata: {e}")))?;
    if meta.format != MODEL_FORMAT {
        return Err(WeightsError::Malformed(format!("metadata format '{}' is not '{MODEL_FORMAT}'", meta.format)));
    }
    meta.spec.validate().map_err(|e| WeightsError::Malformed(e.to_string()))?;
    let layout = model_record_layout(&meta.spec);
    let expected: HashSet<&str> = layout.iter().map(|(n, _)| n.as_str()).collect();
    let extra: Vec<&str> = file.records.iter().map(|r| r.name.as_str()).filter(|n| !expected.contains(n)).collect();
    if !extra.is_empty() {
        return Err(WeightsError::RecordMismatch(format!("unexpected records {extra:?}")));
    }
    let take = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let r = file.get(name).ok_or_else(|| WeightsError::RecordMismatch(format!("missing record '{name}'")))?;
        let got: Vec<usize> = r.shape.iter().map(|&d| d as usize).collect();
        if got != shape {
            return Err(WeightsError::RecordMismatch(format!("record '{name}' has shape {got:?}, spec requires {shape:?}")));
        }
        Ok(r.data.clone())
    };
    let mut layers = Vec::with_capacity(meta.spec.n_layers);
    let mut it = layout.iter();
    for _ in 0..meta.spec.n_layers {
        let mut next = || {
            let (n, s) = it.next().expect("layout covers every layer");
            take(n, s).map(|d| (d, s.clone()))
        };
        let (w, ws) = next()?;
        let conv_w = Tensor::from_vec(&ws, w).map_err(|e| WeightsError::Malformed(e.to_string()))?;
        layers.push(LayerParams {
            conv_w,
            conv_b: next()?.0,
            bn_gamma: next()?.0,
            bn_beta: next()?.0,
            bn_running_mean: next()?.0,
            bn_running_var: next()?.0,
        });
    }
    let (hn, hs) = it.next().expect("head weights");
    let head_w = Tensor::from_vec(hs, take(hn, hs)?).map_err(|e| WeightsError::Malformed(e.to_string()))?;
    let (bn, bs) = it.next().expect("head bias");
    let head_b = take(bn, bs)?;
    let model = ModelState { spec: meta.spec.clone(), layers, head_w, head_b, mode: Mode::Inference };
    Ok((model, meta))
}

/// Writes a model in canonical record order.
pub fn save_model(model: &ModelState<f32>, meta: &ModelMeta, path: impl AsRef<Path>) -> Result<()> {
    model_to_container(model, meta)?.save(path)
}

/// Reads and fully validates a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelState<f32>, ModelMeta)> {
    model_from_container(&WeightFile::load(path)?)
}
