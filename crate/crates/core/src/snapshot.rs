//! The `.lws` tensor snapshot container.
//!
//! Layout: an 8-byte little-endian `u64` header length `N`, `N` bytes of
//! UTF-8 JSON header, then the data region. The header maps each tensor name
//! to `{"dtype", "shape", "data_offsets"}`; offsets are relative to the start
//! of the data region and must tile it exactly. An optional `__metadata__`
//! entry maps strings to strings. Payloads are little-endian IEEE-754,
//! row-major.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

/// File extension used for snapshot files.
pub const SNAPSHOT_EXTENSION: &str = "lws";

const METADATA_KEY: &str = "__metadata__";
const LENGTH_PREFIX: usize = 8;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("tensor `{name}` holds a non-finite value at flat index {index}")]
    NonFiniteValue { name: String, index: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("tensor `{name}` has unsupported dtype `{dtype}` (expected F32 or F64)")]
    UnsupportedDtype { name: String, dtype: String },
    #[error("truncated file: need {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("shape {shape:?} requires {expected} values, got {actual}")]
    ValueCountMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("invalid tensor name `{0}`")]
    InvalidName(String),
    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "F32",
            Dtype::F64 => "F64",
        }
    }

    pub fn size_in_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "F32" => Some(Dtype::F32),
            "F64" => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Stored values, kept in their on-disk precision so round trips are exact.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorValues {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorValues {
    pub fn len(&self) -> usize {
        match self {
            TensorValues::F32(v) => v.len(),
            TensorValues::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One named parameter tensor: a shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    shape: Vec<usize>,
    values: TensorValues,
}

fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl TensorData {
    pub fn new(shape: Vec<usize>, values: TensorValues) -> Result<Self, FormatError> {
        let expected = element_count(&shape);
        if values.len() != expected {
            return Err(FormatError::ValueCountMismatch {
                shape,
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn from_f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self, FormatError> {
        Self::new(shape, TensorValues::F32(values))
    }

    pub fn from_f64(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, FormatError> {
        Self::new(shape, TensorValues::F64(values))
    }

    pub fn dtype(&self) -> Dtype {
        match self.values {
            TensorValues::F32(_) => Dtype::F32,
            TensorValues::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &TensorValues {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values widened to `f64`, in row-major order.
    pub fn iter_f64(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match &self.values {
            TensorValues::F32(v) => Box::new(v.iter().map(|&x| f64::from(x))),
            TensorValues::F64(v) => Box::new(v.iter().copied()),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.iter_f64().collect()
    }

    fn first_non_finite(&self) -> Option<usize> {
        self.iter_f64().position(|x| !x.is_finite())
    }

    fn byte_len(&self) -> usize {
        self.len() * self.dtype().size_in_bytes()
    }

    fn write_payload(&self, out: &mut Vec<u8>) {
        match &self.values {
            TensorValues::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorValues::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

/// All named parameter tensors of a model at one epoch boundary.
///
/// Iteration order is insertion order, which is also the header order on disk.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorSnapshot {
    tensors: IndexMap<String, TensorData>,
    metadata: BTreeMap<String, String>,
}

impl TensorSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: TensorData) -> Result<(), FormatError> {
        let name = name.into();
        if name.is_empty() || name == METADATA_KEY {
            return Err(FormatError::InvalidName(name));
        }
        if self.tensors.contains_key(&name) {
            return Err(FormatError::DuplicateName(name));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.tensors.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorData)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }
}

/// Serializes a snapshot to its container bytes.
pub fn encode_snapshot(snapshot: &TensorSnapshot) -> Result<Vec<u8>, FormatError> {
    let mut header = Map::new();
    if !snapshot.metadata.is_empty() {
        let meta = snapshot
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect::<Map<_, _>>();
        header.insert(METADATA_KEY.to_owned(), Value::Object(meta));
    }

    let mut offset = 0usize;
    for (name, tensor) in &snapshot.tensors {
        if let Some(index) = tensor.first_non_finite() {
            return Err(FormatError::NonFiniteValue {
                name: name.clone(),
                index,
            });
        }
        let end = offset + tensor.byte_len();
        let mut entry = Map::new();
        entry.insert("dtype".into(), Value::from(tensor.dtype().as_str()));
        entry.insert("shape".into(), Value::from(tensor.shape.clone()));
        entry.insert("data_offsets".into(), Value::from(vec![offset, end]));
        header.insert(name.clone(), Value::Object(entry));
        offset = end;
    }

    let header_bytes = serde_json::to_vec(&Value::Object(header))
        .map_err(|e| FormatError::MalformedHeader(e.to_string()))?;
    let mut out = Vec::with_capacity(LENGTH_PREFIX + header_bytes.len() + offset);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for tensor in snapshot.tensors.values() {
        tensor.write_payload(&mut out);
    }
    Ok(out)
}

pub fn write_snapshot<W: Write>(snapshot: &TensorSnapshot, mut sink: W) -> Result<(), FormatError> {
    let bytes = encode_snapshot(snapshot)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(())
}

pub fn save_snapshot(snapshot: &TensorSnapshot, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let file = File::create(path)?;
    write_snapshot(snapshot, BufWriter::new(file))
}

pub fn read_snapshot<R: Read>(mut source: R) -> Result<TensorSnapshot, FormatError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<TensorSnapshot, FormatError> {
    let file = File::open(path)?;
    read_snapshot(BufReader::new(file))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [usize; 2],
}

struct PendingTensor {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    begin: usize,
    end: usize,
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<TensorSnapshot, FormatError> {
    if bytes.len() < LENGTH_PREFIX {
        return Err(FormatError::TruncatedFile {
            expected: LENGTH_PREFIX as u64,
            actual: bytes.len() as u64,
        });
    }
    let mut prefix = [0u8; LENGTH_PREFIX];
    prefix.copy_from_slice(&bytes[..LENGTH_PREFIX]);
    let header_len = u64::from_le_bytes(prefix);
    let available = (bytes.len() - LENGTH_PREFIX) as u64;
    if header_len > available {
        return Err(FormatError::MalformedHeader(format!(
            "length prefix declares {header_len} header bytes but only {available} follow"
        )));
    }
    let header_end = LENGTH_PREFIX + header_len as usize;
    let header_text = std::str::from_utf8(&bytes[LENGTH_PREFIX..header_end])
        .map_err(|e| FormatError::MalformedHeader(format!("header is not UTF-8: {e}")))?;
    let header: Value = serde_json::from_str(header_text)
        .map_err(|e| FormatError::MalformedHeader(format!("header is not JSON: {e}")))?;
    let Value::Object(header) = header else {
        return Err(FormatError::MalformedHeader("header is not a JSON object".into()));
    };

    let mut metadata = BTreeMap::new();
    let mut pending = Vec::with_capacity(header.len());
    for (name, value) in header {
        if name == METADATA_KEY {
            metadata = serde_json::from_value(value).map_err(|e| {
                FormatError::MalformedHeader(format!("`{METADATA_KEY}` must map strings to strings: {e}"))
            })?;
            continue;
        }
        if name.is_empty() {
            return Err(FormatError::MalformedHeader("empty tensor name".into()));
        }
        let entry: HeaderEntry = serde_json::from_value(value)
            .map_err(|e| FormatError::MalformedHeader(format!("entry `{name}`: {e}")))?;
        let Some(dtype) = Dtype::parse(&entry.dtype) else {
            return Err(FormatError::UnsupportedDtype {
                name,
                dtype: entry.dtype,
            });
        };
        let [begin, end] = entry.data_offsets;
        let expected_bytes = element_count(&entry.shape)
            .checked_mul(dtype.size_in_bytes())
            .ok_or_else(|| FormatError::MalformedHeader(format!("entry `{name}`: shape overflows")))?;
        if end < begin || end - begin != expected_bytes {
            return Err(FormatError::MalformedHeader(format!(
                "entry `{name}`: offsets [{begin}, {end}] do not hold {expected_bytes} bytes for shape {:?}",
                entry.shape
            )));
        }
        pending.push(PendingTensor {
            name,
            dtype,
            shape: entry.shape,
            begin,
            end,
        });
    }

    let data = &bytes[header_end..];
    let mut by_offset: Vec<&PendingTensor> = pending.iter().collect();
    by_offset.sort_by_key(|t| (t.begin, t.end));
    let mut cursor = 0usize;
    for t in &by_offset {
        if t.begin != cursor {
            return Err(FormatError::MalformedHeader(format!(
                "entry `{}` starts at {} but previous data ends at {cursor} (gap or overlap)",
                t.name, t.begin
            )));
        }
        cursor = t.end;
    }
    if cursor > data.len() {
        return Err(FormatError::TruncatedFile {
            expected: (header_end + cursor) as u64,
            actual: bytes.len() as u64,
        });
    }
    if cursor < data.len() {
        return Err(FormatError::MalformedHeader(format!(
            "{} trailing bytes after the last tensor",
            data.len() - cursor
        )));
    }

    let mut snapshot = TensorSnapshot {
        tensors: IndexMap::with_capacity(pending.len()),
        metadata,
    };
    for t in pending {
        let raw = &data[t.begin..t.end];
        let values = match t.dtype {
            Dtype::F32 => TensorValues::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            Dtype::F64 => TensorValues::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                    .collect(),
            ),
        };
        let tensor = TensorData {
            shape: t.shape,
            values,
        };
        if let Some(index) = tensor.first_non_finite() {
            return Err(FormatError::NonFiniteValue { name: t.name, index });
        }
        snapshot.tensors.insert(t.name, tensor);
    }
    Ok(snapshot)
}
