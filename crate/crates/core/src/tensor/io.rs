//! Tensor-exchange format: one JSON header line, then raw little-endian
//! row-major elements with no padding.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DType, IntTensor};
use crate::error::{Error, Result};

/// The header line, serialized with keys in exactly this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub order: String,
    pub endian: String,
}

impl TensorHeader {
    fn for_tensor(t: &IntTensor) -> Self {
        TensorHeader {
            dtype: t.dtype().name().to_owned(),
            shape: t.shape().to_vec(),
            order: "row-major".to_owned(),
            endian: "little".to_owned(),
        }
    }
}

pub fn write_tensor<W: Write>(mut w: W, t: &IntTensor) -> Result<()> {
    let header = serde_json::to_string(&TensorHeader::for_tensor(t))?;
    let mut buf = Vec::with_capacity(header.len() + 1 + t.len() * t.dtype().bytes());
    buf.extend_from_slice(header.as_bytes());
    buf.push(b'\n');
    for &v in t.data() {
        match t.dtype() {
            DType::I8 => buf.extend_from_slice(&(v as i8).to_le_bytes()),
            DType::I16 => buf.extend_from_slice(&(v as i16).to_le_bytes()),
            DType::I32 => buf.extend_from_slice(&v.to_le_bytes()),
        }
    }
    w.write_all(&buf).map_err(|e| Error::io("<writer>", e))
}

pub fn read_tensor<R: Read>(r: R) -> Result<IntTensor> {
    let mut reader = BufReader::new(r);
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io("<reader>", e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("header line is not newline-terminated".into()));
    }
    line.pop();
    let header: TensorHeader = serde_json::from_slice(&line).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let dtype = DType::from_name(&header.dtype)?;
    if header.order != "row-major" {
        return Err(Error::MalformedHeader(format!("unsupported order '{}'", header.order)));
    }
    if header.endian != "little" {
        return Err(Error::MalformedHeader(format!(
            "unsupported endian '{}'",
            header.endian
        )));
    }
    let numel = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader("shape product overflows".into()))?;
    let expected = numel * dtype.bytes();
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload).map_err(|e| Error::io("<reader>", e))?;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data: Vec<i32> = match dtype {
        DType::I8 => payload.iter().map(|&b| b as i8 as i32).collect(),
        DType::I16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as i32)
            .collect(),
        DType::I32 => payload
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    IntTensor::new(dtype, header.shape, data)
}

/// Writes through a sibling temp file and renames it into place.
pub fn save_tensor(path: impl AsRef<Path>, t: &IntTensor) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_tensor(&mut bytes, t)?;
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<IntTensor> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(f)
}
