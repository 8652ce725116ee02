//! On-disk formats: OTEN tensors, binary PGM heatmaps, CSV tables and
//! parameter directories.
//!
//! OTEN layout (all integers little-endian):
//!
//! ```text
//! "OTEN" | version: u8 = 1 | dtype: u8 (0 = f64, 1 = f32) | rank: u32 | dims: u32 * rank | data
//! ```
//!
//! Data is row-major IEEE-754 in the declared precision.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub const OTEN_MAGIC: &[u8; 4] = b"OTEN";
pub const OTEN_VERSION: u8 = 1;

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let dtype = t.dtype();
    let mut buf = Vec::with_capacity(10 + 4 * t.rank() + dtype.size() * t.len());
    buf.extend_from_slice(OTEN_MAGIC);
    buf.push(OTEN_VERSION);
    buf.push(dtype.code());
    buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match dtype {
        DType::F64 => t
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
        DType::F32 => t
            .data()
            .iter()
            .for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    buf
}

pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let truncated = |expected: usize| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 || &bytes[..4] != OTEN_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < 10 {
        return Err(truncated(10));
    }
    if bytes[4] != OTEN_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version: bytes[4],
        });
    }
    let dtype = DType::from_code(bytes[5]).ok_or(Error::UnknownDtype {
        path: path.to_path_buf(),
        dtype: bytes[5],
    })?;
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let rank = read_u32(6);
    let header = 10 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated(header));
    }
    let shape: Vec<usize> = (0..rank).map(|d| read_u32(10 + 4 * d)).collect();
    let count: usize = shape.iter().product();
    let expected = header + count * dtype.size();
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    let payload = &bytes[header..expected];
    let data: Vec<f64> = match dtype {
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok(Tensor::new(shape, data)?.with_dtype(dtype))
}

pub fn tensor_save(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(t)).map_err(|e| Error::io(path, e))
}

pub fn tensor_load(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Maps values affinely onto 0..=255: `round(255 (v - min) / (max - min))`,
/// or all zeros when the range is degenerate.
pub fn heatmap_pixels(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return vec![0; values.len()];
    }
    values
        .iter()
        .map(|&v| (255.0 * (v - lo) / (hi - lo)).round() as u8)
        .collect()
}

pub fn encode_pgm(values: &Tensor) -> Result<Vec<u8>> {
    if values.rank() != 2 {
        return Err(Error::Shape(format!(
            "heatmap must be rank 2 (H, W), got {:?}",
            values.shape()
        )));
    }
    if !values.all_finite() {
        return Err(Error::NonFinite("heatmap"));
    }
    let (h, w) = (values.shape()[0], values.shape()[1]);
    let mut buf = format!("P5\n{w} {h}\n255\n").into_bytes();
    buf.extend(heatmap_pixels(values.data()));
    Ok(buf)
}

pub fn heatmap_save_pgm(values: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(values)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a CSV table. Rust float formatting is locale independent, so the
/// decimal separator is always '.'.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a numeric CSV written by [`write_csv`], returning the header and rows.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|f| {
                    f.parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!("non-numeric CSV field {f:?}"))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Writes named tensors as `<dir>/<name>.oten` plus `<dir>/manifest.txt`
/// (one `name d0xd1x...` line per tensor, in the given order).
pub fn save_tensor_dir<'a>(
    dir: impl AsRef<Path>,
    tensors: impl IntoIterator<Item = (String, &'a Tensor)>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Vec::new();
    for (name, t) in tensors {
        tensor_save(t, dir.join(format!("{name}.oten")))?;
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        writeln!(manifest, "{name} {}", dims.join("x")).unwrap();
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Reads every tensor listed in `<dir>/manifest.txt`, checking shapes.
pub fn load_tensor_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (name, dims) = line
            .split_once(' ')
            .ok_or_else(|| Error::Config(format!("bad manifest line {line:?}")))?;
        let shape: Vec<usize> = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad manifest shape {dims:?}")))?;
        let t = tensor_load(dir.join(format!("{name}.oten")))?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Shape(format!(
                "{name}: manifest says {shape:?}, file holds {:?}",
                t.shape()
            )));
        }
        out.push((name.to_owned(), t));
    }
    Ok(out)
}
