//! Reader and writer for the NumPy `.npy` format.
//!
//! Reads versions 1.0 to 3.0 with little- or big-endian float and integer
//! dtypes (integers and booleans are widened to `f64`). Writes version 1.0
//! with the header padded so the data starts on a 64-byte boundary.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NpyData {
    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn descr(&self) -> &'static str {
        match self {
            NpyData::F32(_) => "<f4",
            NpyData::F64(_) => "<f8",
        }
    }
}

/// An n-dimensional array in C (row-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Self {
        NpyArray { shape, data: NpyData::F64(data) }
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Self {
        NpyArray { shape, data: NpyData::F32(data) }
    }

    /// Values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            NpyData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Float,
    Int,
    Uint,
    Bool,
}

#[derive(Debug, Clone, Copy)]
struct Dtype {
    kind: Kind,
    size: usize,
    big_endian: bool,
}

fn parse_descr(descr: &str) -> Option<Dtype> {
    let mut chars = descr.chars();
    let order = chars.next()?;
    let big_endian = match order {
        '<' | '|' | '=' => false,
        '>' => true,
        _ => return None,
    };
    let kind = match chars.next()? {
        'f' => Kind::Float,
        'i' => Kind::Int,
        'u' => Kind::Uint,
        'b' => Kind::Bool,
        _ => return None,
    };
    let size: usize = chars.as_str().parse().ok()?;
    let ok = match kind {
        Kind::Float => size == 4 || size == 8,
        Kind::Int | Kind::Uint => matches!(size, 1 | 2 | 4 | 8),
        Kind::Bool => size == 1,
    };
    ok.then_some(Dtype { kind, size, big_endian })
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Minimal parser for the Python dict literal in an NPY header.
fn parse_header(text: &str) -> std::result::Result<Header, String> {
    let body = text.trim().trim_end_matches('\n').trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| format!("header is not a dict: {body:?}"))?;
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| format!("expected a quoted key at {rest:?}"))?;
        let after = after.trim_start().strip_prefix(':').ok_or("expected ':' after key")?.trim_start();
        rest = match key.as_str() {
            "descr" => {
                let (v, r) = take_quoted(after).ok_or("descr must be a string")?;
                descr = Some(v);
                r
            }
            "fortran_order" => {
                if let Some(r) = after.strip_prefix("True") {
                    fortran = Some(true);
                    r
                } else if let Some(r) = after.strip_prefix("False") {
                    fortran = Some(false);
                    r
                } else {
                    return Err("fortran_order must be True or False".into());
                }
            }
            "shape" => {
                let inner = after.strip_prefix('(').ok_or("shape must be a tuple")?;
                let close = inner.find(')').ok_or("unterminated shape tuple")?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim_end_matches('L').parse::<usize>().map_err(|_| format!("bad dimension {s:?}")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            other => return Err(format!("unexpected header key {other:?}")),
        }
        .trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }
    Ok(Header {
        descr: descr.ok_or("header lacks descr")?,
        fortran_order: fortran.ok_or("header lacks fortran_order")?,
        shape: shape.ok_or("header lacks shape")?,
    })
}

fn take_quoted(s: &str) -> Option<(String, &str)> {
    let q = s.chars().next().filter(|&c| c == '\'' || c == '"')?;
    let end = s[1..].find(q)?;
    Some((s[1..1 + end].to_string(), &s[end + 2..]))
}

fn npy_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Npy { path: path.to_path_buf(), offset: offset as u64, message: message.into() }
}

/// Parse NPY bytes; `path` is only used in error messages.
pub fn parse_npy(bytes: &[u8], path: &Path) -> Result<NpyArray> {
    if bytes.len() < 8 || &bytes[..6] != MAGIC {
        return Err(npy_err(path, 0, "missing \\x93NUMPY magic"));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (len_bytes, encoding_utf8) = match major {
        1 => (2, false),
        2 => (4, false),
        3 => (4, true),
        _ => return Err(npy_err(path, 6, format!("unsupported format version {major}.{minor}"))),
    };
    let header_start = 8 + len_bytes;
    if bytes.len() < header_start {
        return Err(npy_err(path, 8, "file ends inside the header length"));
    }
    let header_len = if len_bytes == 2 {
        u16::from_le_bytes([bytes[8], bytes[9]]) as usize
    } else {
        u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize
    };
    let data_start = header_start + header_len;
    if bytes.len() < data_start {
        return Err(npy_err(
            path,
            bytes.len(),
            format!("header declares {header_len} bytes but the file ends first"),
        ));
    }
    let raw = &bytes[header_start..data_start];
    let text = if encoding_utf8 {
        std::str::from_utf8(raw).map_err(|e| npy_err(path, header_start + e.valid_up_to(), "header is not UTF-8"))?
    } else {
        match raw.iter().position(|b| !b.is_ascii()) {
            Some(p) => return Err(npy_err(path, header_start + p, "header is not ASCII")),
            None => std::str::from_utf8(raw).expect("ascii is utf-8"),
        }
    };
    let header = parse_header(text).map_err(|m| npy_err(path, header_start, m))?;
    let dtype = parse_descr(&header.descr)
        .ok_or_else(|| npy_err(path, header_start, format!("unsupported dtype {:?}", header.descr)))?;

    let count: usize = header.shape.iter().product();
    let expected = count
        .checked_mul(dtype.size)
        .ok_or_else(|| npy_err(path, header_start, "shape overflows"))?;
    let payload = &bytes[data_start..];
    if payload.len() != expected {
        let found = payload.len() / dtype.size;
        let at = data_start + payload.len().min(expected);
        return Err(npy_err(
            path,
            at,
            format!(
                "shape {:?} needs {count} elements ({expected} bytes) but the data holds {found} ({} bytes)",
                header.shape,
                payload.len()
            ),
        ));
    }

    let mut data = decode(payload, dtype);
    if header.fortran_order && header.shape.len() > 1 {
        data = match data {
            NpyData::F32(v) => NpyData::F32(fortran_to_c(&v, &header.shape)),
            NpyData::F64(v) => NpyData::F64(fortran_to_c(&v, &header.shape)),
        };
    }
    Ok(NpyArray { shape: header.shape, data })
}

fn decode(payload: &[u8], dt: Dtype) -> NpyData {
    fn arr<const N: usize>(c: &[u8], big: bool) -> [u8; N] {
        let mut a: [u8; N] = c.try_into().expect("chunk size");
        if big {
            a.reverse();
        }
        a
    }
    let big = dt.big_endian;
    let chunks = payload.chunks_exact(dt.size);
    match (dt.kind, dt.size) {
        (Kind::Float, 4) => NpyData::F32(chunks.map(|c| f32::from_le_bytes(arr(c, big))).collect()),
        (Kind::Float, _) => NpyData::F64(chunks.map(|c| f64::from_le_bytes(arr(c, big))).collect()),
        (Kind::Bool, _) | (Kind::Uint, 1) => NpyData::F64(chunks.map(|c| f64::from(c[0])).collect()),
        (Kind::Int, 1) => NpyData::F64(chunks.map(|c| f64::from(c[0] as i8)).collect()),
        (Kind::Int, 2) => NpyData::F64(chunks.map(|c| f64::from(i16::from_le_bytes(arr(c, big)))).collect()),
        (Kind::Uint, 2) => NpyData::F64(chunks.map(|c| f64::from(u16::from_le_bytes(arr(c, big)))).collect()),
        (Kind::Int, 4) => NpyData::F64(chunks.map(|c| f64::from(i32::from_le_bytes(arr(c, big)))).collect()),
        (Kind::Uint, 4) => NpyData::F64(chunks.map(|c| f64::from(u32::from_le_bytes(arr(c, big)))).collect()),
        (Kind::Int, _) => NpyData::F64(chunks.map(|c| i64::from_le_bytes(arr(c, big)) as f64).collect()),
        (Kind::Uint, _) => NpyData::F64(chunks.map(|c| u64::from_le_bytes(arr(c, big)) as f64).collect()),
    }
}

fn fortran_to_c<T: Copy>(data: &[T], shape: &[usize]) -> Vec<T> {
    let n = data.len();
    let rank = shape.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    for _ in 0..n {
        let mut offset = 0;
        let mut stride = 1;
        for (k, &i) in idx.iter().enumerate() {
            offset += i * stride;
            stride *= shape[k];
        }
        out.push(data[offset]);
        for k in (0..rank).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Encode as NPY version 1.0 (2.0 if the header does not fit in 64 KiB).
pub fn to_npy_bytes(arr: &NpyArray) -> std::result::Result<Vec<u8>, String> {
    let count: usize = arr.shape.iter().product();
    if count != arr.data.len() {
        return Err(format!("shape {:?} holds {count} elements but {} were given", arr.shape, arr.data.len()));
    }
    let dims = match arr.shape.len() {
        1 => format!("({},)", arr.shape[0]),
        _ => format!("({})", arr.shape.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")),
    };
    let dict = format!("{{'descr': '{}', 'fortran_order': False, 'shape': {dims}, }}", arr.data.descr());
    let (version, len_bytes) = if 10 + dict.len() < u16::MAX as usize { (1u8, 2) } else { (2u8, 4) };
    let prefix = 6 + 2 + len_bytes;
    let total = (prefix + dict.len() + 1).div_ceil(ALIGN) * ALIGN;
    let header_len = total - prefix;

    let mut out = Vec::with_capacity(total + count * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[version, 0]);
    if len_bytes == 2 {
        out.extend_from_slice(&(header_len as u16).to_le_bytes());
    } else {
        out.extend_from_slice(&(header_len as u32).to_le_bytes());
    }
    out.extend_from_slice(dict.as_bytes());
    out.resize(total - 1, b' ');
    out.push(b'\n');
    match &arr.data {
        NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    Ok(out)
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<NpyArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_npy(&bytes, path)
}

pub fn write_npy(path: impl AsRef<Path>, arr: &NpyArray) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_npy_bytes(arr).map_err(|m| npy_err(path, 0, m))?;
    fs::write(path, bytes).map_err(|e| Error::io(PathBuf::from(path), e))
}
