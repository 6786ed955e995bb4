//! Bit-exact container for named dense f32/f16 tensors.
//!
//! Wire format (all integers little-endian, no padding):
//!
//! ```text
//! "TSG1" | u32 version = 1 | u32 tensor_count
//! per tensor: u16 name_len | name (UTF-8) | u8 dtype (0 = F32, 1 = F16)
//!             | u8 rank | rank × u32 dims | raw element data
//! ```

use std::collections::HashSet;

use half::f16;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSG1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DType {
    F32,
    F16,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F16 => 2,
        }
    }

    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F16 => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(DType::F32),
            1 => Ok(DType::F16),
            _ => Err(Error::Format(format!("unknown dtype code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    name: String,
    dtype: DType,
    shape: Vec<u32>,
    data: Vec<u8>,
}

impl Tensor {
    /// Builds a tensor from raw little-endian element bytes.
    pub fn from_raw(name: impl Into<String>, dtype: DType, shape: Vec<u32>, data: Vec<u8>) -> Result<Self> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::Format("tensor name longer than 65535 bytes".into()));
        }
        if shape.len() > u8::MAX as usize {
            return Err(Error::Format("tensor rank above 255".into()));
        }
        let count = element_count(&shape)?;
        let bytes = count
            .checked_mul(dtype.size())
            .ok_or_else(|| Error::Format("tensor byte length overflows".into()))?;
        if bytes != data.len() {
            return Err(Error::Format(format!(
                "tensor {name:?} holds {} bytes, shape requires {bytes}",
                data.len()
            )));
        }
        Ok(Self {
            name,
            dtype,
            shape,
            data,
        })
    }

    pub fn from_f32(name: impl Into<String>, shape: Vec<u32>, values: &[f32]) -> Result<Self> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::from_raw(name, DType::F32, shape, data)
    }

    pub fn from_f16(name: impl Into<String>, shape: Vec<u32>, values: &[f16]) -> Result<Self> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::from_raw(name, DType::F16, shape, data)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn shape(&self) -> &[u32] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dtype.size()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Element `i` widened exactly to f64.
    pub fn get(&self, i: usize) -> f64 {
        match self.dtype {
            DType::F32 => {
                let b = &self.data[4 * i..4 * i + 4];
                f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            }
            DType::F16 => f16::from_le_bytes([self.data[2 * i], self.data[2 * i + 1]]).to_f64(),
        }
    }

    /// Stores `v` rounded to nearest-even at the tensor's precision.
    fn set(&mut self, i: usize, v: f64) {
        match self.dtype {
            DType::F32 => self.data[4 * i..4 * i + 4].copy_from_slice(&(v as f32).to_le_bytes()),
            DType::F16 => self.data[2 * i..2 * i + 2].copy_from_slice(&f64_to_f16(v).to_le_bytes()),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Rounds an f64 to binary16, nearest-even, in a single step: overflow goes
/// to ±infinity and small values underflow gradually through subnormals.
pub fn f64_to_f16(v: f64) -> f16 {
    let bits = v.to_bits();
    let sign = ((bits >> 48) & 0x8000) as u16;
    let exp = ((bits >> 52) & 0x7FF) as i32;
    let man = bits & ((1u64 << 52) - 1);
    if exp == 0x7FF {
        return f16::from_bits(if man == 0 {
            sign | 0x7C00
        } else {
            sign | 0x7E00 | ((man >> 42) as u16 & 0x3FF)
        });
    }
    if exp == 0 {
        // f64 subnormals are far below half the smallest f16 subnormal.
        return f16::from_bits(sign);
    }
    let e = exp - 1023;
    if e > 15 {
        return f16::from_bits(sign | 0x7C00);
    }
    let sig = man | (1u64 << 52);
    let shift = (42 + (-14 - e).max(0)) as u32;
    if shift > 53 {
        return f16::from_bits(sign);
    }
    let mut q = sig >> shift;
    let rem = sig & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    if rem > half || (rem == half && q & 1 == 1) {
        q += 1;
    }
    let magnitude = if e >= -14 { (((e + 14) as u64) << 10) + q } else { q };
    f16::from_bits(sign | magnitude.min(0x7C00) as u16)
}

fn element_count(shape: &[u32]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or_else(|| Error::Format("element count overflows".into()))
}

/// Ordered collection of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TensorStore {
    tensors: Vec<Tensor>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: Tensor) -> Result<()> {
        if self.tensors.iter().any(|t| t.name == tensor.name) {
            return Err(Error::Format(format!("duplicate tensor name {:?}", tensor.name)));
        }
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// A store holding one 1-D tensor named `w`.
    pub fn single_f32(values: &[f32]) -> Result<Self> {
        let mut s = Self::new();
        s.push(Tensor::from_f32("w", vec![values.len() as u32], values)?)?;
        Ok(s)
    }

    pub fn single_f16(values: &[f16]) -> Result<Self> {
        let mut s = Self::new();
        s.push(Tensor::from_f16("w", vec![values.len() as u32], values)?)?;
        Ok(s)
    }

    pub fn read(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut store = Self::new();
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_owned();
            if !seen.insert(name.clone()) {
                return Err(Error::Format(format!("duplicate tensor name {name:?}")));
            }
            let dtype = DType::from_code(r.u8()?)?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let bytes = element_count(&shape)?
                .checked_mul(dtype.size())
                .ok_or_else(|| Error::Format("tensor byte length overflows".into()))?;
            let data = r.take(bytes)?.to_vec();
            store.tensors.push(Tensor {
                name,
                dtype,
                shape,
                data,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(store)
    }

    pub fn write(&self) -> Vec<u8> {
        let size = 12
            + self
                .tensors
                .iter()
                .map(|t| 4 + t.name.len() + 4 * t.shape.len() + t.data.len())
                .sum::<usize>();
        let mut out = Vec::with_capacity(size);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dtype.code());
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.extend_from_slice(&t.data);
        }
        out
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.write())?;
        Ok(())
    }

    /// Imports a headerless little-endian f32 stream as tensor `w`.
    pub fn from_raw_f32(bytes: &[u8]) -> Result<Self> {
        if bytes.len() % 4 != 0 {
            return Err(Error::Format("raw f32 stream length is not a multiple of 4".into()));
        }
        let n = u32::try_from(bytes.len() / 4).map_err(|_| Error::Format("raw stream too long".into()))?;
        let mut s = Self::new();
        s.push(Tensor::from_raw("w", DType::F32, vec![n], bytes.to_vec())?)?;
        Ok(s)
    }

    /// Concatenated f32 data of all tensors; fails on f16 tensors.
    pub fn to_raw_f32(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for t in &self.tensors {
            if t.dtype != DType::F32 {
                return Err(Error::Format(format!("tensor {:?} is not f32", t.name)));
            }
            out.extend_from_slice(&t.data);
        }
        Ok(out)
    }

    /// Flattens the selected tensors (file order, row-major) into f64.
    pub fn gather(&self, filter: Option<&str>) -> Result<FlatView> {
        let pattern = filter
            .map(glob::Pattern::new)
            .transpose()
            .map_err(|e| Error::InvalidParams(format!("bad filter: {e}")))?;
        let mut values = Vec::new();
        let mut segments = Vec::new();
        for (index, t) in self.tensors.iter().enumerate() {
            if pattern.as_ref().is_some_and(|p| !p.matches(&t.name)) {
                continue;
            }
            segments.push(Segment {
                tensor: index,
                start: values.len(),
                len: t.len(),
            });
            values.extend(t.to_f64());
        }
        if segments.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(FlatView { values, segments })
    }

    /// Writes a gathered view back, rounding each element to its tensor's
    /// precision. Elements whose value is unchanged keep their exact bytes.
    pub fn scatter(&self, view: &FlatView) -> Result<TensorStore> {
        let mut out = self.clone();
        let mut expected_start = 0;
        for seg in &view.segments {
            let t = out.tensors.get_mut(seg.tensor).ok_or(Error::ShapeMismatch)?;
            if t.len() != seg.len || seg.start != expected_start {
                return Err(Error::ShapeMismatch);
            }
            expected_start += seg.len;
        }
        if expected_start != view.values.len() {
            return Err(Error::ShapeMismatch);
        }
        for seg in &view.segments {
            let t = &mut out.tensors[seg.tensor];
            for (i, &v) in view.values[seg.start..seg.start + seg.len].iter().enumerate() {
                if t.get(i).to_bits() != v.to_bits() {
                    t.set(i, v);
                }
            }
        }
        Ok(out)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// One tensor's span inside a [`FlatView`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub tensor: usize,
    pub start: usize,
    pub len: usize,
}

/// Selected weights as one f64 vector, with the map back to their tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatView {
    pub values: Vec<f64>,
    segments: Vec<Segment>,
}

impl FlatView {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `(tensor index, element offset)` of flat position `pos`.
    pub fn locate(&self, pos: usize) -> Option<(usize, usize)> {
        let i = self.segments.partition_point(|s| s.start + s.len <= pos);
        let s = self.segments.get(i)?;
        (pos >= s.start).then(|| (s.tensor, pos - s.start))
    }
}
