//! The NVTF tensor container.
//!
//! ```text
//! offset  size         field
//! 0       4            magic "NVTF"
//! 4       4            version, u32 LE (= 1)
//! 8       1            dtype: 0 = f32, 1 = f64, 2 = i64
//! 9       1            ndim
//! 10      8 * ndim     dims, u64 LE each
//! ...     esize * Πdims payload, row-major, little-endian
//! ```
//!
//! Nothing may follow the payload.

use std::path::Path;

use super::{write_atomic, PersistError};
use crate::embedding::{Embedding, EmbeddingShape};

pub const MAGIC: [u8; 4] = *b"NVTF";
pub const VERSION: u32 = 1;
const HEADER_FIXED: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    I64 = 2,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::F32),
            1 => Some(Self::F64),
            2 => Some(Self::I64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 | Self::I64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            Self::F32(_) => DType::F32,
            Self::F64(_) => DType::F64,
            Self::I64(_) => DType::I64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An n-dimensional array with its dtype.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<u64>,
    data: TensorData,
}

fn element_count(dims: &[u64]) -> Option<usize> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| usize::try_from(n).ok())
}

impl Tensor {
    pub fn new(dims: Vec<u64>, data: TensorData) -> Result<Self, PersistError> {
        if dims.len() > u8::MAX as usize {
            return Err(PersistError::InvalidTensor(format!("{} dimensions exceed 255", dims.len())));
        }
        match element_count(&dims) {
            Some(n) if n == data.len() => Ok(Self { dims, data }),
            _ => Err(PersistError::InvalidTensor(format!(
                "dims {dims:?} do not match {} values",
                data.len()
            ))),
        }
    }

    pub fn f64(dims: &[usize], values: Vec<f64>) -> Result<Self, PersistError> {
        Self::new(dims.iter().map(|&d| d as u64).collect(), TensorData::F64(values))
    }

    pub fn f32(dims: &[usize], values: Vec<f32>) -> Result<Self, PersistError> {
        Self::new(dims.iter().map(|&d| d as u64).collect(), TensorData::F32(values))
    }

    pub fn i64(dims: &[usize], values: Vec<i64>) -> Result<Self, PersistError> {
        Self::new(dims.iter().map(|&d| d as u64).collect(), TensorData::I64(values))
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn dims_usize(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    /// Values widened to f64. Integer tensors are rejected.
    pub fn to_f64(&self) -> Result<Vec<f64>, PersistError> {
        match &self.data {
            TensorData::F64(v) => Ok(v.clone()),
            TensorData::F32(v) => Ok(v.iter().map(|&x| f64::from(x)).collect()),
            TensorData::I64(_) => Err(PersistError::DtypeMismatch {
                expected: "f32 or f64",
                found: DType::I64,
            }),
        }
    }

    pub fn into_f64(self) -> Result<Vec<f64>, PersistError> {
        match self.data {
            TensorData::F64(v) => Ok(v),
            _ => self.to_f64(),
        }
    }

    pub fn into_i64(self) -> Result<Vec<i64>, PersistError> {
        match self.data {
            TensorData::I64(v) => Ok(v),
            other => Err(PersistError::DtypeMismatch {
                expected: "i64",
                found: other.dtype(),
            }),
        }
    }

    /// Narrows floating data to f32.
    pub fn to_f32(&self) -> Result<Tensor, PersistError> {
        let v: Vec<f32> = self.to_f64()?.into_iter().map(|x| x as f32).collect();
        Ok(Tensor {
            dims: self.dims.clone(),
            data: TensorData::F32(v),
        })
    }

    /// `[tokens, dim]` f64 tensor of an embedding.
    pub fn from_embedding(e: &Embedding) -> Self {
        let s = e.shape();
        Self {
            dims: vec![s.tokens() as u64, s.dim() as u64],
            data: TensorData::F64(e.as_flat().to_vec()),
        }
    }

    /// Reads a `[tokens, dim]` tensor back as an embedding.
    pub fn to_embedding(&self) -> Result<Embedding, PersistError> {
        let [t, d] = self.dims[..] else {
            return Err(PersistError::InvalidTensor(format!(
                "embedding tensors are [tokens, dim], got dims {:?}",
                self.dims
            )));
        };
        let shape = EmbeddingShape::new(t as usize, d as usize)?;
        Ok(Embedding::from_flat(shape, self.to_f64()?)?)
    }

    /// Stacks equal-shape embeddings into `[n, tokens, dim]`.
    pub fn stack_embeddings(es: &[Embedding]) -> Result<Self, PersistError> {
        let Some(first) = es.first() else {
            return Err(PersistError::InvalidTensor("cannot stack zero embeddings".into()));
        };
        let s = first.shape();
        let mut values = Vec::with_capacity(es.len() * s.len());
        for e in es {
            if e.shape() != s {
                return Err(PersistError::InvalidTensor(format!(
                    "cannot stack shapes {s} and {}",
                    e.shape()
                )));
            }
            values.extend_from_slice(e.as_flat());
        }
        Self::f64(&[es.len(), s.tokens(), s.dim()], values)
    }

    /// Splits a `[n, tokens, dim]` tensor (or a single `[tokens, dim]`) into embeddings.
    pub fn unstack_embeddings(&self) -> Result<Vec<Embedding>, PersistError> {
        match self.dims[..] {
            [_, _] => Ok(vec![self.to_embedding()?]),
            [n, t, d] => {
                let shape = EmbeddingShape::new(t as usize, d as usize)?;
                let values = self.to_f64()?;
                if n == 0 {
                    return Ok(Vec::new());
                }
                values
                    .chunks_exact(shape.len())
                    .map(|c| Ok(Embedding::from_flat(shape, c.to_vec())?))
                    .collect()
            }
            _ => Err(PersistError::InvalidTensor(format!(
                "expected [n, tokens, dim] or [tokens, dim], got dims {:?}",
                self.dims
            ))),
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_FIXED + 8 * self.dims.len() + self.dtype().size() * self.data.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype().code());
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PersistError> {
        let truncated = |needed: usize| PersistError::Truncated {
            expected: needed,
            actual: bytes.len(),
        };
        if bytes.len() < 4 {
            return Err(truncated(HEADER_FIXED));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(PersistError::BadMagic(magic));
        }
        if bytes.len() < HEADER_FIXED {
            return Err(truncated(HEADER_FIXED));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(PersistError::UnsupportedVersion(version));
        }
        let dtype = DType::from_code(bytes[8]).ok_or(PersistError::UnsupportedDtype(bytes[8]))?;
        let ndim = bytes[9] as usize;
        let header = HEADER_FIXED + 8 * ndim;
        if bytes.len() < header {
            return Err(truncated(header));
        }
        let dims: Vec<u64> = bytes[HEADER_FIXED..header]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let count = element_count(&dims)
            .ok_or_else(|| PersistError::InvalidTensor(format!("dims {dims:?} overflow")))?;
        let payload_len = count
            .checked_mul(dtype.size())
            .ok_or_else(|| PersistError::InvalidTensor(format!("dims {dims:?} overflow")))?;
        let total = header + payload_len;
        if bytes.len() < total {
            return Err(truncated(total));
        }
        if bytes.len() > total {
            return Err(PersistError::TrailingBytes {
                expected: total,
                actual: bytes.len(),
            });
        }
        let payload = &bytes[header..];
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            DType::I64 => TensorData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok(Self { dims, data })
    }
}

/// Writes `tensor` to `path` atomically.
pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<(), PersistError> {
    write_atomic(path, &tensor.to_bytes())
}

pub fn read_tensor(path: &Path) -> Result<Tensor, PersistError> {
    let bytes = std::fs::read(path).map_err(|e| PersistError::io(path, e))?;
    Tensor::from_bytes(&bytes).map_err(|e| e.at(path))
}

pub fn write_embedding(path: &Path, e: &Embedding) -> Result<(), PersistError> {
    write_tensor(path, &Tensor::from_embedding(e))
}

pub fn read_embedding(path: &Path) -> Result<Embedding, PersistError> {
    read_tensor(path)?.to_embedding().map_err(|e| e.at(path))
}

/// Writes embeddings as one `[n, tokens, dim]` tensor.
pub fn write_embeddings(path: &Path, es: &[Embedding]) -> Result<(), PersistError> {
    write_tensor(path, &Tensor::stack_embeddings(es)?)
}

/// Reads a `[n, tokens, dim]` or `[tokens, dim]` tensor as embeddings.
pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>, PersistError> {
    read_tensor(path)?.unstack_embeddings().map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_arithmetic() {
        let t = Tensor::f64(&[2], vec![1.5, -2.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(b.len(), 4 + 4 + 1 + 1 + 8 + 16);
        assert_eq!(&b[..4], b"NVTF");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(b[8], 1);
        assert_eq!(b[9], 1);
        assert_eq!(&b[10..18], &2u64.to_le_bytes());
        assert_eq!(&b[18..26], &1.5f64.to_le_bytes());
    }

    #[test]
    fn typed_errors() {
        let good = Tensor::f64(&[2], vec![1.5, -2.0]).unwrap().to_bytes();
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert_eq!(Tensor::from_bytes(&bad).unwrap_err(), PersistError::BadMagic(*b"XXXX"));
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(Tensor::from_bytes(&bad).unwrap_err(), PersistError::UnsupportedVersion(2));
        let mut bad = good.clone();
        bad[8] = 7;
        assert_eq!(Tensor::from_bytes(&bad).unwrap_err(), PersistError::UnsupportedDtype(7));
        assert_eq!(
            Tensor::from_bytes(&good[..good.len() - 1]).unwrap_err(),
            PersistError::Truncated { expected: 34, actual: 33 }
        );
        assert!(matches!(Tensor::from_bytes(&good[..12]), Err(PersistError::Truncated { .. })));
        assert!(matches!(Tensor::from_bytes(b"NV"), Err(PersistError::Truncated { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(Tensor::from_bytes(&long), Err(PersistError::TrailingBytes { .. })));
    }

    #[test]
    fn scalar_and_empty_tensors() {
        let s = Tensor::f64(&[], vec![3.0]).unwrap();
        assert_eq!(Tensor::from_bytes(&s.to_bytes()).unwrap(), s);
        let e = Tensor::i64(&[0, 4], vec![]).unwrap();
        assert_eq!(Tensor::from_bytes(&e.to_bytes()).unwrap(), e);
        assert!(Tensor::f64(&[3], vec![1.0]).is_err());
    }

    #[test]
    fn embedding_stack_round_trip() {
        let s = EmbeddingShape::new(2, 3).unwrap();
        let es: Vec<Embedding> = (0..4).map(|i| Embedding::random(s, i)).collect();
        let t = Tensor::stack_embeddings(&es).unwrap();
        assert_eq!(t.dims(), &[4, 2, 3]);
        assert_eq!(Tensor::from_bytes(&t.to_bytes()).unwrap().unstack_embeddings().unwrap(), es);
        let one = Tensor::from_embedding(&es[1]);
        assert_eq!(one.unstack_embeddings().unwrap(), vec![es[1].clone()]);
        assert!(Tensor::f64(&[6], vec![0.0; 6]).unwrap().to_embedding().is_err());
    }

    fn tensor_strategy() -> impl Strategy<Value = Tensor> {
        proptest::collection::vec(0usize..4, 0..4).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            let d = dims.clone();
            prop_oneof![
                proptest::collection::vec(any::<f64>(), n)
                    .prop_map({ let d = d.clone(); move |v| Tensor::f64(&d, v).unwrap() }),
                proptest::collection::vec(any::<f32>(), n)
                    .prop_map({ let d = d.clone(); move |v| Tensor::f32(&d, v).unwrap() }),
                proptest::collection::vec(any::<i64>(), n)
                    .prop_map(move |v| Tensor::i64(&d, v).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(t in tensor_strategy()) {
            let bytes = t.to_bytes();
            prop_assert_eq!(bytes.len(), t.encoded_len());
            let back = Tensor::from_bytes(&bytes).unwrap();
            // compare encodings so NaN payloads count as equal
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back.dims(), t.dims());
        }
    }
}
