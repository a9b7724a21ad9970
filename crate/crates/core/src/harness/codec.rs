//! Little-endian wire frames for compressed payloads.
//!
//! ```text
//! tag:u8  dim:u32
//! 0x00 dense       dim × f32
//! 0x01 sparse      k:u32, k × index:u32 (ascending), k × f32
//! 0x02 sign-scale  blocks:u32, blocks × (start:u32, scale:f32),
//!                  ⌈dim/8⌉ sign bytes, MSB-first, zero-padded
//! ```

use std::fmt;

use thiserror::Error;

use crate::compressors::CompressedPayload;

pub const TAG_DENSE: u8 = 0x00;
pub const TAG_SPARSE: u8 = 0x01;
pub const TAG_SIGN_SCALE: u8 = 0x02;

const HEADER_LEN: usize = 1 + 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecodeErrorKind {
    UnknownTag(u8),
    Truncated { needed: usize, available: usize },
    CountExceedsDimension { count: u32, dim: u32 },
    IndexOutOfRange { index: u32, dim: u32 },
    IndicesNotAscending,
    NonFiniteValue,
    InvalidBlockBoundary,
    NegativeScale,
    NonZeroPadding,
    TrailingBytes(usize),
}

impl fmt::Display for DecodeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecodeErrorKind::UnknownTag(tag) => write!(f, "unknown frame tag {tag:#04x}"),
            DecodeErrorKind::Truncated { needed, available } => {
                write!(f, "truncated frame: need {needed} bytes, {available} available")
            }
            DecodeErrorKind::CountExceedsDimension { count, dim } => {
                write!(f, "count {count} exceeds dimension {dim}")
            }
            DecodeErrorKind::IndexOutOfRange { index, dim } => {
                write!(f, "index {index} out of range for dimension {dim}")
            }
            DecodeErrorKind::IndicesNotAscending => write!(f, "indices not strictly ascending"),
            DecodeErrorKind::NonFiniteValue => write!(f, "non-finite value"),
            DecodeErrorKind::InvalidBlockBoundary => write!(f, "invalid block boundary"),
            DecodeErrorKind::NegativeScale => write!(f, "negative block scale"),
            DecodeErrorKind::NonZeroPadding => write!(f, "non-zero padding bits"),
            DecodeErrorKind::TrailingBytes(n) => write!(f, "{n} trailing bytes"),
        }
    }
}

/// A malformed frame, with the byte offset at which decoding failed.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("decode error at offset {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

/// Encoded length of a payload, computed without encoding it.
pub fn frame_len(p: &CompressedPayload) -> usize {
    HEADER_LEN
        + match p {
            CompressedPayload::Dense { values } => 4 * values.len(),
            CompressedPayload::Sparse { indices, .. } => 4 + 8 * indices.len(),
            CompressedPayload::SignScale {
                dim, boundaries, ..
            } => 4 + 8 * boundaries.len() + dim.div_ceil(8),
        }
}

/// Rounds to `f32`, saturating values outside its range.
fn to_wire(v: f64) -> f32 {
    (v as f32).clamp(f32::MIN, f32::MAX)
}

pub fn encode(p: &CompressedPayload) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame_len(p));
    match p {
        CompressedPayload::Dense { values } => {
            out.push(TAG_DENSE);
            out.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for &v in values {
                out.extend_from_slice(&to_wire(v).to_le_bytes());
            }
        }
        CompressedPayload::Sparse {
            dim,
            indices,
            values,
        } => {
            out.push(TAG_SPARSE);
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
            out.extend_from_slice(&(indices.len() as u32).to_le_bytes());
            for &i in indices {
                out.extend_from_slice(&i.to_le_bytes());
            }
            for &v in values {
                out.extend_from_slice(&to_wire(v).to_le_bytes());
            }
        }
        CompressedPayload::SignScale {
            dim,
            boundaries,
            scales,
            signs,
        } => {
            out.push(TAG_SIGN_SCALE);
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
            out.extend_from_slice(&(boundaries.len() as u32).to_le_bytes());
            for (&b, &s) in boundaries.iter().zip(scales) {
                out.extend_from_slice(&b.to_le_bytes());
                out.extend_from_slice(&to_wire(s).to_le_bytes());
            }
            out.extend_from_slice(signs);
        }
    }
    debug_assert_eq!(out.len(), frame_len(p));
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError {
            offset: self.pos,
            kind,
        }
    }

    fn need(&self, n: usize) -> Result<(), DecodeError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(self.err(DecodeErrorKind::Truncated {
                needed: n,
                available,
            }));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        self.need(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64, DecodeError> {
        let at = self.pos;
        let v = f32::from_le_bytes(self.take(4)?.try_into().unwrap());
        if !v.is_finite() {
            return Err(DecodeError {
                offset: at,
                kind: DecodeErrorKind::NonFiniteValue,
            });
        }
        Ok(v as f64)
    }
}

/// Parses one frame. The whole input must be consumed.
pub fn decode(bytes: &[u8]) -> Result<CompressedPayload, DecodeError> {
    let mut r = Reader { bytes, pos: 0 };
    let tag = r.u8()?;
    if !matches!(tag, TAG_DENSE | TAG_SPARSE | TAG_SIGN_SCALE) {
        return Err(DecodeError {
            offset: 0,
            kind: DecodeErrorKind::UnknownTag(tag),
        });
    }
    let dim = r.u32()?;
    let payload = match tag {
        TAG_DENSE => {
            r.need(4 * dim as usize)?;
            let values = (0..dim).map(|_| r.f32()).collect::<Result<_, _>>()?;
            CompressedPayload::Dense { values }
        }
        TAG_SPARSE => {
            let count_at = r.pos;
            let count = r.u32()?;
            if count > dim {
                return Err(DecodeError {
                    offset: count_at,
                    kind: DecodeErrorKind::CountExceedsDimension { count, dim },
                });
            }
            r.need(8 * count as usize)?;
            let mut indices = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let at = r.pos;
                let index = r.u32()?;
                let fail = |kind| DecodeError { offset: at, kind };
                if index >= dim {
                    return Err(fail(DecodeErrorKind::IndexOutOfRange { index, dim }));
                }
                if indices.last().is_some_and(|&prev| prev >= index) {
                    return Err(fail(DecodeErrorKind::IndicesNotAscending));
                }
                indices.push(index);
            }
            let values = (0..count).map(|_| r.f32()).collect::<Result<_, _>>()?;
            CompressedPayload::Sparse {
                dim: dim as usize,
                indices,
                values,
            }
        }
        _ => {
            let count_at = r.pos;
            let blocks = r.u32()?;
            if blocks == 0 || blocks > dim {
                return Err(DecodeError {
                    offset: count_at,
                    kind: DecodeErrorKind::CountExceedsDimension { count: blocks, dim },
                });
            }
            let sign_len = (dim as usize).div_ceil(8);
            r.need(8 * blocks as usize + sign_len)?;
            let mut boundaries = Vec::with_capacity(blocks as usize);
            let mut scales = Vec::with_capacity(blocks as usize);
            for b in 0..blocks {
                let at = r.pos;
                let start = r.u32()?;
                let valid = if b == 0 {
                    start == 0
                } else {
                    start > *boundaries.last().unwrap() && start < dim
                };
                if !valid {
                    return Err(DecodeError {
                        offset: at,
                        kind: DecodeErrorKind::InvalidBlockBoundary,
                    });
                }
                boundaries.push(start);
                let scale_at = r.pos;
                let scale = r.f32()?;
                if scale < 0.0 {
                    return Err(DecodeError {
                        offset: scale_at,
                        kind: DecodeErrorKind::NegativeScale,
                    });
                }
                scales.push(scale);
            }
            let signs = r.take(sign_len)?.to_vec();
            let used = dim as usize % 8;
            if used != 0 && signs[sign_len - 1] & (0xFF >> used) != 0 {
                return Err(DecodeError {
                    offset: r.pos - 1,
                    kind: DecodeErrorKind::NonZeroPadding,
                });
            }
            CompressedPayload::SignScale {
                dim: dim as usize,
                boundaries,
                scales,
                signs,
            }
        }
    };
    if r.pos != bytes.len() {
        return Err(r.err(DecodeErrorKind::TrailingBytes(bytes.len() - r.pos)));
    }
    Ok(payload)
}

/// The payload a receiver sees after one encode/decode trip: every value
/// rounded to `f32`.
pub fn round_trip(p: &CompressedPayload) -> CompressedPayload {
    let round = |v: &f64| to_wire(*v) as f64;
    match p {
        CompressedPayload::Dense { values } => CompressedPayload::Dense {
            values: values.iter().map(round).collect(),
        },
        CompressedPayload::Sparse {
            dim,
            indices,
            values,
        } => CompressedPayload::Sparse {
            dim: *dim,
            indices: indices.clone(),
            values: values.iter().map(round).collect(),
        },
        CompressedPayload::SignScale {
            dim,
            boundaries,
            scales,
            signs,
        } => CompressedPayload::SignScale {
            dim: *dim,
            boundaries: boundaries.clone(),
            scales: scales.iter().map(round).collect(),
            signs: signs.clone(),
        },
    }
}
