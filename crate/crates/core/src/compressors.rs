//! Contraction operators: top-k, random-k, SignSGD and blockwise SignSGD.
//!
//! An operator `C` is a δ-contraction when `E‖x − C(x)‖² ≤ (1 − δ)‖x‖²`.
//! Payloads live in memory at full precision; rounding to 32-bit floats only
//! happens on the wire (see [`crate::harness::codec`]).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sq_dist, sq_norm, ModelVector};

/// Nominal δ used for sign operators when none is configured.
pub const DEFAULT_SIGN_DELTA: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompressorSpec {
    Identity,
    TopK { k: usize },
    RandomK { k: usize },
    Sign { delta: f64 },
    BlockwiseSign { blocks: usize, delta: f64 },
}

impl CompressorSpec {
    /// Checks the operator's parameters against a vector dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        match *self {
            CompressorSpec::Identity => Ok(()),
            CompressorSpec::TopK { k } | CompressorSpec::RandomK { k } => check_k(k, dim),
            CompressorSpec::Sign { delta } => check_delta(delta),
            CompressorSpec::BlockwiseSign { blocks, delta } => {
                check_blocks(blocks, dim)?;
                check_delta(delta)
            }
        }
    }

    /// The δ the operator is configured with. For top-k this is the `k/d`
    /// lower bound; for sign operators it is an estimate.
    pub fn nominal_delta(&self, dim: usize) -> f64 {
        match *self {
            CompressorSpec::Identity => 1.0,
            CompressorSpec::TopK { k } | CompressorSpec::RandomK { k } => k as f64 / dim as f64,
            CompressorSpec::Sign { delta } | CompressorSpec::BlockwiseSign { delta, .. } => delta,
        }
    }

    /// Default averaging period `⌊1/δ⌋` (at least 1).
    pub fn default_period(&self, dim: usize) -> usize {
        ((1.0 / self.nominal_delta(dim)).floor() as usize).max(1)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CompressorSpec::Identity)
    }

    pub fn compress<R: Rng + ?Sized>(&self, x: &ModelVector, rng: &mut R) -> Result<CompressedPayload> {
        match *self {
            CompressorSpec::Identity => Ok(CompressedPayload::Dense {
                values: x.as_slice().to_vec(),
            }),
            CompressorSpec::TopK { k } => compress_topk(x, k),
            CompressorSpec::RandomK { k } => compress_randk(x, k, rng),
            CompressorSpec::Sign { .. } => Ok(compress_sign(x)),
            CompressorSpec::BlockwiseSign { blocks, .. } => compress_blockwise_sign(x, blocks),
        }
    }
}

fn check_k(k: usize, dim: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::invalid("k", format!("{k} not in [1, {dim}]")));
    }
    Ok(())
}

fn check_blocks(blocks: usize, dim: usize) -> Result<()> {
    if blocks == 0 || blocks > dim {
        return Err(Error::invalid(
            "num_blocks",
            format!("{blocks} not in [1, {dim}]"),
        ));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", format!("{delta} not in (0, 1]")));
    }
    Ok(())
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CompressorSpec::Identity => write!(f, "identity"),
            CompressorSpec::TopK { k } => write!(f, "top-k:{k}"),
            CompressorSpec::RandomK { k } => write!(f, "random-k:{k}"),
            CompressorSpec::Sign { delta } => write!(f, "sign:{delta}"),
            CompressorSpec::BlockwiseSign { blocks, delta } => {
                write!(f, "blockwise-sign:{blocks}:{delta}")
            }
        }
    }
}

impl FromStr for CompressorSpec {
    type Err = Error;

    /// Parses `identity`, `top-k:<k>`, `random-k:<k>`, `sign[:<delta>]` or
    /// `blockwise-sign:<blocks>[:<delta>]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let kind = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = |reason: &str| Error::invalid("compressor", format!("`{s}`: {reason}"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad("expected an integer"));
        let real = |v: &str| v.parse::<f64>().map_err(|_| bad("expected a number"));
        let spec = match (kind, args.as_slice()) {
            ("identity", []) => CompressorSpec::Identity,
            ("top-k", [k]) => CompressorSpec::TopK { k: int(k)? },
            ("random-k", [k]) => CompressorSpec::RandomK { k: int(k)? },
            ("sign", []) => CompressorSpec::Sign {
                delta: DEFAULT_SIGN_DELTA,
            },
            ("sign", [d]) => CompressorSpec::Sign { delta: real(d)? },
            ("blockwise-sign", [b]) => CompressorSpec::BlockwiseSign {
                blocks: int(b)?,
                delta: DEFAULT_SIGN_DELTA,
            },
            ("blockwise-sign", [b, d]) => CompressorSpec::BlockwiseSign {
                blocks: int(b)?,
                delta: real(d)?,
            },
            _ => return Err(bad("unknown operator or wrong argument count")),
        };
        if let CompressorSpec::Sign { delta } | CompressorSpec::BlockwiseSign { delta, .. } = spec {
            check_delta(delta)?;
        }
        Ok(spec)
    }
}

impl Serialize for CompressorSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CompressorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// In-memory compressed representation of a vector.
#[derive(Clone, Debug, PartialEq)]
pub enum CompressedPayload {
    Dense {
        values: Vec<f64>,
    },
    /// Strictly ascending indices; explicit zero values are allowed.
    Sparse {
        dim: usize,
        indices: Vec<u32>,
        values: Vec<f64>,
    },
    /// Contiguous blocks starting at `boundaries[b]`, each with one scale.
    /// Bit `j` of `signs` (MSB-first) is set when coordinate `j` is negative.
    SignScale {
        dim: usize,
        boundaries: Vec<u32>,
        scales: Vec<f64>,
        signs: Vec<u8>,
    },
}

impl CompressedPayload {
    pub fn dim(&self) -> usize {
        match self {
            CompressedPayload::Dense { values } => values.len(),
            CompressedPayload::Sparse { dim, .. } | CompressedPayload::SignScale { dim, .. } => *dim,
        }
    }

    /// Checks the structural invariants of the payload.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InconsistentPayload(msg));
        match self {
            CompressedPayload::Dense { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite dense value".into());
                }
            }
            CompressedPayload::Sparse {
                dim,
                indices,
                values,
            } => {
                if indices.len() != values.len() {
                    return bad(format!(
                        "{} indices but {} values",
                        indices.len(),
                        values.len()
                    ));
                }
                if indices.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("sparse indices not strictly ascending".into());
                }
                if let Some(&last) = indices.last() {
                    if last as usize >= *dim {
                        return bad(format!("index {last} out of range for dimension {dim}"));
                    }
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite sparse value".into());
                }
            }
            CompressedPayload::SignScale {
                dim,
                boundaries,
                scales,
                signs,
            } => {
                if boundaries.is_empty() || boundaries[0] != 0 {
                    return bad("first block must start at 0".into());
                }
                if boundaries.len() != scales.len() {
                    return bad("one scale per block required".into());
                }
                if boundaries.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("block boundaries not strictly ascending".into());
                }
                if *boundaries.last().unwrap() as usize >= *dim {
                    return bad("empty trailing block".into());
                }
                if signs.len() != dim.div_ceil(8) {
                    return bad(format!(
                        "{} sign bytes for dimension {dim}",
                        signs.len()
                    ));
                }
                if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return bad("scales must be finite and non-negative".into());
                }
            }
        }
        Ok(())
    }
}

/// Keeps the `k` largest-magnitude coordinates, lower index first on ties.
pub fn compress_topk(x: &ModelVector, k: usize) -> Result<CompressedPayload> {
    let dim = x.dim();
    check_k(k, dim)?;
    let v = x.as_slice();
    let mut order: Vec<u32> = (0..dim as u32).collect();
    let by_magnitude = |a: &u32, b: &u32| {
        v[*b as usize]
            .abs()
            .total_cmp(&v[*a as usize].abs())
            .then(a.cmp(b))
    };
    if k < dim {
        order.select_nth_unstable_by(k - 1, by_magnitude);
    }
    order.truncate(k);
    order.sort_unstable();
    let values = order.iter().map(|&i| v[i as usize]).collect();
    Ok(CompressedPayload::Sparse {
        dim,
        indices: order,
        values,
    })
}

/// Keeps a uniformly random `k`-subset of coordinates, without rescaling.
pub fn compress_randk<R: Rng + ?Sized>(x: &ModelVector, k: usize, rng: &mut R) -> Result<CompressedPayload> {
    let dim = x.dim();
    check_k(k, dim)?;
    let mut indices: Vec<u32> = rand::seq::index::sample(rng, dim, k)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    indices.sort_unstable();
    let values = indices.iter().map(|&i| x[i as usize]).collect();
    Ok(CompressedPayload::Sparse {
        dim,
        indices,
        values,
    })
}

/// `‖x‖₁/d · sign(x)` with `sign(0) = +1`.
pub fn compress_sign(x: &ModelVector) -> CompressedPayload {
    sign_scale(x, vec![0])
}

/// SignSGD applied independently to `num_blocks` contiguous blocks whose
/// sizes differ by at most one.
pub fn compress_blockwise_sign(x: &ModelVector, num_blocks: usize) -> Result<CompressedPayload> {
    check_blocks(num_blocks, x.dim())?;
    Ok(sign_scale(x, block_starts(x.dim(), num_blocks)))
}

/// Start offsets of `num_blocks` contiguous blocks covering `[0, dim)`; the
/// first `dim % num_blocks` blocks get the extra element.
pub fn block_starts(dim: usize, num_blocks: usize) -> Vec<u32> {
    let base = dim / num_blocks;
    let extra = dim % num_blocks;
    let mut starts = Vec::with_capacity(num_blocks);
    let mut at = 0;
    for b in 0..num_blocks {
        starts.push(at as u32);
        at += base + usize::from(b < extra);
    }
    starts
}

fn sign_scale(x: &ModelVector, boundaries: Vec<u32>) -> CompressedPayload {
    let dim = x.dim();
    let v = x.as_slice();
    let mut signs = vec![0u8; dim.div_ceil(8)];
    for (j, &value) in v.iter().enumerate() {
        if value < 0.0 {
            signs[j / 8] |= 0x80 >> (j % 8);
        }
    }
    // Running mean, so a block of equal magnitudes reproduces them exactly.
    let scales = block_ranges(&boundaries, dim)
        .map(|(lo, hi)| {
            v[lo..hi]
                .iter()
                .enumerate()
                .fold(0.0, |m, (n, a)| m + (a.abs() - m) / (n + 1) as f64)
        })
        .collect();
    CompressedPayload::SignScale {
        dim,
        boundaries,
        scales,
        signs,
    }
}

fn block_ranges(boundaries: &[u32], dim: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    boundaries.iter().enumerate().map(move |(b, &lo)| {
        let hi = boundaries.get(b + 1).map_or(dim, |&h| h as usize);
        (lo as usize, hi)
    })
}

/// Expands a payload back to the dense vector it denotes.
pub fn decompress(p: &CompressedPayload, dim: usize) -> Result<ModelVector> {
    if p.dim() != dim {
        return Err(Error::InconsistentPayload(format!(
            "payload dimension {} does not match {dim}",
            p.dim()
        )));
    }
    p.validate()?;
    let out = match p {
        CompressedPayload::Dense { values } => values.clone(),
        CompressedPayload::Sparse {
            indices, values, ..
        } => {
            let mut out = vec![0.0; dim];
            for (&i, &v) in indices.iter().zip(values) {
                out[i as usize] = v;
            }
            out
        }
        CompressedPayload::SignScale {
            boundaries,
            scales,
            signs,
            ..
        } => {
            let mut out = vec![0.0; dim];
            for ((lo, hi), &scale) in block_ranges(boundaries, dim).zip(scales) {
                for (j, slot) in out.iter_mut().enumerate().take(hi).skip(lo) {
                    let negative = signs[j / 8] & (0x80 >> (j % 8)) != 0;
                    *slot = if negative { -scale } else { scale };
                }
            }
            out
        }
    };
    ModelVector::new(out)
}

/// Empirical δ: `1 − mean ‖x − C(x)‖²/‖x‖²` over standard-Gaussian draws.
/// Zero-norm draws are skipped.
pub fn measure_delta<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    dim: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    spec.validate(dim)?;
    if samples == 0 {
        return Err(Error::invalid("samples", "must be at least 1"));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for _ in 0..samples {
        let x = ModelVector::new((0..dim).map(|_| rng.sample(StandardNormal)).collect())?;
        let norm = sq_norm(&x);
        if norm == 0.0 {
            continue;
        }
        let cx = decompress(&spec.compress(&x, rng)?, dim)?;
        total += sq_dist(&x, &cx)? / norm;
        counted += 1;
    }
    if counted == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - total / counted as f64)
}
