//! In-process worker/server channel with per-direction byte accounting.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::codec;
use crate::compressors::{decompress, CompressedPayload};
use crate::error::{Error, Result};
use crate::numerics::ModelVector;

/// How values travel through the channel. Byte accounting is the same in
/// both modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    /// Receivers see the sender's `f64` values unchanged.
    #[default]
    Lossless,
    /// Every frame is encoded and decoded, rounding values to `f32`.
    Wire,
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lossless" => Ok(Fidelity::Lossless),
            "wire" => Ok(Fidelity::Wire),
            other => Err(Error::invalid(
                "fidelity",
                format!("`{other}` is not one of lossless, wire"),
            )),
        }
    }
}

/// Which counter a transfer is charged to. Model parameters exchanged on
/// synchronization rounds are tracked apart from gradient traffic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
    ModelAverage,
}

/// Bytes exchanged during one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundBytes {
    pub uplink: u64,
    pub downlink: u64,
    pub model_average: u64,
    pub frames: u64,
}

impl RoundBytes {
    pub fn total(&self) -> u64 {
        self.uplink + self.downlink + self.model_average
    }
}

/// A lossless rendezvous channel shared by all simulated workers and the
/// server. Safe to call from concurrent worker threads.
#[derive(Debug, Default)]
pub struct Fabric {
    fidelity: Fidelity,
    uplink: AtomicU64,
    downlink: AtomicU64,
    model_average: AtomicU64,
    frames: AtomicU64,
    totals: std::sync::Mutex<RoundBytes>,
}

impl Fabric {
    pub fn new(fidelity: Fidelity) -> Self {
        Self {
            fidelity,
            ..Self::default()
        }
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    /// Delivers one frame to one receiver and returns the dense vector the
    /// receiver reconstructs.
    pub fn channel_send(&self, direction: Direction, frame: &CompressedPayload) -> Result<ModelVector> {
        self.deliver(direction, frame, 1)
    }

    /// Delivers the same frame to `receivers` peers; each copy is charged.
    pub fn broadcast(
        &self,
        direction: Direction,
        frame: &CompressedPayload,
        receivers: usize,
    ) -> Result<ModelVector> {
        self.deliver(direction, frame, receivers)
    }

    fn deliver(&self, direction: Direction, frame: &CompressedPayload, copies: usize) -> Result<ModelVector> {
        let dim = frame.dim();
        let (len, received) = match self.fidelity {
            Fidelity::Lossless => (codec::frame_len(frame), decompress(frame, dim)?),
            Fidelity::Wire => {
                let bytes = codec::encode(frame);
                let decoded = codec::decode(&bytes)?;
                (bytes.len(), decompress(&decoded, dim)?)
            }
        };
        let counter = match direction {
            Direction::Uplink => &self.uplink,
            Direction::Downlink => &self.downlink,
            Direction::ModelAverage => &self.model_average,
        };
        counter.fetch_add((len * copies) as u64, Ordering::Relaxed);
        self.frames.fetch_add(copies as u64, Ordering::Relaxed);
        Ok(received)
    }

    /// Closes the current round: returns its byte counts and resets them.
    pub fn end_round(&self) -> RoundBytes {
        let round = RoundBytes {
            uplink: self.uplink.swap(0, Ordering::Relaxed),
            downlink: self.downlink.swap(0, Ordering::Relaxed),
            model_average: self.model_average.swap(0, Ordering::Relaxed),
            frames: self.frames.swap(0, Ordering::Relaxed),
        };
        let mut totals = self.totals.lock().expect("fabric totals poisoned");
        totals.uplink += round.uplink;
        totals.downlink += round.downlink;
        totals.model_average += round.model_average;
        totals.frames += round.frames;
        round
    }

    /// Totals over all closed rounds.
    pub fn totals(&self) -> RoundBytes {
        *self.totals.lock().expect("fabric totals poisoned")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressors::compress_sign;

    fn dense(values: Vec<f64>) -> CompressedPayload {
        CompressedPayload::Dense { values }
    }

    #[test]
    fn counts_every_copy() {
        let fabric = Fabric::new(Fidelity::Lossless);
        let x = dense(vec![1.0, 2.0]);
        fabric.channel_send(Direction::Uplink, &x).unwrap();
        fabric.channel_send(Direction::Uplink, &x).unwrap();
        fabric.broadcast(Direction::Downlink, &x, 3).unwrap();
        fabric.broadcast(Direction::ModelAverage, &x, 2).unwrap();
        let r = fabric.end_round();
        assert_eq!(r, RoundBytes {
            uplink: 26,
            downlink: 39,
            model_average: 26,
            frames: 7
        });
        assert_eq!(fabric.end_round(), RoundBytes::default());
        assert_eq!(fabric.totals().total(), 91);
    }

    #[test]
    fn lossless_delivery_is_exact_and_wire_rounds() {
        let v = vec![0.1, 1.0 / 3.0];
        let lossless = Fabric::new(Fidelity::Lossless);
        let got = lossless.channel_send(Direction::Uplink, &dense(v.clone())).unwrap();
        assert_eq!(got.as_slice(), v.as_slice());

        let wire = Fabric::new(Fidelity::Wire);
        let got = wire.channel_send(Direction::Uplink, &dense(v.clone())).unwrap();
        for (a, b) in got.iter().zip(&v) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(lossless.end_round(), wire.end_round());
    }

    #[test]
    fn psgd_round_uplink_bytes() {
        let fabric = Fabric::new(Fidelity::Lossless);
        let g = dense(vec![0.5; 10_000]);
        for _ in 0..8 {
            fabric.channel_send(Direction::Uplink, &g).unwrap();
        }
        assert_eq!(fabric.end_round().uplink, 8 * (1 + 4 + 4 * 10_000));
    }

    #[test]
    fn concurrent_senders_are_all_counted() {
        let fabric = Fabric::new(Fidelity::Wire);
        let frame = compress_sign(&ModelVector::new(vec![1.0; 16]).unwrap());
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..100 {
                        fabric.channel_send(Direction::Uplink, &frame).unwrap();
                    }
                });
            }
        });
        let r = fabric.end_round();
        assert_eq!(r.uplink, 800 * codec::frame_len(&frame) as u64);
        assert_eq!(r.frames, 800);
    }
}
