//! Acquisition, moving-average filtering and evaluation statistics.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel order of every frame.
pub const CH_ENDOFORCE: usize = 0;
pub const CH_PLATE: usize = 1;
pub const CH_END: usize = 2;
pub const CHANNELS: usize = 3;

/// A multi-channel force source sampled once per tick: the simulated testbed
/// or a hardware bridge.
pub trait CellSource {
    fn channel_count(&self) -> usize;

    /// Fills `out` (of length `channel_count()`) with one reading per channel.
    fn read_into(&mut self, out: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub sequence: u64,
    pub channel_values: Vec<f64>,
}

/// Fixed-rate frame producer. Frame `k` is stamped `t = k / rate_hz`.
#[derive(Debug, Clone)]
pub struct Sampler {
    rate_hz: f64,
    next_seq: u64,
    channels: Option<usize>,
}

impl Sampler {
    pub fn new(rate_hz: f64) -> Self {
        Self {
            rate_hz,
            next_seq: 0,
            channels: None,
        }
    }

    pub fn sample<S: CellSource + ?Sized>(&mut self, source: &mut S) -> Result<Frame> {
        let n = source.channel_count();
        match self.channels {
            Some(fixed) if fixed != n => {
                return Err(Error::Acquisition {
                    channel: fixed.min(n),
                    reason: format!("channel count changed from {fixed} to {n} mid-session"),
                })
            }
            _ => self.channels = Some(n),
        }
        let mut values = vec![0.0; n];
        source.read_into(&mut values)?;
        if let Some(ch) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Acquisition {
                channel: ch,
                reason: format!("non-finite reading {}", values[ch]),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(Frame {
            t: seq as f64 / self.rate_hz,
            sequence: seq,
            channel_values: values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub window: usize,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { window: 25 }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window >= 1 {
            Ok(())
        } else {
            Err(Error::Config("dsp.window must be >= 1".into()))
        }
    }
}

/// Causal trailing-window mean with a partial window at the stream head.
///
/// Keeps a running sum and rebuilds it from the buffer once per window length
/// so rounding error does not accumulate over long streams.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    window: usize,
    buf: VecDeque<f64>,
    sum: f64,
    since_resync: usize,
}

impl MovingAverage {
    pub fn new(spec: FilterSpec) -> Self {
        let window = spec.window.max(1);
        Self {
            window,
            buf: VecDeque::with_capacity(window),
            sum: 0.0,
            since_resync: 0,
        }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.window {
            let old = self.buf.pop_front().unwrap_or(0.0);
            self.sum -= old;
        }
        self.buf.push_back(x);
        self.sum += x;
        self.since_resync += 1;
        if self.since_resync >= self.window {
            self.sum = self.buf.iter().sum();
            self.since_resync = 0;
        }
        self.sum / self.buf.len() as f64
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.window
    }
}

pub fn moving_average(input: &[f64], spec: FilterSpec) -> Vec<f64> {
    let mut filter = MovingAverage::new(spec);
    input.iter().map(|&x| filter.push(x)).collect()
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "rmse needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::domain("rmse of empty series"));
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / a.len() as f64).sqrt())
}

/// Population standard deviation (divisor `n`).
pub fn stddev(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::domain(format!(
            "stddev needs at least 2 samples, got {}",
            series.len()
        )));
    }
    // shifted by the first sample: exact zero for constant series
    let shift = series[0];
    let n = series.len() as f64;
    let mean = series.iter().map(|x| x - shift).sum::<f64>() / n;
    let var = series
        .iter()
        .map(|x| (x - shift - mean) * (x - shift - mean))
        .sum::<f64>()
        / n;
    Ok(var.sqrt())
}

pub fn sum_channels(frame: &Frame, indices: &[usize]) -> Result<f64> {
    indices.iter().try_fold(0.0, |acc, &i| {
        frame.channel_values.get(i).map(|v| acc + v).ok_or_else(|| {
            Error::domain(format!(
                "channel {i} out of range for a {}-channel frame",
                frame.channel_values.len()
            ))
        })
    })
}

/// Bounded hand-off between the control loop and a telemetry consumer.
///
/// `push` never blocks: when full the oldest item is dropped and counted.
#[derive(Debug)]
pub struct DropOldestQueue<T> {
    inner: Mutex<QueueInner<T>>,
    capacity: usize,
}

#[derive(Debug)]
struct QueueInner<T> {
    items: VecDeque<T>,
    dropped: u64,
}

impl<T> DropOldestQueue<T> {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            inner: Mutex::new(QueueInner {
                items: VecDeque::with_capacity(capacity),
                dropped: 0,
            }),
            capacity,
        }
    }

    pub fn push(&self, item: T) {
        let mut q = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if q.items.len() == self.capacity {
            q.items.pop_front();
            q.dropped += 1;
        }
        q.items.push_back(item);
    }

    pub fn drain(&self) -> Vec<T> {
        let mut q = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        q.items.drain(..).collect()
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).dropped
    }
}
