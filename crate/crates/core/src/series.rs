//! Dense `T x N x C` sensor readings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Readings of `n` sensors with `c` attributes over `t` timestamps, stored
/// timestamp-major: index `(t * n + sensor) * c + attr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalTensor {
    t: usize,
    n: usize,
    c: usize,
    interval_minutes: u32,
    data: Vec<f64>,
}

impl SpatioTemporalTensor {
    pub fn new(t: usize, n: usize, c: usize, interval_minutes: u32, data: Vec<f64>) -> Result<Self> {
        if t == 0 || n == 0 || c == 0 {
            return Err(Error::dim(format!("empty tensor {t}x{n}x{c}")));
        }
        if interval_minutes == 0 {
            return Err(Error::config("interval_minutes must be positive"));
        }
        if data.len() != t * n * c {
            return Err(Error::dim(format!(
                "expected {} values for {t}x{n}x{c}, got {}",
                t * n * c,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite reading at flat index {pos}")));
        }
        Ok(Self {
            t,
            n,
            c,
            interval_minutes,
            data,
        })
    }

    /// Tensor filled by evaluating `f(t, sensor, attr)`.
    pub fn from_fn(
        t: usize,
        n: usize,
        c: usize,
        interval_minutes: u32,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(t * n * c);
        for ti in 0..t {
            for i in 0..n {
                for ch in 0..c {
                    data.push(f(ti, i, ch));
                }
            }
        }
        Self::new(t, n, c, interval_minutes, data)
    }

    pub fn timestamps(&self) -> usize {
        self.t
    }

    pub fn sensors(&self) -> usize {
        self.n
    }

    pub fn attributes(&self) -> usize {
        self.c
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, t: usize, sensor: usize, attr: usize) -> usize {
        (t * self.n + sensor) * self.c + attr
    }

    #[inline]
    pub fn get(&self, t: usize, sensor: usize, attr: usize) -> f64 {
        self.data[self.index(t, sensor, attr)]
    }

    /// Values of one sensor/attribute over `[start, start + len)`.
    pub fn series(&self, sensor: usize, attr: usize, start: usize, len: usize) -> Vec<f64> {
        (start..start + len).map(|t| self.get(t, sensor, attr)).collect()
    }

    /// Full-length series of one sensor/attribute.
    pub fn column(&self, sensor: usize, attr: usize) -> Vec<f64> {
        self.series(sensor, attr, 0, self.t)
    }

    /// Copy of the timestamps `[start, start + len)`.
    pub fn slice_time(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.t {
            return Err(Error::OutOfRange(format!(
                "time slice [{start}, {}) outside [0, {})",
                start + len,
                self.t
            )));
        }
        let row = self.n * self.c;
        Ok(Self {
            t: len,
            n: self.n,
            c: self.c,
            interval_minutes: self.interval_minutes,
            data: self.data[start * row..(start + len) * row].to_vec(),
        })
    }

    /// Same tensor with every value passed through `f(value, attr)`.
    pub fn map_attr(&self, mut f: impl FnMut(f64, usize) -> f64) -> Self {
        let c = self.c;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(k, &v)| f(v, k % c))
            .collect();
        Self { data, ..self.clone() }
    }
}
