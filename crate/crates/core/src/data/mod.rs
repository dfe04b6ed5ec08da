//! Datasets: adjacency, normalization, chronological splits and the
//! periodic sample layout fed to the forecaster.

mod io;
mod synth;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SpatioTemporalTensor;
use crate::tcorr::{PeriodSet, PeriodSpec};

pub use io::{
    load_dataset, read_edges, read_tensor, read_tensor_csv, save_dataset, write_edges, write_tensor, TENSOR_MAGIC,
    TENSOR_VERSION,
};
pub use synth::{generate_synthetic, SynthConfig};

/// Per-attribute min-max parameters mapping readings onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormParams {
    /// Fits on the timestamps of `range` only.
    pub fn fit(x: &SpatioTemporalTensor, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > x.timestamps() {
            return Err(Error::OutOfRange(format!(
                "fit range {range:?} invalid for {} timestamps",
                x.timestamps()
            )));
        }
        let c = x.attributes();
        let mut min = vec![f64::INFINITY; c];
        let mut max = vec![f64::NEG_INFINITY; c];
        for t in range {
            for i in 0..x.sensors() {
                for ch in 0..c {
                    let v = x.get(t, i, ch);
                    min[ch] = min[ch].min(v);
                    max[ch] = max[ch].max(v);
                }
            }
        }
        if let Some(ch) = (0..c).find(|&ch| !(min[ch] < max[ch])) {
            return Err(Error::DegenerateAttribute(ch));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn normalize_value(&self, v: f64, attr: usize) -> f64 {
        2.0 * (v - self.min[attr]) / (self.max[attr] - self.min[attr]) - 1.0
    }

    #[inline]
    pub fn denormalize_value(&self, v: f64, attr: usize) -> f64 {
        (v + 1.0) * 0.5 * (self.max[attr] - self.min[attr]) + self.min[attr]
    }

    pub fn normalize(&self, x: &SpatioTemporalTensor) -> SpatioTemporalTensor {
        x.map_attr(|v, ch| self.normalize_value(v, ch))
    }

    pub fn denormalize(&self, x: &SpatioTemporalTensor) -> SpatioTemporalTensor {
        x.map_attr(|v, ch| self.denormalize_value(v, ch))
    }

    /// Width of the original range of one attribute.
    pub fn span(&self, attr: usize) -> f64 {
        self.max[attr] - self.min[attr]
    }
}

/// Sensor readings plus the road graph.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficDataset {
    pub name: String,
    pub tensor: SpatioTemporalTensor,
    /// Row-major `N x N`, nonnegative.
    pub adjacency: Vec<f64>,
    pub sensor_ids: Vec<String>,
}

impl TrafficDataset {
    pub fn new(
        name: impl Into<String>,
        tensor: SpatioTemporalTensor,
        adjacency: Vec<f64>,
        sensor_ids: Vec<String>,
    ) -> Result<Self> {
        let n = tensor.sensors();
        if adjacency.len() != n * n {
            return Err(Error::dim(format!(
                "adjacency has {} entries, expected {}",
                adjacency.len(),
                n * n
            )));
        }
        if sensor_ids.len() != n {
            return Err(Error::dim(format!(
                "{} sensor ids for {n} sensors",
                sensor_ids.len()
            )));
        }
        if adjacency.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::Domain("adjacency entries must be finite and nonnegative".into()));
        }
        Ok(Self {
            name: name.into(),
            tensor,
            adjacency,
            sensor_ids,
        })
    }

    pub fn sensors(&self) -> usize {
        self.tensor.sensors()
    }
}

/// Contiguous chronological train/validation/test ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.6, 0.2, 0.2];

/// Splits `t` timestamps by `ratios`, in order.
pub fn split(t: usize, ratios: [f64; 3]) -> Result<SplitRanges> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    let a = ((ratios[0] * t as f64) + 1e-9).floor() as usize;
    let b = (((ratios[0] + ratios[1]) * t as f64) + 1e-9).floor() as usize;
    let out = SplitRanges {
        train: 0..a,
        val: a..b,
        test: b..t,
    };
    if out.train.is_empty() || out.val.is_empty() || out.test.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "{t} timestamps cannot be split {ratios:?} into non-empty parts"
        )));
    }
    Ok(out)
}

/// Encoder/decoder window layout shared by data assembly and the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLayout {
    pub periods: PeriodSet,
    pub spec: PeriodSpec,
    pub horizon: usize,
    pub target_attr: usize,
}

impl SampleLayout {
    pub fn encoder_len(&self) -> usize {
        self.periods.len() * self.spec.tau
    }

    /// Lookback of the deepest selected period.
    pub fn deepest_offset(&self) -> usize {
        self.periods
            .encoder_order()
            .iter()
            .map(|&p| self.spec.offset(p))
            .max()
            .unwrap_or(self.spec.hourly_offset)
    }

    /// Anchors whose target `[t + 1, t + horizon]` lies inside `range` and
    /// whose deepest lookback starts at or after timestamp 0.
    pub fn anchors(&self, range: Range<usize>) -> Range<usize> {
        let lo = range.start.saturating_sub(1).max(self.deepest_offset() - 1);
        let hi = range.end.saturating_sub(self.horizon);
        lo..hi.max(lo)
    }
}

/// One training/evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub anchor: usize,
    /// `T_hdw x N x C`: weekly, daily, hourly windows in that order.
    pub encoder_input: SpatioTemporalTensor,
    /// `L x N x C`: timestamps `t .. t + L - 1`.
    pub decoder_input: SpatioTemporalTensor,
    /// `L x N x 1`: target attribute at `t + 1 .. t + L`.
    pub target: SpatioTemporalTensor,
}

/// Builds the sample for anchor `t`.
pub fn assemble_sample(x: &SpatioTemporalTensor, t: usize, layout: &SampleLayout) -> Result<Sample> {
    let spec = &layout.spec;
    if t + layout.horizon >= x.timestamps() {
        return Err(Error::OutOfRange(format!("anchor {t} has no full target window")));
    }
    let (n, c) = (x.sensors(), x.attributes());
    if layout.target_attr >= c {
        return Err(Error::config(format!(
            "target attribute {} out of {c} attributes",
            layout.target_attr
        )));
    }
    let mut enc = Vec::with_capacity(layout.encoder_len() * n * c);
    for p in layout.periods.encoder_order() {
        let start = spec.window_start(t, p).ok_or_else(|| {
            Error::OutOfRange(format!("anchor {t} lacks {p} history"))
        })?;
        let w = x.slice_time(start, spec.tau)?;
        enc.extend_from_slice(w.data());
    }
    let interval = x.interval_minutes();
    let encoder_input = SpatioTemporalTensor::new(layout.encoder_len(), n, c, interval, enc)?;
    let decoder_input = x.slice_time(t, layout.horizon)?;
    let target = SpatioTemporalTensor::from_fn(layout.horizon, n, 1, interval, |k, i, _| {
        x.get(t + 1 + k, i, layout.target_attr)
    })?;
    Ok(Sample {
        anchor: t,
        encoder_input,
        decoder_input,
        target,
    })
}

/// All samples whose targets fall inside `range`.
pub fn assemble_samples(
    x: &SpatioTemporalTensor,
    range: Range<usize>,
    layout: &SampleLayout,
) -> Result<Vec<Sample>> {
    if range.end > x.timestamps() {
        return Err(Error::OutOfRange(format!(
            "range {range:?} exceeds {} timestamps",
            x.timestamps()
        )));
    }
    let samples: Vec<Sample> = layout
        .anchors(range.clone())
        .map(|t| assemble_sample(x, t, layout))
        .collect::<Result<_>>()?;
    if samples.is_empty() {
        return Err(Error::InsufficientSamples(format!(
            "range {range:?} holds no sample with lookback {} and horizon {}",
            layout.deepest_offset(),
            layout.horizon
        )));
    }
    Ok(samples)
}

/// Ring graph: sensor `i` linked to `i + 1 mod n`, unit weights, undirected.
pub fn ring_adjacency(n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    if n > 1 {
        for i in 0..n {
            let j = (i + 1) % n;
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indexed(t: usize, n: usize, c: usize) -> SpatioTemporalTensor {
        SpatioTemporalTensor::from_fn(t, n, c, 5, |ti, i, ch| (ti * 100 + i * 10 + ch) as f64).unwrap()
    }

    #[test]
    fn normalization_maps_extremes() {
        let x = indexed(10, 2, 1);
        let p = NormParams::fit(&x, 0..10).unwrap();
        assert_eq!(p.normalize_value(0.0, 0), -1.0);
        assert_eq!(p.normalize_value(910.0, 0), 1.0);
        assert_eq!(p.normalize_value(455.0, 0), 0.0);
        let back = p.denormalize(&p.normalize(&x));
        for (a, b) in back.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_uses_training_range_only() {
        let x = indexed(10, 1, 1);
        let p = NormParams::fit(&x, 0..5).unwrap();
        assert_eq!((p.min[0], p.max[0]), (0.0, 400.0));
        let flat = SpatioTemporalTensor::from_fn(4, 1, 1, 5, |_, _, _| 3.0).unwrap();
        assert!(matches!(NormParams::fit(&flat, 0..4), Err(Error::DegenerateAttribute(0))));
    }

    #[test]
    fn split_six_two_two() {
        let s = split(100, DEFAULT_SPLIT).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..60, 60..80, 80..100));
        assert!(split(2, DEFAULT_SPLIT).is_err());
        assert!(split(100, [0.5, 0.2, 0.2]).is_err());
    }

    #[test]
    fn layout_lengths() {
        let spec = PeriodSpec::default();
        let h = SampleLayout { periods: PeriodSet::HOURLY, spec, horizon: 12, target_attr: 0 };
        assert_eq!(h.encoder_len(), 12);
        let all = SampleLayout { periods: PeriodSet::ALL, ..h };
        assert_eq!(all.encoder_len(), 36);
        assert_eq!(all.deepest_offset(), 2016);
    }

    #[test]
    fn encoder_blocks_are_weekly_daily_hourly() {
        let spec = PeriodSpec::new(2, 2, 4, 8).unwrap();
        let layout = SampleLayout { periods: PeriodSet::ALL, spec, horizon: 3, target_attr: 0 };
        let x = SpatioTemporalTensor::from_fn(20, 1, 1, 5, |t, _, _| t as f64).unwrap();
        let s = assemble_sample(&x, 10, &layout).unwrap();
        assert_eq!(s.encoder_input.column(0, 0), vec![3.0, 4.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(s.decoder_input.column(0, 0), vec![10.0, 11.0, 12.0]);
        assert_eq!(s.target.column(0, 0), vec![11.0, 12.0, 13.0]);
    }

    #[test]
    fn csv_sized_dataset_checks() {
        let x = indexed(4, 2, 1);
        assert!(TrafficDataset::new("d", x.clone(), vec![0.0; 4], vec!["a".into(), "b".into()]).is_ok());
        assert!(TrafficDataset::new("d", x.clone(), vec![0.0; 3], vec!["a".into(), "b".into()]).is_err());
        assert!(TrafficDataset::new("d", x, vec![-1.0, 0.0, 0.0, 0.0], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn ring_is_symmetric() {
        let a = ring_adjacency(4);
        assert_eq!(a.iter().filter(|&&v| v > 0.0).count(), 8);
        assert_eq!(ring_adjacency(1), vec![0.0]);
    }
}
