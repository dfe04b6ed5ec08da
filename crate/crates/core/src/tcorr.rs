//! Temporal correlation of hourly/daily/weekly history with the prediction
//! window, and the period-selection rule built on it.

use std::fmt;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mic::{MicKernel, RankedSequence};
use crate::series::SpatioTemporalTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Hourly,
    Daily,
    Weekly,
}

impl Period {
    pub const ALL: [Period; 3] = [Period::Hourly, Period::Daily, Period::Weekly];

    pub fn name(self) -> &'static str {
        match self {
            Period::Hourly => "hourly",
            Period::Daily => "daily",
            Period::Weekly => "weekly",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Window length and the lookback offsets of each period, in timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSpec {
    pub tau: usize,
    pub hourly_offset: usize,
    pub daily_offset: usize,
    pub weekly_offset: usize,
}

impl PeriodSpec {
    pub fn new(tau: usize, hourly: usize, daily: usize, weekly: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::config("tau must be at least 1"));
        }
        if !(hourly <= daily && daily <= weekly) {
            return Err(Error::config(format!(
                "offsets must be ordered hourly <= daily <= weekly, got {hourly}, {daily}, {weekly}"
            )));
        }
        if hourly < tau {
            return Err(Error::config(format!(
                "hourly offset {hourly} shorter than window {tau} would overlap the target"
            )));
        }
        Ok(Self {
            tau,
            hourly_offset: hourly,
            daily_offset: daily,
            weekly_offset: weekly,
        })
    }

    /// Offsets of one hour, day and week at the given sampling interval.
    pub fn for_interval(interval_minutes: u32, tau: usize) -> Result<Self> {
        let per_hour = 60 / interval_minutes.max(1) as usize;
        if per_hour == 0 || 60 % interval_minutes as usize != 0 {
            return Err(Error::config(format!(
                "interval of {interval_minutes} minutes does not divide an hour"
            )));
        }
        Self::new(tau, per_hour, per_hour * 24, per_hour * 24 * 7)
    }

    pub fn offset(&self, period: Period) -> usize {
        match period {
            Period::Hourly => self.hourly_offset,
            Period::Daily => self.daily_offset,
            Period::Weekly => self.weekly_offset,
        }
    }

    /// First timestamp of the `period` window for anchor `t`, if it exists.
    pub fn window_start(&self, t: usize, period: Period) -> Option<usize> {
        (t + 1).checked_sub(self.offset(period))
    }

    /// Non-overlapping anchors inside `range`: each has full weekly history
    /// and a full target window within the range, stepping by `tau`.
    pub fn anchors(&self, range: Range<usize>) -> Vec<usize> {
        let first = range.start + self.weekly_offset - 1;
        let mut out = Vec::new();
        let mut t = first;
        while t + self.tau < range.end {
            out.push(t);
            t += self.tau;
        }
        out
    }
}

impl Default for PeriodSpec {
    fn default() -> Self {
        Self {
            tau: 12,
            hourly_offset: 12,
            daily_offset: 288,
            weekly_offset: 2016,
        }
    }
}

/// `tau`-long windows around one anchor.
#[derive(Debug, Clone)]
pub struct PeriodicWindows {
    pub hourly: Option<SpatioTemporalTensor>,
    pub daily: Option<SpatioTemporalTensor>,
    pub weekly: Option<SpatioTemporalTensor>,
    /// The prediction window `[t + 1, t + tau]`.
    pub target: SpatioTemporalTensor,
}

impl PeriodicWindows {
    pub fn get(&self, period: Period) -> Option<&SpatioTemporalTensor> {
        match period {
            Period::Hourly => self.hourly.as_ref(),
            Period::Daily => self.daily.as_ref(),
            Period::Weekly => self.weekly.as_ref(),
        }
    }
}

/// Slices the requested period windows and the target window for anchor `t`.
pub fn extract_periodic_windows(
    x: &SpatioTemporalTensor,
    t: usize,
    spec: &PeriodSpec,
    periods: &[Period],
) -> Result<PeriodicWindows> {
    if t + spec.tau >= x.timestamps() {
        return Err(Error::OutOfRange(format!(
            "target window [{}, {}] exceeds {} timestamps",
            t + 1,
            t + spec.tau,
            x.timestamps()
        )));
    }
    let mut out = PeriodicWindows {
        hourly: None,
        daily: None,
        weekly: None,
        target: x.slice_time(t + 1, spec.tau)?,
    };
    for &p in periods {
        let start = spec.window_start(t, p).ok_or_else(|| {
            Error::OutOfRange(format!(
                "{p} window for anchor {t} needs {} timestamps of history",
                spec.offset(p)
            ))
        })?;
        let w = Some(x.slice_time(start, spec.tau)?);
        match p {
            Period::Hourly => out.hourly = w,
            Period::Daily => out.daily = w,
            Period::Weekly => out.weekly = w,
        }
    }
    Ok(out)
}

/// Unweighted temporal correlation of one period: for every sensor and
/// attribute, the mean MIC between the period window and the target window
/// over `anchors`. Returned as `N x C`, index `sensor * C + attr`.
pub fn compute_tcorr(
    x: &SpatioTemporalTensor,
    spec: &PeriodSpec,
    period: Period,
    eta: f64,
    anchors: &[usize],
) -> Result<Vec<f64>> {
    if anchors.is_empty() {
        return Err(Error::EmptyAnchors(format!("{period} correlation")));
    }
    for &t in anchors {
        if spec.window_start(t, period).is_none() || t + spec.tau >= x.timestamps() {
            return Err(Error::OutOfRange(format!(
                "anchor {t} lacks {period} history or a full target window"
            )));
        }
    }
    let kernel = MicKernel::new(spec.tau, eta)?;
    let (n, c) = (x.sensors(), x.attributes());
    (0..n * c)
        .into_par_iter()
        .map(|cell| {
            let (i, ch) = (cell / c, cell % c);
            let mut total = 0.0;
            for &t in anchors {
                let start = spec.window_start(t, period).expect("checked above");
                let hist = RankedSequence::new(&x.series(i, ch, start, spec.tau))?;
                let target = RankedSequence::new(&x.series(i, ch, t + 1, spec.tau))?;
                total += kernel.score(&hist, &target)?.value;
            }
            Ok(total / anchors.len() as f64)
        })
        .collect()
}

/// Per-period confidence weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TCorrWeights {
    pub hourly: f64,
    pub daily: f64,
    pub weekly: f64,
}

impl Default for TCorrWeights {
    fn default() -> Self {
        Self {
            hourly: 0.95,
            daily: 0.95,
            weekly: 0.85,
        }
    }
}

impl TCorrWeights {
    pub fn get(&self, period: Period) -> f64 {
        match period {
            Period::Hourly => self.hourly,
            Period::Daily => self.daily,
            Period::Weekly => self.weekly,
        }
    }
}

pub fn weighted_tcorr(raw: &[f64], period: Period, weights: &TCorrWeights) -> Vec<f64> {
    let w = weights.get(period);
    raw.iter().map(|v| w * v).collect()
}

/// Gaps between the per-attribute period means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// daily minus hourly
    pub hd: f64,
    /// weekly minus hourly
    pub hw: f64,
    /// weekly minus daily
    pub dw: f64,
}

impl Deltas {
    pub fn from_means(hourly: f64, daily: f64, weekly: f64) -> Self {
        Self {
            hd: daily - hourly,
            hw: weekly - hourly,
            dw: weekly - daily,
        }
    }
}

/// Selected periods. Hourly data is always part of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<Period>", try_from = "Vec<Period>")]
pub struct PeriodSet {
    pub daily: bool,
    pub weekly: bool,
}

impl PeriodSet {
    pub const HOURLY: PeriodSet = PeriodSet {
        daily: false,
        weekly: false,
    };
    pub const ALL: PeriodSet = PeriodSet {
        daily: true,
        weekly: true,
    };

    pub fn contains(&self, p: Period) -> bool {
        match p {
            Period::Hourly => true,
            Period::Daily => self.daily,
            Period::Weekly => self.weekly,
        }
    }

    /// Periods in encoder order: weekly, daily, hourly.
    pub fn encoder_order(&self) -> Vec<Period> {
        let mut v = Vec::with_capacity(3);
        if self.weekly {
            v.push(Period::Weekly);
        }
        if self.daily {
            v.push(Period::Daily);
        }
        v.push(Period::Hourly);
        v
    }

    pub fn len(&self) -> usize {
        1 + self.daily as usize + self.weekly as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl From<PeriodSet> for Vec<Period> {
    fn from(s: PeriodSet) -> Self {
        Period::ALL.into_iter().filter(|p| s.contains(*p)).collect()
    }
}

impl TryFrom<Vec<Period>> for PeriodSet {
    type Error = String;

    fn try_from(v: Vec<Period>) -> std::result::Result<Self, Self::Error> {
        if !v.contains(&Period::Hourly) {
            return Err("period set must contain hourly".into());
        }
        Ok(Self {
            daily: v.contains(&Period::Daily),
            weekly: v.contains(&Period::Weekly),
        })
    }
}

impl fmt::Display for PeriodSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Vec::<Period>::from(*self).iter().map(|p| p.name()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// Decision table on the sign pattern of the gaps.
///
/// Daily joins when `hd > 0`, weekly when `hw > 0`; when both qualify the
/// daily-weekly gap arbitrates, with a tie resolved to daily only.
pub fn select_periods(d: &Deltas) -> PeriodSet {
    match (d.hd > 0.0, d.hw > 0.0) {
        (true, true) => PeriodSet {
            daily: true,
            weekly: d.dw > 0.0,
        },
        (true, false) => PeriodSet {
            daily: true,
            weekly: false,
        },
        (false, true) => PeriodSet {
            daily: false,
            weekly: true,
        },
        (false, false) => PeriodSet::HOURLY,
    }
}

/// Majority vote across attributes, per period; a tie excludes the period.
pub fn reduce_verdicts(verdicts: &[PeriodSet]) -> PeriodSet {
    let n = verdicts.len();
    let daily = verdicts.iter().filter(|v| v.daily).count();
    let weekly = verdicts.iter().filter(|v| v.weekly).count();
    PeriodSet {
        daily: 2 * daily > n,
        weekly: 2 * weekly > n,
    }
}

/// Per-period means of one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodMeans {
    pub hourly: f64,
    pub daily: f64,
    pub weekly: f64,
}

/// Weighted per-sensor values for each period, `N x C` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSensor {
    pub hourly: Vec<f64>,
    pub daily: Vec<f64>,
    pub weekly: Vec<f64>,
}

/// Full temporal-correlation analysis of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TCorrReport {
    pub dataset: String,
    pub eta: f64,
    pub weights: TCorrWeights,
    pub spec: PeriodSpec,
    pub sensors: usize,
    pub attributes: usize,
    pub anchors: usize,
    pub per_sensor: PerSensor,
    /// One entry per attribute.
    pub per_period_means: Vec<PeriodMeans>,
    pub deltas: Vec<Deltas>,
    pub verdict: Vec<PeriodSet>,
}

impl TCorrReport {
    /// Single verdict for the model input layout.
    pub fn overall_verdict(&self) -> PeriodSet {
        reduce_verdicts(&self.verdict)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Computes weighted correlations for all three periods over the anchors of
/// `range`, their gaps, and the per-attribute verdicts.
pub fn tcorr_report(
    dataset: &str,
    x: &SpatioTemporalTensor,
    range: Range<usize>,
    spec: &PeriodSpec,
    weights: &TCorrWeights,
    eta: f64,
) -> Result<TCorrReport> {
    if range.end > x.timestamps() || range.start >= range.end {
        return Err(Error::OutOfRange(format!(
            "range {range:?} invalid for {} timestamps",
            x.timestamps()
        )));
    }
    let anchors = spec.anchors(range.clone());
    if anchors.is_empty() {
        return Err(Error::EmptyAnchors(format!(
            "range {range:?} is shorter than one week of history plus a window ({} + {})",
            spec.weekly_offset, spec.tau
        )));
    }
    let mut weighted = Vec::with_capacity(3);
    for p in Period::ALL {
        let raw = compute_tcorr(x, spec, p, eta, &anchors)?;
        weighted.push(weighted_tcorr(&raw, p, weights));
    }
    let (n, c) = (x.sensors(), x.attributes());
    let mean_of = |v: &[f64], ch: usize| (0..n).map(|i| v[i * c + ch]).sum::<f64>() / n as f64;
    let mut means = Vec::with_capacity(c);
    let mut deltas = Vec::with_capacity(c);
    let mut verdict = Vec::with_capacity(c);
    for ch in 0..c {
        let m = PeriodMeans {
            hourly: mean_of(&weighted[0], ch),
            daily: mean_of(&weighted[1], ch),
            weekly: mean_of(&weighted[2], ch),
        };
        let d = Deltas::from_means(m.hourly, m.daily, m.weekly);
        means.push(m);
        deltas.push(d);
        verdict.push(select_periods(&d));
    }
    let weekly = weighted.pop().unwrap();
    let daily = weighted.pop().unwrap();
    let hourly = weighted.pop().unwrap();
    Ok(TCorrReport {
        dataset: dataset.to_string(),
        eta,
        weights: *weights,
        spec: *spec,
        sensors: n,
        attributes: c,
        anchors: anchors.len(),
        per_sensor: PerSensor {
            hourly,
            daily,
            weekly,
        },
        per_period_means: means,
        deltas,
        verdict,
    })
}
