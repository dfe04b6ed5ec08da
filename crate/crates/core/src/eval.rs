//! Forecast error metrics and per-horizon reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::series::SpatioTemporalTensor;

fn check(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientSamples("no points to score".into()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check(pred, truth)?;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// Mean absolute percentage error as a fraction, skipping zero targets.
/// Returns the value and the number of skipped points.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<(f64, usize)> {
    check(pred, truth)?;
    let mut total = 0.0;
    let mut used = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if *t != 0.0 {
            total += ((p - t) / t).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("every target is zero".into()));
    }
    Ok((total / used as f64, pred.len() - used))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target is zero.
    pub mape: Option<f64>,
}

impl Metrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<(Self, usize)> {
        let (mape, masked) = match mape(pred, truth) {
            Ok((v, m)) => (Some(v), m),
            Err(Error::UndefinedMetric(_)) => (None, pred.len()),
            Err(e) => return Err(e),
        };
        Ok((
            Self {
                mae: mae(pred, truth)?,
                rmse: rmse(pred, truth)?,
                mape,
            },
            masked,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub overall: Metrics,
    pub per_horizon: Vec<Metrics>,
    pub n_points: usize,
    pub mape_masked: usize,
}

impl MetricReport {
    /// Builds a report from `L x N x 1` forecast/target pairs.
    pub fn from_pairs(pairs: &[(SpatioTemporalTensor, SpatioTemporalTensor)]) -> Result<Self> {
        let (first, _) = pairs
            .first()
            .ok_or_else(|| Error::InsufficientSamples("empty test set".into()))?;
        let horizon = first.timestamps();
        let mut all_p = Vec::new();
        let mut all_t = Vec::new();
        let mut by_h: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); horizon];
        for (p, t) in pairs {
            if p.timestamps() != horizon
                || t.timestamps() != horizon
                || p.data().len() != t.data().len()
            {
                return Err(Error::dim(format!(
                    "forecast {}x{}x{} does not match target {}x{}x{}",
                    p.timestamps(),
                    p.sensors(),
                    p.attributes(),
                    t.timestamps(),
                    t.sensors(),
                    t.attributes()
                )));
            }
            let row = p.data().len() / horizon;
            for (h, (bp, bt)) in by_h.iter_mut().enumerate() {
                bp.extend_from_slice(&p.data()[h * row..(h + 1) * row]);
                bt.extend_from_slice(&t.data()[h * row..(h + 1) * row]);
            }
            all_p.extend_from_slice(p.data());
            all_t.extend_from_slice(t.data());
        }
        let (overall, mape_masked) = Metrics::compute(&all_p, &all_t)?;
        let per_horizon = by_h
            .iter()
            .map(|(p, t)| Metrics::compute(p, t).map(|m| m.0))
            .collect::<Result<_>>()?;
        Ok(Self {
            overall,
            per_horizon,
            n_points: all_p.len(),
            mape_masked,
        })
    }

    /// `horizon,mae,rmse,mape` rows, MAPE in percent.
    pub fn write_horizon_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["horizon", "mae", "rmse", "mape_percent"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for (h, m) in self.per_horizon.iter().enumerate() {
            out.write_record([
                (h + 1).to_string(),
                m.mae.to_string(),
                m.rmse.to_string(),
                m.mape.map(|v| (v * 100.0).to_string()).unwrap_or_default(),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Anything that turns a sample into a denormalized `L x N x 1` forecast.
pub trait Predictor {
    fn predict(&self, sample: &Sample) -> Result<SpatioTemporalTensor>;
}

/// Returns the stored target.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, sample: &Sample) -> Result<SpatioTemporalTensor> {
        Ok(sample.target.clone())
    }
}

/// Forecasts zero everywhere.
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, sample: &Sample) -> Result<SpatioTemporalTensor> {
        Ok(sample.target.map_attr(|_, _| 0.0))
    }
}

pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, samples: &[Sample]) -> Result<MetricReport> {
    let pairs = samples
        .iter()
        .map(|s| Ok((predictor.predict(s)?, s.target.clone())))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_pairs(&pairs)
}

/// Mean and sample standard deviation of repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

pub fn spread(values: &[f64]) -> Result<Spread> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples("no runs to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(Spread { mean, std })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: usize,
    pub mae: Spread,
    pub rmse: Spread,
    pub mape: Option<Spread>,
}

pub fn summarize_runs(reports: &[MetricReport]) -> Result<SeedSummary> {
    let pick = |f: fn(&Metrics) -> f64| reports.iter().map(|r| f(&r.overall)).collect::<Vec<_>>();
    let mapes: Option<Vec<f64>> = reports.iter().map(|r| r.overall.mape).collect();
    Ok(SeedSummary {
        runs: reports.len(),
        mae: spread(&pick(|m| m.mae))?,
        rmse: spread(&pick(|m| m.rmse))?,
        mape: mapes.map(|v| spread(&v)).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let (p, t) = ([2.0, 4.0], [1.0, 2.0]);
        assert_eq!(mae(&p, &t).unwrap(), 1.5);
        assert!((rmse(&p, &t).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mape(&p, &t).unwrap(), (1.0, 0));
    }

    #[test]
    fn shift_by_one() {
        let t = [3.0, -1.0, 0.5];
        let p: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        assert_eq!(mae(&p, &t).unwrap(), 1.0);
        assert_eq!(rmse(&p, &t).unwrap(), 1.0);
    }

    #[test]
    fn zero_targets_are_masked() {
        assert_eq!(mape(&[1.0, 3.0], &[0.0, 2.0]).unwrap(), (0.5, 1));
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::UndefinedMetric(_))));
        let (m, masked) = Metrics::compute(&[1.0], &[0.0]).unwrap();
        assert_eq!((m.mape, masked), (None, 1));
    }

    #[test]
    fn sample_std() {
        let s = spread(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }
}
