//! Correlation-information spatiotemporal forecasting.
//!
//! The crate measures how strongly sensors relate to each other
//! ([`scorr`]) and how strongly past periodic windows relate to the
//! forecasting window ([`tcorr`]), both built on the maximal information
//! coefficient ([`mic`]). Those tensors feed a small encoder-decoder
//! forecaster ([`model`]) whose graph and attention layers ([`neural`]) are
//! weighted by the correlation degrees.

// Negated comparisons are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod mic;
pub mod model;
pub mod neural;
pub mod scorr;
pub mod series;
pub mod tcorr;

pub use error::{Error, Result};
pub use mic::{mic, pairwise_mic, MicScore, DEFAULT_ETA};
pub use scorr::{compute_scorr, top_u_normalize, windowed_scorr, SCorrTensor, TopUSCorr};
pub use series::SpatioTemporalTensor;
pub use tcorr::{Period, PeriodSet, PeriodSpec, TCorrReport, TCorrWeights};
pub use eval::{MetricReport, Predictor};
pub use model::{Model, ModelConfig, ModelMeta};
pub use neural::{NormalizedAdjacency, Tensor};
