use serde::{Deserialize, Serialize};

use crate::data::SampleLayout;
use crate::error::{Error, Result};
use crate::tcorr::{PeriodSet, PeriodSpec};

fn default_d_model() -> usize {
    64
}
fn default_top_u() -> usize {
    4
}
fn default_twelve() -> usize {
    12
}
fn default_lr() -> f64 {
    0.001
}
fn default_true() -> bool {
    true
}
fn default_epochs() -> usize {
    200
}
fn default_patience() -> usize {
    20
}

/// Architecture and optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    pub heads: usize,
    #[serde(default = "default_top_u")]
    pub top_u: usize,
    /// Kernel of the temporal convolution used for queries and keys.
    pub kernel_size: usize,
    /// Use the convolutional query/key projection; pointwise when false.
    #[serde(default = "default_true")]
    pub context_conv: bool,
    #[serde(default = "default_periods")]
    pub periods: PeriodSet,
    #[serde(default = "default_twelve")]
    pub tau: usize,
    #[serde(default = "default_twelve")]
    pub horizon: usize,
    #[serde(default)]
    pub target_attr: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_periods() -> PeriodSet {
    PeriodSet::HOURLY
}

/// Named presets: `(name, encoder, decoder, kernel, heads, batch)`.
pub const PRESETS: [(&str, usize, usize, usize, usize, usize); 8] = [
    ("pems07", 3, 3, 3, 8, 4),
    ("pems07-periodic", 3, 3, 3, 8, 2),
    ("pems08", 4, 4, 3, 8, 16),
    ("pems08-periodic", 4, 4, 3, 8, 8),
    ("hzme-in", 4, 4, 3, 8, 4),
    ("hzme-in-periodic", 4, 4, 3, 8, 16),
    ("hzme-out", 3, 3, 5, 4, 8),
    ("hzme-out-periodic", 4, 4, 3, 4, 16),
];

impl ModelConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let &(_, enc, dec, kernel, heads, batch) = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .ok_or_else(|| Error::config(format!("unknown preset {name:?}")))?;
        Ok(Self {
            encoder_layers: enc,
            decoder_layers: dec,
            kernel_size: kernel,
            heads,
            batch_size: batch,
            periods: if name.ends_with("-periodic") {
                PeriodSet::ALL
            } else {
                PeriodSet::HOURLY
            },
            ..Self::tiny()
        })
    }

    /// Smallest useful model, for tests and smoke runs.
    pub fn tiny() -> Self {
        Self {
            encoder_layers: 1,
            decoder_layers: 1,
            d_model: default_d_model(),
            heads: 8,
            top_u: default_top_u(),
            kernel_size: 3,
            context_conv: true,
            periods: PeriodSet::HOURLY,
            tau: 12,
            horizon: 12,
            target_attr: 0,
            learning_rate: default_lr(),
            batch_size: 16,
            max_epochs: default_epochs(),
            patience: default_patience(),
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    /// Checks the config against a dataset of `n` sensors and `c` attributes.
    pub fn validate(&self, n: usize, c: usize) -> Result<()> {
        let positive = [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("top_u", self.top_u),
            ("kernel_size", self.kernel_size),
            ("tau", self.tau),
            ("horizon", self.horizon),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::config(format!("kernel_size {} must be odd", self.kernel_size)));
        }
        if self.top_u > n {
            return Err(Error::config(format!("top_u {} exceeds {n} sensors", self.top_u)));
        }
        if self.target_attr >= c {
            return Err(Error::config(format!(
                "target_attr {} out of {c} attributes",
                self.target_attr
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be a nonnegative number"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn layout(&self, interval_minutes: u32) -> Result<SampleLayout> {
        Ok(SampleLayout {
            periods: self.periods,
            spec: PeriodSpec::for_interval(interval_minutes, self.tau)?,
            horizon: self.horizon,
            target_attr: self.target_attr,
        })
    }

    /// FNV-1a over the canonical JSON form of the architecture fields.
    pub fn architecture_hash(&self) -> u64 {
        let arch = serde_json::json!({
            "encoder_layers": self.encoder_layers,
            "decoder_layers": self.decoder_layers,
            "d_model": self.d_model,
            "heads": self.heads,
            "top_u": self.top_u,
            "kernel_size": self.kernel_size,
            "context_conv": self.context_conv,
            "periods": self.periods,
            "tau": self.tau,
            "horizon": self.horizon,
            "target_attr": self.target_attr,
        });
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in arch.to_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}
