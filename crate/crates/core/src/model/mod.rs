//! Encoder-decoder forecaster built from correlation-aware attention and
//! graph layers.

mod checkpoint;
mod config;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_params, write_params, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, PRESETS};
pub use train::{train, Adam, EpochLog, TrainLog};

use crate::data::{NormParams, Sample, SampleLayout};
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::neural::{
    mixing_tensor, Ciatt, Cignn, ContextSpec, LayerNorm, Linear, NormalizedAdjacency, Padding, ParamId, ParamStore, Tape,
    Tensor, Var,
};
use crate::scorr::{top_u_normalize, SCorrTensor};
use crate::series::SpatioTemporalTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attention: Ciatt,
    pub graph: Cignn,
    pub norm_attention: LayerNorm,
    pub norm_graph: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub self_attention: Ciatt,
    pub cross_attention: Ciatt,
    pub graph: Cignn,
    pub norm_self: LayerNorm,
    pub norm_cross: LayerNorm,
    pub norm_graph: LayerNorm,
}

/// Everything needed to rebuild a model apart from its correlation inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ModelConfig,
    pub sensors: usize,
    pub attributes: usize,
    pub interval_minutes: u32,
    pub norm: NormParams,
}

/// Per-call training switches.
pub struct TrainMode<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    meta: ModelMeta,
    layout: SampleLayout,
    pub store: ParamStore,
    mixing: Tensor,
    input: Linear,
    spatial: ParamId,
    encoder_time: ParamId,
    decoder_time: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    head: Linear,
}

impl Model {
    /// Builds a freshly initialized model. Parameter registration order and
    /// values depend only on the config (including its seed) and the shapes.
    pub fn build(meta: ModelMeta, scorr: &SCorrTensor, adjacency: &NormalizedAdjacency) -> Result<Self> {
        let cfg = &meta.config;
        let (n, c) = (meta.sensors, meta.attributes);
        cfg.validate(n, c)?;
        if scorr.sensors() != n || scorr.attributes() != c || adjacency.sensors() != n {
            return Err(Error::dim(format!(
                "model for {n} sensors x {c} attributes got correlation {}x{} and adjacency {}",
                scorr.sensors(),
                scorr.attributes(),
                adjacency.sensors()
            )));
        }
        if meta.norm.min.len() != c {
            return Err(Error::dim("normalization parameters do not cover every attribute"));
        }
        let layout = cfg.layout(meta.interval_minutes)?;
        let topu = top_u_normalize(scorr, cfg.top_u)?;
        let mixing = mixing_tensor(&topu);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let d = cfg.d_model;
        let input = Linear::new(&mut store, "input", c, d, true, &mut rng);
        let spatial = store.add_glorot("spatial_embedding", &[n, 1, d], n, d, &mut rng);
        let t_enc = layout.encoder_len();
        let encoder_time = store.add_glorot("encoder_time_embedding", &[t_enc, d], t_enc, d, &mut rng);
        let decoder_time = store.add_glorot("decoder_time_embedding", &[cfg.horizon, d], cfg.horizon, d, &mut rng);

        let kernel = cfg.context_conv.then_some(cfg.kernel_size);
        let ctx = |query, key| ContextSpec { kernel, query, key };
        let mut encoder = Vec::with_capacity(cfg.encoder_layers);
        for l in 0..cfg.encoder_layers {
            let p = format!("encoder{l}");
            encoder.push(EncoderLayer {
                attention: Ciatt::new(&mut store, &format!("{p}.attention"), d, cfg.heads, ctx(Padding::Same, Padding::Same), &mut rng)?,
                graph: Cignn::new(&mut store, &format!("{p}.graph"), d, scorr, adjacency, &mut rng)?,
                norm_attention: LayerNorm::new(&mut store, &format!("{p}.norm_attention"), d),
                norm_graph: LayerNorm::new(&mut store, &format!("{p}.norm_graph"), d),
            });
        }
        let mut decoder = Vec::with_capacity(cfg.decoder_layers);
        for l in 0..cfg.decoder_layers {
            let p = format!("decoder{l}");
            decoder.push(DecoderLayer {
                self_attention: Ciatt::new(
                    &mut store,
                    &format!("{p}.self_attention"),
                    d,
                    cfg.heads,
                    ctx(Padding::Causal, Padding::Causal),
                    &mut rng,
                )?,
                cross_attention: Ciatt::new(
                    &mut store,
                    &format!("{p}.cross_attention"),
                    d,
                    cfg.heads,
                    ctx(Padding::Causal, Padding::Same),
                    &mut rng,
                )?,
                graph: Cignn::new(&mut store, &format!("{p}.graph"), d, scorr, adjacency, &mut rng)?,
                norm_self: LayerNorm::new(&mut store, &format!("{p}.norm_self"), d),
                norm_cross: LayerNorm::new(&mut store, &format!("{p}.norm_cross"), d),
                norm_graph: LayerNorm::new(&mut store, &format!("{p}.norm_graph"), d),
            });
        }
        let head = Linear::zeros(&mut store, "head", d, 1, true);
        Ok(Self {
            meta,
            layout,
            store,
            mixing,
            input,
            spatial,
            encoder_time,
            decoder_time,
            encoder,
            decoder,
            head,
        })
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn config(&self) -> &ModelConfig {
        &self.meta.config
    }

    pub fn layout(&self) -> &SampleLayout {
        &self.layout
    }

    pub fn norm(&self) -> &NormParams {
        &self.meta.norm
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// `[T, N, C]` timestamp-major input to `[N, T, d]` embedded features.
    fn embed(&self, tape: &mut Tape, x: &Tensor, time: ParamId) -> Result<Var> {
        let xv = tape.constant(x.clone());
        let xv = tape.permute(xv, &[1, 0, 2])?;
        let h = self.input.forward(tape, &self.store, xv)?;
        let s = tape.param(&self.store, self.spatial);
        let h = tape.add(h, s)?;
        let t = tape.param(&self.store, time);
        tape.add(h, t)
    }

    fn graph(&self, tape: &mut Tape, layer: &Cignn, x: Var) -> Result<Var> {
        let xt = tape.permute(x, &[1, 0, 2])?;
        let y = layer.forward(tape, &self.store, xt)?;
        tape.permute(y, &[1, 0, 2])
    }

    fn dropout(&self, tape: &mut Tape, x: Var, mode: &mut Option<TrainMode<'_>>) -> Result<Var> {
        match mode {
            Some(m) if m.dropout > 0.0 => {
                let keep = 1.0 - m.dropout;
                let mask = Tensor::from_fn(tape.shape(x), |_| {
                    if m.rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                let mv = tape.constant(mask);
                tape.mul(x, mv)
            }
            _ => Ok(x),
        }
    }

    fn check_input(&self, x: &Tensor, len: usize, what: &str) -> Result<()> {
        let want = [len, self.meta.sensors, self.meta.attributes];
        if x.shape() != want {
            return Err(Error::dim(format!(
                "{what} input {:?} does not match the configured layout {want:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Encoder memory `[N, T_hdw, d]` for normalized input `[T_hdw, N, C]`.
    pub fn encode(&self, tape: &mut Tape, x: &Tensor, mut mode: Option<TrainMode<'_>>) -> Result<Var> {
        self.check_input(x, self.layout.encoder_len(), "encoder")?;
        let mix = tape.constant(self.mixing.clone());
        let mut h = self.embed(tape, x, self.encoder_time)?;
        for layer in &self.encoder {
            let a = layer.attention.forward(tape, &self.store, h, h, mix, false)?.output;
            let a = self.dropout(tape, a, &mut mode)?;
            let r = tape.add(h, a)?;
            h = layer.norm_attention.forward(tape, &self.store, r)?;
            let g = self.graph(tape, &layer.graph, h)?;
            let g = self.dropout(tape, g, &mut mode)?;
            let r = tape.add(h, g)?;
            h = layer.norm_graph.forward(tape, &self.store, r)?;
        }
        Ok(h)
    }

    /// Normalized forecasts `[L, N, 1]` for decoder input `[L, N, C]`.
    pub fn decode(&self, tape: &mut Tape, memory: Var, y: &Tensor, mut mode: Option<TrainMode<'_>>) -> Result<Var> {
        self.check_input(y, self.meta.config.horizon, "decoder")?;
        let mix = tape.constant(self.mixing.clone());
        let mut h = self.embed(tape, y, self.decoder_time)?;
        for layer in &self.decoder {
            let a = layer.self_attention.forward(tape, &self.store, h, h, mix, true)?.output;
            let a = self.dropout(tape, a, &mut mode)?;
            let r = tape.add(h, a)?;
            h = layer.norm_self.forward(tape, &self.store, r)?;
            let a = layer.cross_attention.forward(tape, &self.store, h, memory, mix, false)?.output;
            let a = self.dropout(tape, a, &mut mode)?;
            let r = tape.add(h, a)?;
            h = layer.norm_cross.forward(tape, &self.store, r)?;
            let g = self.graph(tape, &layer.graph, h)?;
            let g = self.dropout(tape, g, &mut mode)?;
            let r = tape.add(h, g)?;
            h = layer.norm_graph.forward(tape, &self.store, r)?;
        }
        let out = self.head.forward(tape, &self.store, h)?;
        tape.permute(out, &[1, 0, 2])
    }

    /// Teacher-forced pass on normalized inputs.
    pub fn forward(&self, tape: &mut Tape, encoder_input: &Tensor, decoder_input: &Tensor) -> Result<Var> {
        let memory = self.encode(tape, encoder_input, None)?;
        self.decode(tape, memory, decoder_input, None)
    }

    /// Teacher-forced normalized forecasts as values.
    pub fn forward_values(&self, encoder_input: &Tensor, decoder_input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, encoder_input, decoder_input)?;
        Ok(tape.value(out).clone())
    }

    /// Normalized `[T, N, C]` tensor of a raw sample window.
    pub fn normalized_input(&self, x: &SpatioTemporalTensor) -> Result<Tensor> {
        let z = self.meta.norm.normalize(x);
        Tensor::new(&[z.timestamps(), z.sensors(), z.attributes()], z.data().to_vec())
    }

    /// Normalized `[L, N, 1]` target of a raw sample.
    pub fn normalized_target(&self, sample: &Sample) -> Result<Tensor> {
        let a = self.meta.config.target_attr;
        let t = &sample.target;
        Tensor::new(
            &[t.timestamps(), t.sensors(), 1],
            t.data().iter().map(|&v| self.meta.norm.normalize_value(v, a)).collect(),
        )
    }

    /// Autoregressive rollout from the last observed step, normalized.
    /// Step `k` feeds back the forecasts of steps before `k`; attributes
    /// other than the target keep their last observed values.
    pub fn rollout(&self, encoder_input: &Tensor, last_observed: &[f64]) -> Result<Tensor> {
        let (n, c) = (self.meta.sensors, self.meta.attributes);
        let l = self.meta.config.horizon;
        let a = self.meta.config.target_attr;
        if last_observed.len() != n * c {
            return Err(Error::dim(format!(
                "last observed step has {} values, expected {}",
                last_observed.len(),
                n * c
            )));
        }
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, encoder_input, None)?;
        let mut dec: Vec<f64> = last_observed.repeat(l);
        let mut out = vec![0.0; l * n];
        for k in 0..l {
            let y = Tensor::new(&[l, n, c], dec.clone())?;
            let pred = self.decode(&mut tape, memory, &y, None)?;
            let pv = tape.value(pred).data();
            out[k * n..(k + 1) * n].copy_from_slice(&pv[k * n..(k + 1) * n]);
            if k + 1 < l {
                for i in 0..n {
                    dec[((k + 1) * n + i) * c + a] = pv[k * n + i];
                }
            }
        }
        let out = Tensor::new(&[l, n, 1], out)?;
        if !out.is_finite() {
            return Err(Error::Domain("forecast contains non-finite values".into()));
        }
        Ok(out)
    }

    /// Denormalized `L x N x 1` forecast for a raw sample.
    pub fn predict_sample(&self, sample: &Sample) -> Result<SpatioTemporalTensor> {
        let enc = self.normalized_input(&sample.encoder_input)?;
        let dec = self.meta.norm.normalize(&sample.decoder_input);
        let (n, c) = (self.meta.sensors, self.meta.attributes);
        let last = &dec.data()[..n * c];
        let z = self.rollout(&enc, last)?;
        let a = self.meta.config.target_attr;
        let l = self.meta.config.horizon;
        SpatioTemporalTensor::new(
            l,
            n,
            1,
            sample.target.interval_minutes(),
            z.data().iter().map(|&v| self.meta.norm.denormalize_value(v, a)).collect(),
        )
    }
}

impl Predictor for Model {
    fn predict(&self, sample: &Sample) -> Result<SpatioTemporalTensor> {
        self.predict_sample(sample)
    }
}
