#![allow(dead_code)]

pub mod reference;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcorr::data::{assemble_samples, ring_adjacency, NormParams, Sample};
use stcorr::neural::{laplacian_normalize, with_self_loops, NormalizedAdjacency};
use stcorr::{Model, ModelConfig, ModelMeta, SCorrTensor, SpatioTemporalTensor};

pub fn random_scorr(n: usize, c: usize, seed: u64) -> SCorrTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![0.0; c * n * n];
    for ch in 0..c {
        for i in 0..n {
            d[(ch * n + i) * n + i] = 1.0;
            for j in i + 1..n {
                let v = rng.gen_range(0.0..1.0);
                d[(ch * n + i) * n + j] = v;
                d[(ch * n + j) * n + i] = v;
            }
        }
    }
    SCorrTensor::from_degrees(n, c, d).unwrap()
}

pub fn ring(n: usize) -> NormalizedAdjacency {
    laplacian_normalize(&with_self_loops(&ring_adjacency(n), n), n).unwrap()
}

/// Smooth positive readings, `t x n x c`, 5-minute interval.
pub fn wave_tensor(t: usize, n: usize, c: usize, seed: u64) -> SpatioTemporalTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: Vec<f64> = (0..n * c).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    SpatioTemporalTensor::from_fn(t, n, c, 5, |k, i, ch| {
        100.0 + 40.0 * (k as f64 * 0.3 + phase[i * c + ch]).sin() + 10.0 * (k as f64 * 0.07).cos()
    })
    .unwrap()
}

pub fn tiny_config(d: usize, heads: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        encoder_layers: 1,
        decoder_layers: 1,
        d_model: d,
        heads,
        top_u: 2,
        kernel_size: 3,
        horizon: 12,
        tau: 12,
        batch_size: 4,
        seed,
        ..ModelConfig::tiny()
    }
}

pub struct Fixture {
    pub tensor: SpatioTemporalTensor,
    pub scorr: SCorrTensor,
    pub adjacency: NormalizedAdjacency,
    pub norm: NormParams,
}

pub fn fixture(t: usize, n: usize, c: usize, seed: u64) -> Fixture {
    let tensor = wave_tensor(t, n, c, seed);
    let norm = NormParams::fit(&tensor, 0..t).unwrap();
    Fixture {
        tensor,
        scorr: random_scorr(n, c, seed + 1),
        adjacency: ring(n),
        norm,
    }
}

impl Fixture {
    pub fn model(&self, cfg: ModelConfig) -> Model {
        let meta = ModelMeta {
            config: cfg,
            sensors: self.tensor.sensors(),
            attributes: self.tensor.attributes(),
            interval_minutes: 5,
            norm: self.norm.clone(),
        };
        Model::build(meta, &self.scorr, &self.adjacency).unwrap()
    }

    pub fn samples(&self, model: &Model) -> Vec<Sample> {
        assemble_samples(&self.tensor, 0..self.tensor.timestamps(), model.layout()).unwrap()
    }
}
