//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcorr::data::{generate_synthetic, ring_adjacency, NormParams, SynthConfig};
use stcorr::neural::{laplacian_normalize, with_self_loops};
use stcorr::{Model, ModelConfig, ModelMeta, SpatioTemporalTensor};

/// Uniform noise sequence of length `m`.
pub fn noise(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen()).collect()
}

/// The first `t` readings of a seeded synthetic dataset.
pub fn synthetic(n: usize, t: usize, c: usize) -> SpatioTemporalTensor {
    let ds = generate_synthetic(&SynthConfig {
        sensors: n,
        weeks: 2,
        attributes: c,
        seed: 1,
        ..SynthConfig::default()
    })
    .expect("synthetic dataset");
    ds.tensor.slice_time(0, t).expect("slice")
}

/// A freshly built model over `x` with an identity correlation tensor.
pub fn model(x: &SpatioTemporalTensor, config: ModelConfig) -> Model {
    let n = x.sensors();
    let meta = ModelMeta {
        config,
        sensors: n,
        attributes: x.attributes(),
        interval_minutes: x.interval_minutes(),
        norm: NormParams::fit(x, 0..x.timestamps()).expect("norm"),
    };
    let adjacency = laplacian_normalize(&with_self_loops(&ring_adjacency(n), n), n).expect("adjacency");
    Model::build(meta, &stcorr::SCorrTensor::identity(n, x.attributes()), &adjacency).expect("model")
}
