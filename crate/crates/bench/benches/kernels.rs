use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use stcorr::data::assemble_samples;
use stcorr::{compute_scorr, mic, ModelConfig, DEFAULT_ETA};
use stcorr_bench::{model, noise, synthetic};

fn bench_mic(c: &mut Criterion) {
    let mut group = c.benchmark_group("mic");
    for m in [288usize, 1000, 3000] {
        let (x, y) = (noise(m, 1), noise(m, 2));
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| mic(black_box(&x), black_box(&y), DEFAULT_ETA).unwrap())
        });
    }
    group.finish();
}

fn bench_scorr(c: &mut Criterion) {
    let mut group = c.benchmark_group("scorr");
    group.sample_size(10);
    for n in [8usize, 16] {
        let x = synthetic(n, 1000, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| compute_scorr(black_box(&x), DEFAULT_ETA).unwrap())
        });
    }
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let x = synthetic(8, 200, 1);
    let m = model(
        &x,
        ModelConfig {
            d_model: 32,
            heads: 4,
            ..ModelConfig::tiny()
        },
    );
    let sample = &assemble_samples(&x, 0..200, m.layout()).unwrap()[0];
    c.bench_function("forward/n8_d32", |b| b.iter(|| m.predict_sample(black_box(sample)).unwrap()));
}

criterion_group!(benches, bench_mic, bench_scorr, bench_forward);
criterion_main!(benches);
