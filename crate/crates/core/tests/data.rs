use std::path::PathBuf;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stcorr::data::{
    assemble_samples, generate_synthetic, load_dataset, read_edges, read_tensor, read_tensor_csv, save_dataset, split,
    write_edges, write_tensor, NormParams, SampleLayout, SplitRanges, SynthConfig, DEFAULT_SPLIT,
};
use stcorr::tcorr::{compute_tcorr, tcorr_report};
use stcorr::{Period, PeriodSet, PeriodSpec, SpatioTemporalTensor, TCorrWeights};

/// Encodes position in the value: `t * 1000 + sensor * 10 + attr`.
fn indexed(t: usize, n: usize, c: usize) -> SpatioTemporalTensor {
    SpatioTemporalTensor::from_fn(t, n, c, 5, |k, i, ch| (k * 1000 + i * 10 + ch) as f64).unwrap()
}

fn stamp(v: f64) -> usize {
    v as usize / 1000
}

fn layout(periods: PeriodSet, spec: PeriodSpec, horizon: usize) -> SampleLayout {
    SampleLayout {
        periods,
        spec,
        horizon,
        target_attr: 0,
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stcorr-data-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn split_examples() {
    let s = split(100, DEFAULT_SPLIT).unwrap();
    assert_eq!(
        s,
        SplitRanges {
            train: 0..60,
            val: 60..80,
            test: 80..100
        }
    );
    for t in [5usize, 17, 101, 4032] {
        let s = split(t, DEFAULT_SPLIT).unwrap();
        assert_eq!((s.train.start, s.train.end, s.val.end, s.test.end), (0, s.val.start, s.test.start, t));
    }
    assert!(split(2, DEFAULT_SPLIT).is_err());
    assert!(split(100, [0.5, 0.2, 0.2]).is_err());
    assert!(split(100, [1.0, 0.0, 0.0]).is_err());
}

#[test]
fn normalization_examples() {
    let x = SpatioTemporalTensor::new(3, 1, 2, 5, vec![10.0, -4.0, 20.0, 0.0, 30.0, 4.0]).unwrap();
    let p = NormParams::fit(&x, 0..3).unwrap();
    assert_eq!((p.min.clone(), p.max.clone()), (vec![10.0, -4.0], vec![30.0, 4.0]));
    assert_eq!(p.normalize_value(10.0, 0), -1.0);
    assert_eq!(p.normalize_value(30.0, 0), 1.0);
    assert_eq!(p.normalize_value(20.0, 0), 0.0);
    assert_eq!(p.normalize_value(0.0, 1), 0.0);

    // Fitting on a prefix ignores later values.
    let prefix = NormParams::fit(&x, 0..2).unwrap();
    assert_eq!(prefix.max, vec![20.0, 0.0]);

    let flat = SpatioTemporalTensor::new(2, 1, 2, 5, vec![1.0, 5.0, 1.0, 6.0]).unwrap();
    assert!(matches!(NormParams::fit(&flat, 0..2), Err(stcorr::Error::DegenerateAttribute(0))));
}

#[test]
fn assembled_windows_hold_expected_indices() {
    let spec = PeriodSpec::new(4, 4, 10, 20).unwrap();
    let x = indexed(60, 2, 3);
    let lay = layout(PeriodSet::ALL, spec, 5);
    assert_eq!(lay.encoder_len(), 12);
    for s in assemble_samples(&x, 0..60, &lay).unwrap() {
        let t = s.anchor;
        let mut expect: Vec<usize> = Vec::new();
        for off in [20, 10, 4] {
            expect.extend(t + 1 - off..t + 1 - off + 4);
        }
        for (k, &want) in expect.iter().enumerate() {
            for i in 0..2 {
                for c in 0..3 {
                    assert_eq!(s.encoder_input.get(k, i, c), (want * 1000 + i * 10 + c) as f64);
                }
            }
        }
        for k in 0..5 {
            assert_eq!(stamp(s.decoder_input.get(k, 1, 2)), t + k);
            assert_eq!(s.target.get(k, 1, 0), ((t + 1 + k) * 1000 + 10) as f64);
        }
    }

    let hourly = layout(PeriodSet::HOURLY, PeriodSpec::default(), 12);
    assert_eq!(hourly.encoder_len(), 12);
    assert_eq!(layout(PeriodSet::ALL, PeriodSpec::default(), 12).encoder_len(), 36);
}

#[test]
fn target_attribute_is_configurable() {
    let x = indexed(40, 1, 3);
    let lay = SampleLayout {
        target_attr: 2,
        ..layout(PeriodSet::HOURLY, PeriodSpec::new(4, 4, 10, 20).unwrap(), 3)
    };
    let s = &assemble_samples(&x, 0..40, &lay).unwrap()[0];
    assert_eq!(s.target.get(0, 0, 0), ((s.anchor + 1) * 1000 + 2) as f64);
    let bad = SampleLayout { target_attr: 3, ..lay };
    assert!(assemble_samples(&x, 0..40, &bad).is_err());
}

#[test]
fn sample_count_closed_form() {
    let spec = PeriodSpec::new(3, 3, 7, 14).unwrap();
    let sets = [PeriodSet::HOURLY, PeriodSet { daily: true, weekly: false }, PeriodSet::ALL];
    for t in 1..=40usize {
        let x = indexed(t, 1, 1);
        for periods in sets {
            for horizon in 1..=4 {
                let lay = layout(periods, spec, horizon);
                let deepest = if periods.weekly { 14 } else if periods.daily { 7 } else { 3 };
                for start in 0..t {
                    for end in start + 1..=t {
                        let lo = start.saturating_sub(1).max(deepest - 1);
                        let want = end.saturating_sub(horizon).saturating_sub(lo);
                        match assemble_samples(&x, start..end, &lay) {
                            Ok(s) => assert_eq!(s.len(), want, "t={t} {start}..{end} L={horizon}"),
                            Err(stcorr::Error::InsufficientSamples(_)) => assert_eq!(want, 0),
                            Err(e) => panic!("{e}"),
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn weekly_split_leakage_audit() {
    let t = 2016 * 4;
    let x = indexed(t, 1, 1);
    let spec = PeriodSpec::for_interval(5, 12).unwrap();
    let lay = layout(PeriodSet::ALL, spec, 12);
    let s = split(t, DEFAULT_SPLIT).unwrap();
    for range in [s.train.clone(), s.val.clone(), s.test.clone()] {
        let samples = match assemble_samples(&x, range.clone(), &lay) {
            Ok(v) => v,
            // The training split is shorter than one week of lookback.
            Err(stcorr::Error::InsufficientSamples(_)) => {
                assert!(range.end < 2016 + 12);
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        for smp in &samples {
            let targets: Vec<usize> = (0..12).map(|k| stamp(smp.target.get(k, 0, 0))).collect();
            assert!(targets.iter().all(|v| range.contains(v)));
            let lookback_min = (0..36).map(|k| stamp(smp.encoder_input.get(k, 0, 0))).min().unwrap();
            let lookback_max = (0..36).map(|k| stamp(smp.encoder_input.get(k, 0, 0))).max().unwrap();
            assert!(lookback_min + 2015 == smp.anchor);
            assert!(lookback_max == smp.anchor);
            assert!(lookback_max < targets[0]);
        }
    }
    // Test samples reach back a week into validation and training data.
    let test = assemble_samples(&x, s.test.clone(), &lay).unwrap();
    assert_eq!(test.len(), s.test.end - 12 - (s.test.start - 1));
    assert!(stamp(test[0].encoder_input.get(0, 0, 0)) < s.val.start);
}

#[test]
fn csv_and_binary_tensors() {
    let text = "timestamp,sensor,flow\n0,a,1\n0,b,2\n1,a,3\n1,b,4\n2,a,5\n2,b,6\n3,a,7\n3,b,8\n";
    let (x, ids) = read_tensor_csv(text.as_bytes(), 5).unwrap();
    assert_eq!((x.timestamps(), x.sensors(), x.attributes()), (4, 2, 1));
    assert_eq!((x.get(2, 1, 0), ids.len()), (6.0, 2));
    assert!(read_tensor_csv("timestamp,sensor,flow\n0,a,1\n0,b,x\n".as_bytes(), 5).is_err());
    assert!(read_tensor_csv("timestamp,sensor,flow\n0,a,1\n0,b,2\n1,a,3\n".as_bytes(), 5).is_err());
    assert!(read_tensor_csv("timestamp,sensor,flow\n0,a,1\n0,a,2\n".as_bytes(), 5).is_err());
    assert!(read_tensor_csv("timestamp,sensor,flow\n0,a,NaN\n".as_bytes(), 5).is_err());

    let y = indexed(7, 3, 2);
    let mut bytes = Vec::new();
    write_tensor(&y, &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"STTF");
    assert_eq!(bytes.len(), 4 + 5 * 4 + 7 * 3 * 2 * 8);
    assert_eq!(read_tensor(bytes.as_slice()).unwrap(), y);
    assert!(read_tensor(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn edge_lists() {
    let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let adj = read_edges("from,to,weight\na,b,2.5\n".as_bytes(), &ids, false).unwrap();
    assert_eq!((adj[1], adj[3]), (2.5, 2.5));
    let adj = read_edges("from,to,weight #directed\na,b,2.5\n".as_bytes(), &ids, false).unwrap();
    assert_eq!((adj[1], adj[3]), (2.5, 0.0));
    let adj = read_edges("from,to,weight\nb,c,7\n".as_bytes(), &ids, true).unwrap();
    assert_eq!(adj[5], 1.0);
    assert!(read_edges("from,to\na,z\n".as_bytes(), &ids, false).is_err());
    assert!(read_edges("from,to,weight\na,b,-1\n".as_bytes(), &ids, false).is_err());
    assert!(read_edges("from,to #sideways\n".as_bytes(), &ids, false).is_err());
}

#[test]
fn eighty_sensor_graph_with_168_undirected_edges() {
    let n = 80;
    let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(80));
    let mut text = String::from("from,to\n");
    for (a, b) in &pairs[..168] {
        text.push_str(&format!("s{a},s{b}\n"));
    }
    let tensor = scratch("hz.sttf");
    let mut f = std::fs::File::create(&tensor).unwrap();
    write_tensor(&indexed(20, n, 2), &mut f).unwrap();
    drop(f);

    // Binary tensors name sensors by index, so rewrite the ids.
    let edges_numeric = scratch("hz-numeric.edges.csv");
    std::fs::write(&edges_numeric, text.replace('s', "")).unwrap();
    let ds = load_dataset(&tensor, &edges_numeric, 5, false).unwrap();
    let off_diagonal = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| i != j && ds.adjacency[i * n + j] != 0.0).count();
    assert_eq!(off_diagonal, 336);
    assert!((0..n).all(|i| (0..n).all(|j| ds.adjacency[i * n + j] == ds.adjacency[j * n + i])));

    let by_name = read_edges(text.as_bytes(), &ids, false).unwrap();
    assert_eq!(by_name.iter().filter(|&&v| v != 0.0).count(), 336);

    let mut out = Vec::new();
    write_edges(&ds.adjacency, &ds.sensor_ids, &mut out).unwrap();
    assert_eq!(read_edges(out.as_slice(), &ds.sensor_ids, false).unwrap(), ds.adjacency);
}

#[test]
fn dataset_save_load_round_trip() {
    let ds = generate_synthetic(&SynthConfig {
        sensors: 4,
        weeks: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let (t, e) = (scratch("rt.sttf"), scratch("rt.edges.csv"));
    save_dataset(&ds, &t, &e).unwrap();
    let back = load_dataset(&t, &e, 5, false).unwrap();
    assert_eq!(back.tensor, ds.tensor);
    assert_eq!(back.adjacency, ds.adjacency);
}

#[test]
fn synthetic_is_seeded() {
    let cfg = SynthConfig {
        sensors: 3,
        weeks: 2,
        seed: 4,
        ..SynthConfig::default()
    };
    assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
    assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&SynthConfig { seed: 5, ..cfg.clone() }).unwrap());
    let ds = generate_synthetic(&cfg).unwrap();
    assert_eq!(ds.tensor.timestamps(), 2 * 2016);
    assert!(generate_synthetic(&SynthConfig { weeks: 1, ..cfg }).is_err());
}

#[test]
fn noiseless_daily_signal_has_unit_daily_correlation() {
    let ds = generate_synthetic(&SynthConfig {
        sensors: 3,
        weeks: 2,
        weekly_amplitude: 0.0,
        noise_sigma: 0.0,
        seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    let spec = PeriodSpec::default();
    let anchors = spec.anchors(0..ds.tensor.timestamps());
    let raw = compute_tcorr(&ds.tensor, &spec, Period::Daily, 0.6, &anchors).unwrap();
    assert!(raw.iter().all(|&v| v > 0.99), "{raw:?}");
}

#[test]
fn dominant_weekly_component_selects_weekly() {
    let ds = generate_synthetic(&SynthConfig {
        sensors: 4,
        weeks: 3,
        daily_amplitude: 2.0,
        weekly_amplitude: 60.0,
        noise_sigma: 0.5,
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    let r = tcorr_report("w", &ds.tensor, 0..ds.tensor.timestamps(), &PeriodSpec::default(), &TCorrWeights::default(), 0.6).unwrap();
    assert!(r.overall_verdict().weekly, "{:?}", r.per_period_means);
}

proptest! {
    #[test]
    fn normalize_round_trip(vals in prop::collection::vec(-1e4..1e4f64, 4..40)) {
        let t = vals.len() / 2;
        let x = SpatioTemporalTensor::new(t, 1, 2, 5, vals[..2 * t].to_vec()).unwrap();
        let Ok(p) = NormParams::fit(&x, 0..t) else { return Ok(()) };
        let y = p.normalize(&x);
        prop_assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        for (a, b) in p.denormalize(&y).data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }
}
