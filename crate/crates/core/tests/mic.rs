use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stcorr::mic::{admissible_shapes, mic, pairwise_mic};

/// Enumerates every equal-count grid by brute force and scores it from
/// entropies in nats.
fn oracle(x: &[f64], y: &[f64], eta: f64) -> f64 {
    let m = x.len();
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap().then(i.cmp(&j)));
        let mut r = vec![0usize; m];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos;
        }
        r
    };
    if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return 0.0;
    }
    let (rx, ry) = (rank(x), rank(y));
    if rx == ry {
        return 1.0;
    }
    let bound = (m as f64).powf(eta);
    let mut shapes = Vec::new();
    for a in 2..=m {
        for b in 2..=m {
            if ((a * b) as f64) < bound {
                shapes.push((a, b));
            }
        }
    }
    if shapes.is_empty() {
        shapes.push((2, 2));
    }
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / m as f64;
                -p * p.ln()
            })
            .sum()
    };
    let mut best = 0.0f64;
    for (a, b) in shapes {
        let mut joint = vec![0usize; a * b];
        let mut row = vec![0usize; a];
        let mut col = vec![0usize; b];
        for k in 0..m {
            let i = rx[k] * a / m;
            let j = ry[k] * b / m;
            joint[i * b + j] += 1;
            row[i] += 1;
            col[j] += 1;
        }
        let mi = entropy(&row) + entropy(&col) - entropy(&joint);
        best = best.max(mi / (a.min(b) as f64).ln());
    }
    best.clamp(0.0, 1.0)
}

fn random_pair(rng: &mut ChaCha8Rng, m: usize) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let kind = rng.gen_range(0..4);
    let y = x
        .iter()
        .map(|&v| match kind {
            0 => rng.gen_range(-5.0..5.0),
            1 => v * v + rng.gen_range(-0.5..0.5),
            2 => (v * 2.0).sin() + rng.gen_range(-0.1..0.1),
            // coarse values to exercise ties
            _ => (v + rng.gen_range(-1.0..1.0)).round(),
        })
        .collect();
    (x, y)
}

#[test]
fn matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let m = rng.gen_range(2..=64);
        let (x, y) = random_pair(&mut rng, m);
        let got = mic(&x, &y, 0.6).unwrap().value;
        let want = oracle(&x, &y, 0.6);
        assert!((got - want).abs() < 1e-12, "m={m}: {got} vs {want}");
    }
}

#[test]
fn independent_shuffle_scores_low_and_function_scores_high() {
    let m = 1000;
    let x: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
    let f: Vec<f64> = x.iter().map(|v| (v * 12.0).sin()).collect();
    assert!(mic(&x, &f, 0.6).unwrap().value > 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    assert!(mic(&x, &noise, 0.6).unwrap().value < 0.2);
}

#[test]
fn degenerate_and_invalid_inputs() {
    let s = mic(&[1.0; 10], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 0.6).unwrap();
    assert_eq!((s.value, s.degenerate), (0.0, true));
    assert!(mic(&[1.0], &[1.0], 0.6).is_err());
    assert!(mic(&[1.0, f64::NAN], &[1.0, 2.0], 0.6).is_err());
    assert!(mic(&[1.0, 2.0], &[1.0, 2.0, 3.0], 0.6).is_err());
    assert!(mic(&[1.0, 2.0], &[1.0, 2.0], 0.0).is_err());
}

#[test]
fn pairwise_diagonal_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cols: Vec<Vec<f64>> = (0..5).map(|_| (0..50).map(|_| rng.gen::<f64>()).collect()).collect();
    let mm = pairwise_mic(&cols, 0.6).unwrap();
    for i in 0..5 {
        assert_eq!(mm.get(i, i), 1.0);
        for j in 0..5 {
            assert_eq!(mm.get(i, j), mm.get(j, i));
            if i != j {
                assert_eq!(mm.get(i, j), mic(&cols[i], &cols[j], 0.6).unwrap().value);
            }
        }
    }
}

#[test]
fn short_sequences_use_two_by_two_floor() {
    assert_eq!(admissible_shapes(5, 0.6), vec![(2, 2)]);
    let s = mic(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 0.6).unwrap();
    assert_eq!(s.value, 1.0);
}

fn seq(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|m| (prop::collection::vec(-100.0..100.0f64, m), prop::collection::vec(-100.0..100.0f64, m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn score_in_unit_interval((x, y) in seq(2..80)) {
        let v = mic(&x, &y, 0.6).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn symmetric((x, y) in seq(2..80)) {
        prop_assert_eq!(mic(&x, &y, 0.6).unwrap(), mic(&y, &x, 0.6).unwrap());
    }

    #[test]
    fn self_identity(x in prop::collection::vec(-100.0..100.0f64, 2..120)) {
        prop_assume!(x.iter().any(|&v| v != x[0]));
        prop_assert_eq!(mic(&x, &x, 0.6).unwrap().value, 1.0);
        let up: Vec<f64> = x.iter().map(|v| v.exp2()).collect();
        prop_assert_eq!(mic(&x, &up, 0.6).unwrap().value, 1.0);
    }

    #[test]
    fn invariant_under_increasing_maps((x, y) in seq(2..80)) {
        let base = mic(&x, &y, 0.6).unwrap().value;
        let fx: Vec<f64> = x.iter().map(|v| v * 3.0 + 7.0).collect();
        let fy: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
        prop_assert_eq!(mic(&fx, &fy, 0.6).unwrap().value, base);
        let ex: Vec<f64> = x.iter().map(|v| (v / 50.0).exp()).collect();
        prop_assert_eq!(mic(&ex, &y, 0.6).unwrap().value, base);
    }
}
