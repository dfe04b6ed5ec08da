//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so entries whose true gradient
/// is numerically zero are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat entry of the worst mismatch.
    pub worst: Option<(String, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn projected_loss<F>(f: &F, store: &ParamStore, r: &Tensor) -> Result<(Tape, Var)>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let rv = tape.constant(r.clone());
    let prod = tape.mul(out, rv)?;
    let loss = tape.sum(prod);
    Ok((tape, loss))
}

/// Compares analytic and numeric gradients of `sum(f(params) * R)` for a
/// fixed random `R`. With `sample = Some(k)`, only `k` randomly chosen
/// scalar entries are perturbed; otherwise every entry is.
pub fn gradcheck<F>(store: &mut ParamStore, f: F, sample_size: Option<usize>, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = {
        let mut tape = Tape::new();
        let out = f(&mut tape, store)?;
        tape.shape(out).to_vec()
    };
    let r = Tensor::from_fn(&shape, |_| rng.gen_range(-1.0..1.0));

    let (tape, loss) = projected_loss(&f, store, &r)?;
    let grads = tape.backward(loss)?;
    store.zero_grad();
    tape.accumulate(&grads, store);

    let mut entries: Vec<(ParamId, usize)> = Vec::new();
    for id in store.ids() {
        for e in 0..store.get(id).value.numel() {
            entries.push((id, e));
        }
    }
    if let Some(k) = sample_size {
        if k < entries.len() {
            let picked = sample(&mut rng, entries.len(), k);
            entries = picked.into_iter().map(|i| entries[i]).collect();
        }
    }

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for (id, e) in entries {
        let original = store.get(id).value.data()[e];
        let analytic = store.get(id).grad.data()[e];
        store.get_mut(id).value.data_mut()[e] = original + STEP;
        let (t, l) = projected_loss(&f, store, &r)?;
        let up = t.value(l).data()[0];
        store.get_mut(id).value.data_mut()[e] = original - STEP;
        let (t, l) = projected_loss(&f, store, &r)?;
        let down = t.value(l).data()[0];
        store.get_mut(id).value.data_mut()[e] = original;

        let numeric = (up - down) / (2.0 * STEP);
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((store.get(id).name.clone(), e));
        }
    }
    store.zero_grad();
    Ok(report)
}
