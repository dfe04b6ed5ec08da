use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, TrainMode};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::neural::{ParamStore, Tape, Tensor, Var};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (k, w) in p.value.data_mut().iter_mut().enumerate() {
                md[k] = self.beta1 * md[k] + (1.0 - self.beta1) * g[k];
                vd[k] = self.beta2 * vd[k] + (1.0 - self.beta2) * g[k] * g[k];
                *w -= self.lr * (md[k] / c1) / ((vd[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Teacher-forced training MAE in data units.
    pub train_mae: f64,
    pub val_mae: Option<f64>,
    pub val_rmse: Option<f64>,
    pub val_mape: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.write_record(["epoch", "train_mae", "val_mae", "val_rmse", "val_mape", "seconds"])
            .map_err(|e| Error::Format(e.to_string()))?;
        for e in &self.epochs {
            out.write_record([
                e.epoch.to_string(),
                e.train_mae.to_string(),
                fmt(e.val_mae),
                fmt(e.val_rmse),
                fmt(e.val_mape),
                format!("{:.3}", e.seconds),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Normalized encoder input, decoder input and target of one sample.
pub(crate) struct Prepared {
    enc: Tensor,
    dec: Tensor,
    target: Tensor,
}

impl Model {
    pub(crate) fn prepare(&self, s: &Sample) -> Result<Prepared> {
        Ok(Prepared {
            enc: self.normalized_input(&s.encoder_input)?,
            dec: self.normalized_input(&s.decoder_input)?,
            target: self.normalized_target(s)?,
        })
    }

    fn prepared_loss(&self, tape: &mut Tape, batch: &[&Prepared], mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let dropout = self.config().dropout;
        let mut total: Option<Var> = None;
        for p in batch {
            let memory = self.encode(tape, &p.enc, rng.as_deref_mut().map(|rng| TrainMode { rng, dropout }))?;
            let pred = self.decode(tape, memory, &p.dec, rng.as_deref_mut().map(|rng| TrainMode { rng, dropout }))?;
            let t = tape.constant(p.target.clone());
            let diff = tape.sub(pred, t)?;
            let abs = tape.abs(diff);
            let m = tape.mean(abs);
            total = Some(match total {
                Some(acc) => tape.add(acc, m)?,
                None => m,
            });
        }
        let total = total.ok_or_else(|| Error::InsufficientSamples("empty batch".into()))?;
        Ok(tape.mul_scalar(total, 1.0 / batch.len() as f64))
    }

    /// Teacher-forced mean absolute error of a batch in normalized units,
    /// without dropout.
    pub fn batch_loss(&self, tape: &mut Tape, batch: &[Sample]) -> Result<Var> {
        let prepared = batch.iter().map(|s| self.prepare(s)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Prepared> = prepared.iter().collect();
        self.prepared_loss(tape, &refs, None)
    }
}

/// Trains with teacher forcing and early stopping on validation MAE
/// (training MAE when `val` is empty). The best parameters are restored
/// before returning.
pub fn train(model: &mut Model, train: &[Sample], val: &[Sample]) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(Error::InsufficientSamples("no training samples".into()));
    }
    let cfg = model.config().clone();
    let half_span = model.norm().span(cfg.target_attr) / 2.0;
    let prepared = train.iter().map(|s| model.prepare(s)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_7a1e);
    let mut adam = Adam::new(&model.store, cfg.learning_rate);

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let mut tape = Tape::new();
            let loss = model.prepared_loss(&mut tape, &batch, Some(&mut rng))?;
            let lv = tape.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            weighted += lv * batch.len() as f64;
            model.store.zero_grad();
            let grads = tape.backward(loss)?;
            tape.accumulate(&grads, &mut model.store);
            adam.step(&mut model.store);
        }
        let train_mae = weighted / prepared.len() as f64 * half_span;
        let (val_mae, val_rmse, val_mape) = if val.is_empty() {
            (None, None, None)
        } else {
            let r = evaluate(model, val)?;
            (Some(r.overall.mae), Some(r.overall.rmse), r.overall.mape)
        };
        log.epochs.push(EpochLog {
            epoch,
            train_mae,
            val_mae,
            val_rmse,
            val_mape,
            seconds: start.elapsed().as_secs_f64(),
        });
        let monitored = val_mae.unwrap_or(train_mae);
        if best.as_ref().is_none_or(|(b, _)| monitored < *b) {
            best = Some((monitored, model.store.clone()));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(log)
}
