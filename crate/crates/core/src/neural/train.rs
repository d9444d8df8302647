//! AdamW training with a one-cycle linear schedule and early stopping.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Batch, DecoderModel, Sentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Keystrokes per batch; whole sentences are packed up to this size.
    pub batch_keystrokes: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub patience: usize,
    /// Share of training sentences kept when subsampling for scaling
    /// curves; `fit` itself trains on whatever it is given.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_keystrokes: 128,
            peak_lr: 1e-4,
            warmup_fraction: 0.1,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            patience: 10,
            train_fraction: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_keystrokes == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.peak_lr > 0.0) || !(0.0..=1.0).contains(&self.warmup_fraction) || self.weight_decay < 0.0 {
            return Err(Error::Config("invalid learning-rate schedule".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!("train fraction must be in (0, 1], got {}", self.train_fraction)));
        }
        Ok(())
    }
}

/// Linear warmup to `peak` over the first `warmup` fraction of steps, then
/// linear decay to zero at `total`.
pub fn one_cycle_lr(step: usize, total: usize, peak: f64, warmup: f64) -> f64 {
    let total = total.max(1) as f64;
    let warm = (warmup * total).max(1.0);
    let s = step as f64 + 1.0;
    if s <= warm {
        peak * s / warm
    } else {
        (peak * (total - s) / (total - warm).max(1.0)).max(0.0)
    }
}

pub struct AdamW {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl AdamW {
    pub fn new(params: &[Array2<f64>], cfg: &TrainConfig) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.dim())).collect();
        AdamW {
            m: zeros(),
            v: zeros(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let upd = (*m / c1) / ((*v / c2).sqrt() + eps);
                *p -= lr * (upd + wd * *p);
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
    /// Learning rate at every optimiser step.
    pub lr_trace: Vec<f64>,
}

/// Groups whole sentences, in order, into batches of at most `max`
/// keystrokes. A longer sentence gets a batch of its own.
pub fn pack(order: &[usize], lens: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    let mut n = 0;
    for &i in order {
        if !cur.is_empty() && n + lens[i] > max {
            out.push(std::mem::take(&mut cur));
            n = 0;
        }
        cur.push(i);
        n += lens[i];
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Mean loss and accuracy over a set of sentences in eval mode.
pub fn evaluate(model: &DecoderModel, data: &[Sentence], batch_keystrokes: usize) -> Result<(f64, f64)> {
    let order: Vec<usize> = (0..data.len()).collect();
    let lens: Vec<usize> = data.iter().map(|s| s.len()).collect();
    let (mut loss, mut correct, mut n) = (0.0, 0usize, 0usize);
    for idx in pack(&order, &lens, batch_keystrokes) {
        let refs: Vec<&Sentence> = idx.iter().map(|&i| &data[i]).collect();
        let b = Batch::new(&refs);
        let (l, c) = model.evaluate(&b)?;
        loss += l * b.n_keystrokes() as f64;
        correct += c;
        n += b.n_keystrokes();
    }
    Ok((loss / n.max(1) as f64, correct as f64 / n.max(1) as f64))
}

/// Trains `model` in place and leaves the parameters of the epoch with the
/// lowest validation loss installed. A non-finite loss aborts training with
/// a numeric error after restoring the best parameters so far.
pub fn fit(model: &mut DecoderModel, train: &[Sentence], valid: &[Sentence], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    let lens: Vec<usize> = train.iter().map(|s| s.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let steps_per_epoch = pack(&order, &lens, cfg.batch_keystrokes).len();
    let total = steps_per_epoch * cfg.epochs;
    let mut opt = AdamW::new(&model.params.values, cfg);
    let mut log = TrainLog {
        best_valid_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = model.params.values.clone();
    let mut since_best = 0;
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0, 0usize);
        let mut lr = 0.0;
        for idx in pack(&order, &lens, cfg.batch_keystrokes) {
            let refs: Vec<&Sentence> = idx.iter().map(|&i| &train[i]).collect();
            let b = Batch::new(&refs);
            let (loss, grads) = match model.loss_and_grad(&b, Some(&mut rng)) {
                Ok(x) => x,
                Err(e) => {
                    model.params.values = best;
                    return Err(match e {
                        Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, step {step}: {m}")),
                        other => other,
                    });
                }
            };
            lr = one_cycle_lr(step, total, cfg.peak_lr, cfg.warmup_fraction);
            log.lr_trace.push(lr);
            opt.step(&mut model.params.values, &grads, lr);
            sum += loss * b.n_keystrokes() as f64;
            n += b.n_keystrokes();
            step += 1;
        }
        let (valid_loss, valid_accuracy) = evaluate(model, valid, cfg.batch_keystrokes)?;
        if !valid_loss.is_finite() {
            model.params.values = best;
            return Err(Error::Numeric(format!("validation loss {valid_loss} at epoch {epoch}")));
        }
        let train_loss = sum / n as f64;
        log::info!("epoch {epoch}: train {train_loss:.4} valid {valid_loss:.4} acc {valid_accuracy:.3} lr {lr:.2e}");
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
            valid_accuracy,
            lr,
        });
        if valid_loss < log.best_valid_loss {
            log.best_valid_loss = valid_loss;
            log.best_epoch = epoch;
            best = model.params.values.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.params.values = best;
    Ok(log)
}
