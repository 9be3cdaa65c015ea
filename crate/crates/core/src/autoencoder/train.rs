use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::{AutoencoderModel, LossSum};
use crate::error::{Error, Result};
use crate::kernel::{seeded_rng, AdamConfig, AdamState};
use crate::text::{TokenSequence, PAD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 48,
            lr: 0.0004,
            patience: 3,
            max_epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Halts after `patience` consecutive epochs without a strictly lower dev loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, dev_loss: f64) -> StopDecision {
        if dev_loss < self.best {
            self.best = dev_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-token loss over the epoch's mini-batches.
    pub train_loss: f64,
    /// Mean per-token loss on the development set after the epoch.
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    /// `epoch<TAB>train_loss<TAB>dev_loss` per line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.epochs {
            writeln!(s, "{}\t{:.8}\t{:.8}", r.epoch, r.train_loss, r.dev_loss).expect("string write");
        }
        s
    }

    /// Best dev loss seen up to and including each epoch.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.epochs
            .iter()
            .map(|r| {
                best = best.min(r.dev_loss);
                best
            })
            .collect()
    }
}

fn real_tokens(seqs: &[&TokenSequence]) -> usize {
    seqs.iter().map(|s| s.ids.iter().filter(|&&i| i != PAD).count()).sum()
}

fn has_real_token(s: &TokenSequence) -> bool {
    s.ids.iter().any(|&i| i != PAD)
}

/// Mean per-token loss over `seqs`, evaluated in batches.
pub(crate) fn mean_loss(model: &AutoencoderModel, seqs: &[&TokenSequence], batch: usize) -> Result<f64> {
    let mut total = LossSum::default();
    for chunk in seqs.chunks(batch.max(1)) {
        total.merge(model.batch_loss(chunk)?);
    }
    Ok(total.mean())
}

/// Trains with shuffled mini-batches and Adam, evaluating the development set
/// after every epoch. Returns the parameters of the best development epoch.
pub fn train(
    model: AutoencoderModel,
    corpus: &[TokenSequence],
    dev: &[TokenSequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(AutoencoderModel, TrainLog)> {
    if cfg.batch_size == 0 || cfg.patience == 0 {
        return Err(Error::InvalidArgument("batch_size and patience must be >= 1".into()));
    }
    let corpus: Vec<&TokenSequence> = corpus.iter().filter(|s| has_real_token(s)).collect();
    let dev: Vec<&TokenSequence> = dev.iter().filter(|s| has_real_token(s)).collect();
    if corpus.is_empty() || dev.is_empty() {
        return Err(Error::InvalidArgument("training and development sets must be non-empty".into()));
    }

    let mut model = model;
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(model.params(), adam_cfg);
    let mut rng = seeded_rng(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut log = TrainLog::default();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LossSum::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TokenSequence> = chunk.iter().map(|&i| corpus[i]).collect();
            let tokens = real_tokens(&batch);
            let (loss, grads) = model.batch_loss_and_grad(&batch, 1.0 / tokens as f64)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            adam.step(model.params_mut(), &grads)?;
            if !model.params().all_finite() {
                return Err(Error::NonFinite(format!("parameters after update at epoch {epoch}")));
            }
            epoch_loss.merge(loss);
        }
        let dev_loss = mean_loss(&model, &dev, cfg.batch_size)?;
        if !dev_loss.is_finite() {
            return Err(Error::NonFinite(format!("development loss at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss.mean(),
            dev_loss,
        };
        on_epoch(&record);
        log.epochs.push(record);
        match stopper.observe(epoch, dev_loss) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                log.stopped_early = true;
                break;
            }
        }
    }
    log.best_epoch = stopper.best_epoch();
    Ok((best, log))
}
