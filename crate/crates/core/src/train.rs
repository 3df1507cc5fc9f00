//! Mini-batch training loop.

use crate::data::EventSequence;
use crate::diffcore::{adamw_step, OptimError, OptimizerConfig};
use crate::likelihood::{batch_loss_and_grad, mean_nll, LikelihoodError, NllConfig};
use crate::model::Snmpp;
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("empty validation set")]
    EmptyVal,
    #[error("cosine final fraction must lie in (0, 1], got {0}")]
    Schedule(f64),
    #[error(transparent)]
    Optimizer(#[from] OptimError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainConfig {
    pub nll: NllConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
}

/// Learning-rate multiplier over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from 1 down to `final-fraction` at the last step of the epoch budget.
    Cosine {
        #[serde(rename = "final-fraction")]
        final_fraction: f64,
    },
}

impl LrSchedule {
    pub fn factor(&self, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { final_fraction } => {
                let p = if total <= 1 { 1.0 } else { (step as f64 / (total - 1) as f64).min(1.0) };
                final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            nll: NllConfig::default(),
            optimizer: OptimizerConfig::default(),
            epochs: 100,
            patience: 15,
            seed: 0,
            schedule: LrSchedule::Constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub wall_seconds: f64,
    #[serde(skip)]
    pub batch_nll: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Budget,
    EarlyStop,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation NLL seen.
    pub best: Snmpp,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

const VAL_STREAM: u64 = 0x0076_616c;

/// Validation NLL with a fixed sampling stream so epochs are comparable.
pub fn validation_nll(model: &Snmpp, val: &[EventSequence], config: &TrainConfig) -> f64 {
    let nll = NllConfig {
        seed: rng::derive_seed(config.seed, &[VAL_STREAM]),
        ..config.nll.clone()
    };
    mean_nll(&model.view(), val, &nll)
}

/// Train `model` in place; `on_epoch` sees every record as it is produced.
///
/// Batch `b` of epoch `e` samples its integral estimates from the stream
/// `(seed, e, b)`. A non-finite loss or gradient ends training with
/// [`StopReason::Diverged`] and keeps the best parameters so far.
pub fn train(
    model: &mut Snmpp,
    train_set: &[EventSequence],
    val_set: &[EventSequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.nll.validate()?;
    config.optimizer.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyVal);
    }
    let start = Instant::now();
    let mut best = model.clone();
    let mut best_val = validation_nll(model, val_set, config);
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stop = StopReason::Budget;
    let per_epoch = train_set.len().div_ceil(config.optimizer.batch_size);
    let total_steps = per_epoch * config.epochs;
    let mut step_idx = 0;
    if let LrSchedule::Cosine { final_fraction } = config.schedule {
        if !(final_fraction > 0.0 && final_fraction <= 1.0) {
            return Err(TrainError::Schedule(final_fraction));
        }
    }

    'epochs: for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream(config.seed, &[epoch as u64, 0]));
        let mut batch_nll = Vec::new();
        for (b, chunk) in order.chunks(config.optimizer.batch_size).enumerate() {
            let batch: Vec<&EventSequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let nll = NllConfig {
                seed: rng::derive_seed(config.seed, &[epoch as u64, 1 + b as u64]),
                ..config.nll.clone()
            };
            let step = match batch_loss_and_grad(model, &batch, &nll) {
                Ok(s) => s,
                Err(LikelihoodError::NonFinite { .. }) => {
                    stop = StopReason::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            };
            let optimizer = OptimizerConfig {
                learning_rate: config.optimizer.learning_rate * config.schedule.factor(step_idx, total_steps),
                ..config.optimizer.clone()
            };
            step_idx += 1;
            match adamw_step(model.store_mut(), &step.grad, &optimizer) {
                Ok(()) => {}
                Err(OptimError::NonFiniteGradient { .. }) => {
                    stop = StopReason::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            }
            batch_nll.push(step.mean_nll);
        }
        let val_nll = validation_nll(model, val_set, config);
        if !val_nll.is_finite() {
            stop = StopReason::Diverged;
            break;
        }
        let record = EpochRecord {
            epoch,
            train_nll: batch_nll.iter().sum::<f64>() / batch_nll.len() as f64,
            val_nll,
            wall_seconds: start.elapsed().as_secs_f64(),
            batch_nll,
        };
        on_epoch(&record);
        history.push(record);
        if val_nll < best_val {
            best_val = val_nll;
            best_epoch = epoch;
            best = model.clone();
        } else if epoch - best_epoch >= config.patience {
            stop = StopReason::EarlyStop;
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_nll: best_val,
        history,
        stop,
    })
}
