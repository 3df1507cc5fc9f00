//! Next-event prediction and evaluation metrics.
//!
//! The expected next time after the last event `t_N` is
//!
//! ```text
//! t̂ = t_N + ∫_0^H exp(−Λ(τ)) dτ,   Λ(τ) = ∫_0^τ Σ_k λ_k(t_N + u | H) du
//! ```
//!
//! truncated at `H = multiplier × mean gap`. `Λ` is accumulated by the
//! trapezoid rule on an inner grid and interpolated linearly onto the
//! outer grid used for the survival integral. The type is the argmax of
//! `λ_k(t̂)`.

use crate::data::{Event, EventSequence};
use crate::model::IntensityModel;
use crate::rng;
use crate::simulate::Homogeneous;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("non-finite intensity {value} at t={t} (history of {history_len} events, last at {last})")]
    NonFinite { t: f64, value: f64, history_len: usize, last: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty test set")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PredictConfig {
    /// Truncation horizon in units of the mean inter-event time.
    pub multiplier: f64,
    pub inner_points: usize,
    pub outer_points: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            multiplier: 10.0,
            inner_points: 256,
            outer_points: 256,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        if !(self.multiplier.is_finite() && self.multiplier > 0.0) {
            return Err(PredictError::Config("multiplier must be > 0".into()));
        }
        if self.inner_points < 2 || self.outer_points < 2 {
            return Err(PredictError::Config("grids need at least 2 points".into()));
        }
        Ok(())
    }
}

fn trapezoid_cumulative(values: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Linear interpolation of `ys` (on a uniform grid over `[0, span]`) at `x`.
fn interpolate(ys: &[f64], span: f64, x: f64) -> f64 {
    let n = ys.len() - 1;
    let pos = (x / span * n as f64).clamp(0.0, n as f64);
    let i = (pos.floor() as usize).min(n - 1);
    let f = pos - i as f64;
    ys[i] * (1.0 - f) + ys[i + 1] * f
}

/// Truncated expected waiting time `∫_0^H exp(−Λ(τ)) dτ` after `t0`.
pub fn expected_wait<M: IntensityModel + ?Sized>(
    model: &M,
    t0: f64,
    history: &[Event],
    horizon: f64,
    config: &PredictConfig,
) -> Result<f64, PredictError> {
    let n_in = config.inner_points;
    let step = horizon / (n_in - 1) as f64;
    let mut rates = Vec::with_capacity(n_in);
    for i in 0..n_in {
        let t = t0 + step * i as f64;
        let value = model.total_intensity(t, history);
        if !value.is_finite() {
            return Err(PredictError::NonFinite {
                t,
                value,
                history_len: history.len(),
                last: t0,
            });
        }
        rates.push(value);
    }
    let cumulative = trapezoid_cumulative(&rates, step);
    let n_out = config.outer_points;
    let outer_step = horizon / (n_out - 1) as f64;
    let survival: Vec<f64> = (0..n_out)
        .map(|j| (-interpolate(&cumulative, horizon, outer_step * j as f64)).exp())
        .collect();
    Ok(*trapezoid_cumulative(&survival, outer_step).last().unwrap())
}

/// `t̂`: the expected next event time after the last event of `history`
/// (or after 0 when empty).
pub fn expected_next_time<M: IntensityModel + ?Sized>(
    model: &M,
    history: &[Event],
    mean_gap: f64,
    config: &PredictConfig,
) -> Result<f64, PredictError> {
    let t0 = history.last().map_or(0.0, |e| e.t);
    Ok(t0 + expected_wait(model, t0, history, config.multiplier * mean_gap, config)?)
}

/// `argmax_k λ_k(t | history)`, smallest index on ties.
pub fn predict_type<M: IntensityModel + ?Sized>(model: &M, history: &[Event], t: f64) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for k in 0..model.num_types() {
        let v = model.intensity(k, t, history);
        if v > best_value {
            best = k;
            best_value = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventPrediction {
    pub seq: usize,
    pub idx: usize,
    pub t_true: f64,
    pub t_pred: f64,
    pub k_true: usize,
    pub k_pred: usize,
}

impl EventPrediction {
    pub fn residual(&self) -> f64 {
        self.t_pred - self.t_true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub time_rmse: f64,
    pub type_error_rate: f64,
    pub n_events: usize,
    /// Sequences without events.
    pub skipped: usize,
    #[serde(skip)]
    pub predictions: Vec<EventPrediction>,
}

impl EvalReport {
    pub fn from_predictions(predictions: Vec<EventPrediction>, skipped: usize) -> Self {
        let n = predictions.len();
        let (sq, wrong) = predictions
            .iter()
            .fold((0.0, 0usize), |(s, w), p| (s + p.residual().powi(2), w + (p.k_pred != p.k_true) as usize));
        Self {
            time_rmse: if n > 0 { (sq / n as f64).sqrt() } else { 0.0 },
            type_error_rate: if n > 0 { wrong as f64 / n as f64 } else { 0.0 },
            n_events: n,
            skipped,
            predictions,
        }
    }
}

/// Predictions for every event of one sequence from its true prefix; the
/// first event is predicted from `t = 0` with an empty history.
pub fn predict_sequence<M: IntensityModel + ?Sized>(
    model: &M,
    seq: &EventSequence,
    seq_index: usize,
    mean_gap: f64,
    config: &PredictConfig,
) -> Result<Vec<EventPrediction>, PredictError> {
    seq.events
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            let history = &seq.events[..idx];
            let t_pred = expected_next_time(model, history, mean_gap, config)?;
            Ok(EventPrediction {
                seq: seq_index,
                idx,
                t_true: e.t,
                t_pred,
                k_true: e.k,
                k_pred: predict_type(model, history, t_pred),
            })
        })
        .collect()
}

pub fn evaluate<M: IntensityModel + Sync + ?Sized>(
    model: &M,
    sequences: &[EventSequence],
    mean_gap: f64,
    config: &PredictConfig,
) -> Result<EvalReport, PredictError> {
    config.validate()?;
    if sequences.is_empty() {
        return Err(PredictError::Empty);
    }
    if !(mean_gap.is_finite() && mean_gap > 0.0) {
        return Err(PredictError::Config(format!("mean gap must be > 0, got {mean_gap}")));
    }
    let per_seq: Vec<Vec<EventPrediction>> = sequences
        .par_iter()
        .enumerate()
        .map(|(i, s)| predict_sequence(model, s, i, mean_gap, config))
        .collect::<Result<_, _>>()?;
    let skipped = sequences.iter().filter(|s| s.is_empty()).count();
    Ok(EvalReport::from_predictions(per_seq.into_iter().flatten().collect(), skipped))
}

/// Maximum-likelihood constant rates: events of each type per unit time,
/// pooled over `sequences`.
pub fn constant_baseline(sequences: &[EventSequence], num_types: usize) -> Homogeneous {
    let exposure: f64 = sequences.iter().map(|s| s.horizon).sum();
    let mut counts = vec![0usize; num_types];
    for e in sequences.iter().flat_map(|s| &s.events) {
        counts[e.k] += 1;
    }
    Homogeneous {
        rates: counts.iter().map(|&c| c as f64 / exposure).collect(),
        horizon: sequences.iter().map(|s| s.horizon).fold(0.0, f64::max),
    }
}

pub fn write_predictions_csv<W: Write>(mut w: W, predictions: &[EventPrediction]) -> io::Result<()> {
    writeln!(w, "seq,idx,t_true,t_pred,k_true,k_pred")?;
    for p in predictions {
        writeln!(w, "{},{},{},{},{},{}", p.seq, p.idx, p.t_true, p.t_pred, p.k_true, p.k_pred)?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

/// Percentile bootstrap interval of `statistic` over resamples of `units`.
pub fn bootstrap_ci<T: Sync>(
    units: &[T],
    statistic: impl Fn(&[&T]) -> f64 + Sync,
    resamples: usize,
    level: f64,
    seed: u64,
) -> ConfidenceInterval {
    let all: Vec<&T> = units.iter().collect();
    let estimate = statistic(&all);
    let mut stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, &[b as u64]);
            let sample: Vec<&T> = (0..units.len()).map(|_| &units[r.gen_range(0..units.len())]).collect();
            statistic(&sample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| stats[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    ConfidenceInterval {
        estimate,
        lower: pick(tail),
        upper: pick(1.0 - tail),
    }
}
