//! Sequence negative log-likelihood with Monte Carlo integral estimators.
//!
//! ```text
//! −log p(Γ) = Σ_k Σ_{n=0..N} ∫_{t_n}^{t_{n+1}} λ_k(t | H_{t_{n+1}}) dt − Σ_n log λ_{k_n}(t_n | H_{t_n})
//! ```
//!
//! with `t_0 = 0` and `t_{N+1} = T`. Inside an inter-event interval the
//! history is fixed, so each interval integral is estimated by stratified
//! sampling: `Q` equal segments, one uniform draw per segment, weight `L/Q`.
//! The draws are shared by all `K` types. The event term uses the history
//! strictly before each event, so simultaneous events do not see each other.
//!
//! The global estimator (`T · Σ_k λ_k(t̂)` with a single `t̂ ~ U[0, T]`) is
//! kept for ablations.

use crate::data::{Event, EventSequence};
use crate::diffcore::{NodeId, Tape, TapeError};
use crate::model::{IntensityModel, Link, ModelView, PhiTrace, Snmpp, TapeModel};
use crate::rng::{self, StreamRng};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Intensities below this are floored inside the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("sequence {index}: non-finite loss {value}")]
    NonFinite { index: usize, value: f64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid config: segments must be >= 1")]
    Segments,
    #[error(transparent)]
    Tape(#[from] TapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    Stratified,
    GlobalGmce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct NllConfig {
    /// Segments per inter-event interval, `Q`.
    pub segments: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl Default for NllConfig {
    fn default() -> Self {
        Self {
            segments: 4,
            seed: 0,
            estimator: Estimator::Stratified,
        }
    }
}

impl NllConfig {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        if self.segments == 0 {
            return Err(LikelihoodError::Segments);
        }
        Ok(())
    }
}

/// Per-sequence loss decomposition; `total_nll = integral_term − event_term`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct LossReport {
    pub total_nll: f64,
    pub event_term: f64,
    pub integral_term: f64,
    /// Events whose intensity fell below [`LOG_FLOOR`].
    pub floor_hits: usize,
}

impl LossReport {
    fn new(event_term: f64, integral_term: f64, floor_hits: usize) -> Self {
        Self {
            total_nll: integral_term - event_term,
            event_term,
            integral_term,
            floor_hits,
        }
    }
}

/// One uniform draw in each of `q` equal segments of `[t0, t1]`.
pub fn stratified_points(t0: f64, t1: f64, q: usize, rng: &mut StreamRng) -> impl Iterator<Item = f64> + '_ {
    let width = (t1 - t0) / q as f64;
    (0..q).map(move |i| t0 + (i as f64 + rng.gen::<f64>()) * width)
}

/// Stratified estimate of `∫_{t0}^{t1} g`. Degenerate intervals give 0
/// without consuming randomness.
pub fn stratified_integral(mut g: impl FnMut(f64) -> f64, t0: f64, t1: f64, q: usize, rng: &mut StreamRng) -> f64 {
    if !(t1 > t0) {
        return 0.0;
    }
    let w = (t1 - t0) / q as f64;
    stratified_points(t0, t1, q, rng).map(&mut g).sum::<f64>() * w
}

/// Plain Monte Carlo estimate with `n` i.i.d. uniform draws on `[t0, t1]`.
pub fn uniform_integral(mut g: impl FnMut(f64) -> f64, t0: f64, t1: f64, n: usize, rng: &mut StreamRng) -> f64 {
    let l = t1 - t0;
    (0..n).map(|_| g(t0 + l * rng.gen::<f64>())).sum::<f64>() * l / n as f64
}

/// Global single-sample estimate `(t1 − t0) · g(t̂)` with `t̂ ~ U[t0, t1]`.
pub fn global_integral(mut g: impl FnMut(f64) -> f64, t0: f64, t1: f64, rng: &mut StreamRng) -> f64 {
    let l = t1 - t0;
    l * g(t0 + l * rng.gen::<f64>())
}

/// Interval boundaries `(t_n, t_{n+1})` with the number of events in the
/// interval's history.
fn intervals(seq: &EventSequence) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
    let n = seq.events.len();
    (0..=n).map(move |i| {
        let lo = if i == 0 { 0.0 } else { seq.events[i - 1].t };
        let hi = if i == n { seq.horizon } else { seq.events[i].t };
        (lo, hi, i)
    })
}

/// For every event, the length of the history strictly before it.
fn strict_prefixes(events: &[Event]) -> impl Iterator<Item = (usize, &Event)> + '_ {
    let mut end = 0;
    events.iter().map(move |e| {
        while events[end].t < e.t {
            end += 1;
        }
        (end, e)
    })
}

/// NLL of one sequence without gradients.
pub fn sequence_nll<M: IntensityModel + ?Sized>(
    model: &M,
    seq: &EventSequence,
    config: &NllConfig,
    rng: &mut StreamRng,
) -> LossReport {
    let k = model.num_types();
    let mut floor_hits = 0;
    let event_term: f64 = strict_prefixes(&seq.events)
        .map(|(end, e)| {
            let lam = model.intensity(e.k, e.t, &seq.events[..end]);
            if lam < LOG_FLOOR {
                floor_hits += 1;
                LOG_FLOOR.ln()
            } else {
                lam.ln()
            }
        })
        .sum();

    let integral_term = match config.estimator {
        Estimator::Stratified => intervals(seq)
            .map(|(lo, hi, n)| {
                let history = &seq.events[..n];
                stratified_integral(|t| model.total_intensity(t, history), lo, hi, config.segments, rng)
            })
            .sum(),
        Estimator::GlobalGmce => global_integral(
            |t| {
                let history = seq.history_before(t);
                (0..k).map(|j| model.intensity(j, t, history)).sum::<f64>()
            },
            0.0,
            seq.horizon,
            rng,
        ),
    };
    LossReport::new(event_term, integral_term, floor_hits)
}

/// NLL with the global single-sample integral estimator.
pub fn gmce_nll<M: IntensityModel + ?Sized>(model: &M, seq: &EventSequence, rng: &mut StreamRng) -> LossReport {
    let config = NllConfig {
        estimator: Estimator::GlobalGmce,
        ..Default::default()
    };
    sequence_nll(model, seq, &config, rng)
}

struct Recorder<'a> {
    view: &'a ModelView,
    nodes: &'a TapeModel,
    link: Link,
    num_types: usize,
    tape: Tape,
    trace: PhiTrace,
}

impl Recorder<'_> {
    fn intensity(&mut self, k: usize, t: f64, history: &[Event]) -> NodeId {
        let mut acc = self.nodes.baselines[k];
        for e in history {
            let p = e.k * self.num_types + k;
            let delay = self.view.delay(e.k, k);
            let diff = t - e.t - delay;
            let (phi, dphi_du) = self.view.phi.eval_traced(p, diff.abs(), &mut self.trace);
            let du_dd = if diff > 0.0 {
                -1.0
            } else if diff < 0.0 {
                1.0
            } else {
                0.0
            };
            let node = self.tape.custom(self.nodes.delays[p], phi, dphi_du * du_dd);
            self.trace.bind(node);
            acc = self.tape.mul_add(self.nodes.psi[p], node, acc);
        }
        match self.link {
            Link::Softplus { beta } => self.tape.softplus(acc, beta),
            Link::EluPlusOne => self.tape.elu_plus_one(acc),
        }
    }
}

/// NLL of one sequence and its gradient with respect to the raw parameters.
///
/// Consumes randomness exactly like [`sequence_nll`], so the two agree on
/// the same stream.
pub fn sequence_nll_grad(
    model: &Snmpp,
    view: &ModelView,
    seq: &EventSequence,
    config: &NllConfig,
    rng: &mut StreamRng,
) -> Result<(LossReport, Vec<f64>), LikelihoodError> {
    let k = model.spec().num_types;
    let mut tape = Tape::with_capacity(4096 + 3 * seq.len() * seq.len() * (1 + k * config.segments));
    let nodes = TapeModel::record(model, &mut tape);
    let mut rec = Recorder {
        view,
        nodes: &nodes,
        link: model.spec().link,
        num_types: k,
        tape,
        trace: PhiTrace::default(),
    };

    let mut floor_hits = 0;
    let mut event_nodes = Vec::with_capacity(seq.len());
    for (end, e) in strict_prefixes(&seq.events) {
        let lam = rec.intensity(e.k, e.t, &seq.events[..end]);
        let v = rec.tape.value(lam);
        let log = if v < LOG_FLOOR {
            floor_hits += 1;
            rec.tape.constant(LOG_FLOOR.ln())
        } else {
            rec.tape.ln(lam)
        };
        event_nodes.push(log);
    }
    let event_total = rec.tape.sum(&event_nodes);

    let mut integral_nodes = Vec::new();
    match config.estimator {
        Estimator::Stratified => {
            for (lo, hi, n) in intervals(seq) {
                if !(hi > lo) {
                    continue;
                }
                let history = &seq.events[..n];
                let mut lams = Vec::with_capacity(k * config.segments);
                for t in stratified_points(lo, hi, config.segments, rng).collect::<Vec<_>>() {
                    for j in 0..k {
                        lams.push(rec.intensity(j, t, history));
                    }
                }
                let s = rec.tape.sum(&lams);
                integral_nodes.push(rec.tape.scale(s, (hi - lo) / config.segments as f64));
            }
        }
        Estimator::GlobalGmce => {
            let t = seq.horizon * rng.gen::<f64>();
            let history = seq.history_before(t);
            let lams: Vec<NodeId> = (0..k).map(|j| rec.intensity(j, t, history)).collect();
            let s = rec.tape.sum(&lams);
            integral_nodes.push(rec.tape.scale(s, seq.horizon));
        }
    }
    let integral_total = rec.tape.sum(&integral_nodes);
    let loss = rec.tape.sub(integral_total, event_total);

    let report = LossReport::new(rec.tape.value(event_total), rec.tape.value(integral_total), floor_hits);
    let adjoints = rec.tape.backward_all(loss)?;
    let mut grad = vec![0.0; model.num_params()];
    adjoints.accumulate_params(&rec.tape, &mut grad);
    view.phi
        .accumulate_gradient(model.layout(), model.store(), &rec.trace, &adjoints, &mut grad);
    Ok((report, grad))
}

/// Result of [`batch_loss_and_grad`].
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub mean_nll: f64,
    pub grad: Vec<f64>,
    pub reports: Vec<LossReport>,
}

/// Mean NLL over `batch` and its gradient.
///
/// Sequence `i` of the batch draws from the stream `(config.seed, i)`.
/// Per-sequence work runs on the rayon pool; the reduction is a sum in batch
/// order, so results do not depend on the thread count.
pub fn batch_loss_and_grad(
    model: &Snmpp,
    batch: &[&EventSequence],
    config: &NllConfig,
) -> Result<BatchLoss, LikelihoodError> {
    config.validate()?;
    if batch.is_empty() {
        return Err(LikelihoodError::EmptyBatch);
    }
    let view = model.view();
    let results: Vec<Result<(LossReport, Vec<f64>), LikelihoodError>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut rng = rng::stream(config.seed, &[i as u64]);
            sequence_nll_grad(model, &view, seq, config, &mut rng)
        })
        .collect();

    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    let mut reports = Vec::with_capacity(batch.len());
    for (index, r) in results.into_iter().enumerate() {
        let (report, g) = r?;
        if !report.total_nll.is_finite() {
            return Err(LikelihoodError::NonFinite {
                index,
                value: report.total_nll,
            });
        }
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi / n;
        }
        reports.push(report);
    }
    let mean_nll = reports.iter().map(|r| r.total_nll).sum::<f64>() / n;
    Ok(BatchLoss { mean_nll, grad, reports })
}

/// Mean NLL over `sequences` without gradients, with the same stream
/// assignment as [`batch_loss_and_grad`].
pub fn mean_nll<M: IntensityModel + Sync + ?Sized>(model: &M, sequences: &[EventSequence], config: &NllConfig) -> f64 {
    per_sequence_nll(model, sequences, config).iter().map(|r| r.total_nll).sum::<f64>() / sequences.len().max(1) as f64
}

pub fn per_sequence_nll<M: IntensityModel + Sync + ?Sized>(
    model: &M,
    sequences: &[EventSequence],
    config: &NllConfig,
) -> Vec<LossReport> {
    sequences
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut rng = rng::stream(config.seed, &[i as u64]);
            sequence_nll(model, seq, config, &mut rng)
        })
        .collect()
}
