//! Ground-truth event generators.
//!
//! Intensity-defined processes are sampled by Ogata thinning against a
//! piecewise dominating bound; the supply-chain generator is a direct
//! discrete-event simulation of a hidden inventory.

mod bump;
mod supply;

pub use bump::{pp1_process, pp2_process, BumpEffect, DelayedBumpProcess};
pub use supply::{supply_chain_sample, SupplyChainConfig, SUPPLY_CHAIN_MARKS};

use crate::data::{save_jsonl, DataError, Event, EventSequence, Manifest};
use crate::model::IntensityModel;
use crate::rng::{self, StreamRng};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimulateError {
    #[error("bound violation at t={t}: total intensity {intensity} exceeds bound {bound}")]
    BoundViolation { t: f64, intensity: f64, bound: f64 },
    #[error("invalid bound {bound} with window {window} at t={t}")]
    InvalidBound { t: f64, bound: f64, window: f64 },
    #[error("invalid config: {0}")]
    Config(String),
}

/// An intensity-defined process on `[0, T)` with a dominating bound.
pub trait GroundTruthProcess: IntensityModel + Sync {
    fn horizon(&self) -> f64;

    /// `(B, w)` such that `Σ_k λ_k(s | history) ≤ B` for every
    /// `s ∈ [t, t + w]` as long as no event is added. `w` may be infinite.
    fn upper_bound(&self, t: f64, history: &[Event]) -> (f64, f64);
}

/// Ogata thinning.
///
/// Candidates are proposed from a homogeneous process at rate `B`; a
/// candidate at `s` is kept with probability `Σ_k λ_k(s) / B` and given type
/// `k` with probability `λ_k(s) / Σ_k λ_k(s)`. When no candidate falls in
/// the bound's window the clock moves to the window end and a new bound is
/// computed.
pub fn thinning_sample<P: GroundTruthProcess + ?Sized>(process: &P, rng: &mut StreamRng) -> Result<EventSequence, SimulateError> {
    let horizon = process.horizon();
    let k = process.num_types();
    let mut events: Vec<Event> = Vec::new();
    let mut t = 0.0;
    let mut rates = vec![0.0; k];
    while t < horizon {
        let (bound, window) = process.upper_bound(t, &events);
        if !(bound >= 0.0 && window > 0.0) || bound.is_nan() {
            return Err(SimulateError::InvalidBound { t, bound, window });
        }
        let end = (t + window).min(horizon);
        if bound == 0.0 {
            t = end;
            continue;
        }
        let candidate = t + Exp::new(bound).unwrap().sample(rng);
        if candidate > end {
            t = end;
            continue;
        }
        t = candidate;
        if t >= horizon {
            break;
        }
        let mut total = 0.0;
        for (j, r) in rates.iter_mut().enumerate() {
            *r = process.intensity(j, t, &events);
            total += *r;
        }
        if total > bound * (1.0 + 1e-12) {
            return Err(SimulateError::BoundViolation {
                t,
                intensity: total,
                bound,
            });
        }
        let u = rng.gen::<f64>() * bound;
        if u < total {
            let mut acc = 0.0;
            let mut mark = k - 1;
            for (j, r) in rates.iter().enumerate() {
                acc += r;
                if u < acc {
                    mark = j;
                    break;
                }
            }
            events.push(Event::new(t, mark));
        }
    }
    Ok(EventSequence::new(horizon, events))
}

/// Independent homogeneous Poisson streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homogeneous {
    pub rates: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl IntensityModel for Homogeneous {
    fn num_types(&self) -> usize {
        self.rates.len()
    }

    fn intensity(&self, k: usize, _t: f64, _history: &[Event]) -> f64 {
        self.rates[k]
    }
}

impl GroundTruthProcess for Homogeneous {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn upper_bound(&self, _t: f64, _history: &[Event]) -> (f64, f64) {
        (self.rates.iter().sum(), f64::INFINITY)
    }
}

/// A named dataset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "generator", content = "config")]
pub enum Generator {
    Pp1,
    Pp2,
    Homogeneous(Homogeneous),
    SupplyChain(SupplyChainConfig),
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Pp1 => "pp1",
            Generator::Pp2 => "pp2",
            Generator::Homogeneous(_) => "homogeneous",
            Generator::SupplyChain(_) => "supply-chain",
        }
    }

    pub fn num_types(&self) -> usize {
        match self {
            Generator::Pp1 | Generator::Pp2 => 2,
            Generator::Homogeneous(h) => h.rates.len(),
            Generator::SupplyChain(_) => SUPPLY_CHAIN_MARKS.len(),
        }
    }

    pub fn mark_names(&self) -> Vec<String> {
        match self {
            Generator::SupplyChain(_) => SUPPLY_CHAIN_MARKS.iter().map(|s| s.to_string()).collect(),
            _ => (1..=self.num_types()).map(|i| format!("E{i}")).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        match self {
            Generator::Homogeneous(h) => {
                if h.rates.is_empty() || h.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                    return Err(SimulateError::Config("rates must be finite and non-negative".into()));
                }
                if !(h.horizon.is_finite() && h.horizon > 0.0) {
                    return Err(SimulateError::Config("horizon must be > 0".into()));
                }
                Ok(())
            }
            Generator::SupplyChain(c) => c.validate(),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<EventSequence, SimulateError> {
        match self {
            Generator::Pp1 => thinning_sample(&pp1_process(), rng),
            Generator::Pp2 => thinning_sample(&pp2_process(), rng),
            Generator::Homogeneous(h) => thinning_sample(h, rng),
            Generator::SupplyChain(c) => Ok(supply_chain_sample(c, rng)),
        }
    }

    /// Configuration as stored in the manifest.
    pub fn config_json(&self) -> serde_json::Value {
        match self {
            Generator::Pp1 | Generator::Pp2 => serde_json::Value::Null,
            Generator::Homogeneous(h) => serde_json::to_value(h).unwrap(),
            Generator::SupplyChain(c) => serde_json::to_value(c).unwrap(),
        }
    }
}

/// Train and validation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<EventSequence>,
    pub val: Vec<EventSequence>,
}

const TRAIN_SPLIT: u64 = 0;
const VAL_SPLIT: u64 = 1;

/// `n` sequences; sequence `i` draws from stream `(seed, split, i)`.
pub fn sample_many(generator: &Generator, n: usize, seed: u64, split: u64) -> Result<Vec<EventSequence>, SimulateError> {
    generator.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| generator.sample(&mut rng::stream(seed, &[split, i as u64])))
        .collect()
}

pub fn generate_dataset(generator: &Generator, n_train: usize, n_val: usize, seed: u64) -> Result<Dataset, SimulateError> {
    if n_train == 0 || n_val == 0 {
        return Err(SimulateError::Config("sequence counts must be > 0".into()));
    }
    Ok(Dataset {
        train: sample_many(generator, n_train, seed, TRAIN_SPLIT)?,
        val: sample_many(generator, n_val, seed, VAL_SPLIT)?,
    })
}

pub fn manifest(generator: &Generator, n_train: usize, n_val: usize, seed: u64) -> Manifest {
    Manifest {
        num_types: generator.num_types(),
        generator: generator.name().to_string(),
        config: generator.config_json(),
        seed,
        n_train,
        n_val,
        mark_names: generator.mark_names(),
    }
}

/// Write `train.jsonl`, `val.jsonl` and `manifest.json` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, generator: &Generator, dataset: &Dataset, seed: u64) -> Result<(), DataError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_jsonl(dir.join("train.jsonl"), &dataset.train)?;
    save_jsonl(dir.join("val.jsonl"), &dataset.val)?;
    manifest(generator, dataset.train.len(), dataset.val.len(), seed).save(dir.join("manifest.json"))
}
