//! The structured neural marked point process.
//!
//! ```text
//! λ_k(t | H_t) = σ( α_k + Σ_{t_n < t} f_{k_n→k}(t − t_n) )
//! f_{s→k}(Δt)  = ψ(e_s, e_k) · φ(e_s, e_k, |Δt − d_{s,k}|)
//! ```
//!
//! [`Snmpp`] owns the [`ModelSpec`] and the parameters. [`ModelView`] is the model
//! resolved at a parameter snapshot (ψ matrix, delays, constrained φ
//! weights) and is what every hot loop evaluates. [`TapeModel`] is the same
//! snapshot recorded on a [`Tape`] for gradients.

pub mod export;
pub mod layout;
pub mod phi;
pub mod psi;
pub mod softclip;
pub mod spec;

pub use export::{default_lag_grid, intensity_curve, kernel_curves, lag_grid, write_intensity_csv, write_kernel_csv, IntensityPoint, KernelCurve};
pub use layout::ModelLayout;
pub use phi::{PhiNet, PhiTrace};
pub use softclip::{hard_clip, soft_clip, soft_clip_grad};
pub use spec::{Link, ModelSpec, SpecError};

use crate::data::Event;
use crate::diffcore::{
    read_checkpoint, softplus, write_checkpoint, CheckpointError, NodeId, ParamStore, Tape,
};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("parameter layout does not match the model spec")]
    LayoutMismatch,
    #[error("history event at t = {event} is not strictly before t = {t}")]
    FutureHistory { event: f64, t: f64 },
    #[error("mark {k} out of range for {num_types} types")]
    Mark { k: usize, num_types: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that yields conditional intensities: the learned model, a
/// ground-truth process, a constant-rate baseline.
pub trait IntensityModel {
    fn num_types(&self) -> usize;

    /// `λ_k(t)` given `history`, whose events all satisfy `t_i ≤ t`.
    fn intensity(&self, k: usize, t: f64, history: &[Event]) -> f64;

    fn total_intensity(&self, t: f64, history: &[Event]) -> f64 {
        (0..self.num_types()).map(|k| self.intensity(k, t, history)).sum()
    }
}

/// Metadata stored in a checkpoint header next to the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CheckpointMeta {
    pub model: ModelSpec,
    /// Pooled mean gap of the training data, used for prediction horizons.
    #[serde(default)]
    pub mean_inter_event_time: Option<f64>,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snmpp {
    spec: ModelSpec,
    layout: ModelLayout,
    store: ParamStore,
}

impl Snmpp {
    /// Randomly initialized model.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let layout = ModelLayout::new(&spec);
        let store = layout.init(&spec, seed);
        Ok(Self { spec, layout, store })
    }

    pub(crate) fn from_parts(spec: ModelSpec, layout: ModelLayout, store: ParamStore) -> Self {
        Self { spec, layout, store }
    }

    pub fn from_store(spec: ModelSpec, store: ParamStore) -> Result<Self, ModelError> {
        spec.validate()?;
        let layout = ModelLayout::new(&spec);
        if store.layout() != &layout.params {
            return Err(ModelError::LayoutMismatch);
        }
        Ok(Self { spec, layout, store })
    }

    /// Model whose influence vanishes (ψ ≡ 0) with per-type constant rates.
    pub fn constant_rates(spec: ModelSpec, rates: &[f64]) -> Result<Self, ModelError> {
        let mut model = Self::new(spec, 0)?;
        if rates.len() != model.spec.num_types {
            return Err(ModelError::Mark {
                k: rates.len(),
                num_types: model.spec.num_types,
            });
        }
        let layout = model.layout.clone();
        let raw = model.store.raw_mut();
        for d in &layout.psi {
            raw[d.weight.clone()].iter_mut().for_each(|w| *w = 0.0);
            raw[d.bias.clone()].iter_mut().for_each(|b| *b = 0.0);
        }
        for (k, &r) in rates.iter().enumerate() {
            raw[layout.baselines.start + k] = model.spec.link.inverse(r);
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_params(&self) -> usize {
        self.store.len()
    }

    /// Pre-link baseline `α_k`.
    pub fn baseline(&self, k: usize) -> f64 {
        self.store.raw()[self.layout.baselines.start + k]
    }

    /// Intensity with empty history, `σ(α_k)`.
    pub fn base_intensity(&self, k: usize) -> f64 {
        self.spec.link.apply(self.baseline(k))
    }

    pub fn delay(&self, src: usize, tgt: usize) -> f64 {
        softplus(self.store.raw()[self.layout.delay_raw.start + self.spec.pair(src, tgt)], 1.0)
    }

    pub fn psi(&self, src: usize, tgt: usize) -> f64 {
        psi::psi(&self.spec, &self.layout, &self.store, src, tgt)
    }

    pub fn view(&self) -> ModelView {
        let k = self.spec.num_types;
        let pairs = (0..k).flat_map(|s| (0..k).map(move |t| (s, t)));
        ModelView {
            num_types: k,
            link: self.spec.link,
            baselines: (0..k).map(|i| self.baseline(i)).collect(),
            delays: pairs.clone().map(|(s, t)| self.delay(s, t)).collect(),
            psi: pairs.map(|(s, t)| self.psi(s, t)).collect(),
            phi: PhiNet::new(&self.spec, &self.layout, &self.store),
        }
    }

    /// `λ_k(t | history)`, requiring every history event strictly before `t`.
    pub fn intensity(&self, k: usize, t: f64, history: &[Event]) -> Result<f64, ModelError> {
        let num_types = self.spec.num_types;
        if k >= num_types {
            return Err(ModelError::Mark { k, num_types });
        }
        if let Some(e) = history.iter().find(|e| e.t >= t) {
            return Err(ModelError::FutureHistory { event: e.t, t });
        }
        if let Some(e) = history.iter().find(|e| e.k >= num_types) {
            return Err(ModelError::Mark { k: e.k, num_types });
        }
        Ok(self.view().intensity(k, t, history))
    }

    /// Baselines, delays and interaction strengths as plain numbers.
    pub fn recovered(&self) -> RecoveredParams {
        let k = self.spec.num_types;
        let matrix = |f: &dyn Fn(usize, usize) -> f64| (0..k).map(|s| (0..k).map(|t| f(s, t)).collect()).collect();
        RecoveredParams {
            base_intensity: (0..k).map(|i| self.base_intensity(i)).collect(),
            baseline_pre_link: (0..k).map(|i| self.baseline(i)).collect(),
            delays: matrix(&|s, t| self.delay(s, t)),
            psi: matrix(&|s, t| self.psi(s, t)),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, mean_gap: Option<f64>, extra: serde_json::Value) -> Result<(), ModelError> {
        let meta = CheckpointMeta {
            model: self.spec.clone(),
            mean_inter_event_time: mean_gap,
            extra,
        };
        write_checkpoint(BufWriter::new(File::create(path)?), &self.store, serde_json::to_value(meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointMeta), ModelError> {
        let (header, store) = read_checkpoint(BufReader::new(File::open(path)?))?;
        let meta: CheckpointMeta = serde_json::from_value(header.meta)?;
        Ok((Self::from_store(meta.model.clone(), store)?, meta))
    }
}

/// Interpretable parameters; matrices are indexed `[src][tgt]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RecoveredParams {
    /// `σ(α_k)`, the intensity with empty history.
    pub base_intensity: Vec<f64>,
    pub baseline_pre_link: Vec<f64>,
    pub delays: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

/// The model resolved at one parameter snapshot.
#[derive(Debug, Clone)]
pub struct ModelView {
    num_types: usize,
    link: Link,
    baselines: Vec<f64>,
    delays: Vec<f64>,
    psi: Vec<f64>,
    pub phi: PhiNet,
}

impl ModelView {
    #[inline]
    fn pair(&self, src: usize, tgt: usize) -> usize {
        src * self.num_types + tgt
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn baseline(&self, k: usize) -> f64 {
        self.baselines[k]
    }

    pub fn delay(&self, src: usize, tgt: usize) -> f64 {
        self.delays[self.pair(src, tgt)]
    }

    pub fn psi(&self, src: usize, tgt: usize) -> f64 {
        self.psi[self.pair(src, tgt)]
    }

    pub fn phi(&self, src: usize, tgt: usize, u: f64) -> f64 {
        self.phi.eval(self.pair(src, tgt), u)
    }

    /// Signed kernel `f_{src→tgt}(Δt)`.
    pub fn influence(&self, src: usize, tgt: usize, dt: f64) -> f64 {
        let p = self.pair(src, tgt);
        self.psi[p] * self.phi.eval(p, (dt - self.delays[p]).abs())
    }

    /// `α_k + Σ f_{k_n→k}(t − t_n)` over `history`.
    pub fn pre_link(&self, k: usize, t: f64, history: &[Event]) -> f64 {
        history.iter().fold(self.baselines[k], |acc, e| {
            let p = self.pair(e.k, k);
            let psi = self.psi[p];
            if psi == 0.0 {
                acc
            } else {
                acc + psi * self.phi.eval(p, (t - e.t - self.delays[p]).abs())
            }
        })
    }
}

impl IntensityModel for ModelView {
    fn num_types(&self) -> usize {
        self.num_types
    }

    fn intensity(&self, k: usize, t: f64, history: &[Event]) -> f64 {
        self.link.apply(self.pre_link(k, t, history))
    }
}

/// Model quantities recorded on a tape as differentiable nodes.
#[derive(Debug, Clone)]
pub struct TapeModel {
    pub baselines: Vec<NodeId>,
    pub delays: Vec<NodeId>,
    pub psi: Vec<NodeId>,
}

impl TapeModel {
    pub fn record(model: &Snmpp, tape: &mut Tape) -> Self {
        let layout = &model.layout;
        let raw = model.store.raw();
        let baselines = layout.baselines.clone().map(|i| tape.param(i, raw[i])).collect();
        let delays = layout
            .delay_raw
            .clone()
            .map(|i| {
                let r = tape.param(i, raw[i]);
                tape.softplus(r, 1.0)
            })
            .collect();
        let emb = psi::record_embeddings(layout, &model.store, tape);
        let psi = psi::record_psi_matrix(&model.spec, layout, &model.store, &emb, tape);
        Self { baselines, delays, psi }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(k: usize, seed: u64) -> Snmpp {
        Snmpp::new(ModelSpec::new(k, Link::synthetic()), seed).unwrap()
    }

    #[test]
    fn empty_history_intensity_is_linked_baseline() {
        let mut m = model(2, 1);
        let b = m.layout.baselines.start;
        m.store.raw_mut()[b] = 0.5;
        let lam = m.intensity(0, 1.0, &[]).unwrap();
        assert!((lam - softplus(0.5, 10.0)).abs() < 1e-15);
        assert!((lam - 0.5007).abs() < 1e-4);

        let mut e = Snmpp::new(ModelSpec::new(1, Link::EluPlusOne), 1).unwrap();
        let b = e.layout.baselines.start;
        e.store.raw_mut()[b] = 0.0;
        assert_eq!(e.intensity(0, 3.0, &[]).unwrap(), 1.0);
    }

    #[test]
    fn intensity_rejects_future_history() {
        let m = model(2, 1);
        let h = [Event::new(1.0, 0), Event::new(2.0, 1)];
        assert!(matches!(m.intensity(0, 2.0, &h), Err(ModelError::FutureHistory { .. })));
        assert!(m.intensity(0, 2.0001, &h).is_ok());
        assert!(matches!(m.intensity(5, 3.0, &h), Err(ModelError::Mark { .. })));
    }

    #[test]
    fn constant_rate_model() {
        let m = Snmpp::constant_rates(ModelSpec::new(2, Link::synthetic()), &[0.2, 0.7]).unwrap();
        let v = m.view();
        let h = [Event::new(0.5, 0), Event::new(0.9, 1)];
        assert!((v.intensity(0, 1.3, &h) - 0.2).abs() < 1e-12);
        assert!((v.intensity(1, 1.3, &h) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_phi_weights_give_constant_phi() {
        let mut m = model(2, 4);
        let layout = m.layout.clone();
        for d in &layout.phi {
            m.store.raw_mut()[d.weight.clone()].iter_mut().for_each(|w| *w = -800.0);
        }
        let v = m.view();
        let at0 = v.phi(0, 1, 0.0);
        for u in [0.1, 1.0, 10.0, 100.0] {
            assert_eq!(v.phi(0, 1, u), at0);
        }
    }

    #[test]
    fn influence_peaks_at_the_delay() {
        let m = model(2, 9);
        let v = m.view();
        for (s, t) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let d = v.delay(s, t);
            let peak = v.influence(s, t, d).abs();
            let step = 0.005;
            let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * step).collect();
            for &dt in &grid {
                assert!(v.influence(s, t, dt).abs() <= peak + 1e-15);
            }
            let argmax = grid
                .iter()
                .copied()
                .max_by(|a, b| v.influence(s, t, *a).abs().total_cmp(&v.influence(s, t, *b).abs()))
                .unwrap();
            assert!((argmax - d).abs() <= step + 1e-12, "argmax {argmax} vs delay {d}");
        }
    }

    #[test]
    fn phi_eval_and_traced_agree() {
        let m = model(3, 2);
        let v = m.view();
        let mut trace = PhiTrace::default();
        for p in 0..9 {
            for u in [0.0, 0.3, 2.5] {
                let (val, du) = v.phi.eval_traced(p, u, &mut trace);
                assert!((val - v.phi.eval(p, u)).abs() < 1e-15);
                let h = 1e-6;
                let fd = (v.phi.eval(p, u + h) - v.phi.eval(p, (u - h).max(0.0))) / (u + h - (u - h).max(0.0));
                assert!((du - fd).abs() < 1e-5, "pair {p} u {u}: {du} vs {fd}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model(2, 17);
        m.save(&path, Some(1.25), serde_json::json!({"note": "x"})).unwrap();
        let (back, meta) = Snmpp::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta.mean_inter_event_time, Some(1.25));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn phi_is_monotone_non_increasing(seed in 0u64..50, pair in 0usize..4, u1 in 0.0f64..20.0, du in 0.0f64..20.0) {
            let v = model(2, seed).view();
            let (a, b) = (v.phi.eval(pair, u1), v.phi.eval(pair, u1 + du));
            prop_assert!(a >= b, "phi({}) = {} < phi({}) = {}", u1, a, u1 + du, b);
            let leak = 2.0 * 0.1 * std::f64::consts::LN_2;
            prop_assert!(a >= -leak && a <= 1.0 + leak);
        }
    }

    proptest! {
        #[test]
        fn intensity_is_positive(seed in 0u64..20, t in 0.0f64..30.0, n in 0usize..10, elu in prop::bool::ANY) {
            let link = if elu { Link::EluPlusOne } else { Link::synthetic() };
            let m = Snmpp::new(ModelSpec::new(3, link), seed).unwrap();
            let v = m.view();
            let history: Vec<Event> = (0..n).map(|i| Event::new(t * i as f64 / (n.max(1) as f64 + 1.0), i % 3)).collect();
            for k in 0..3 {
                prop_assert!(v.intensity(k, t + 1e-3, &history) > 0.0);
            }
        }
    }
}
