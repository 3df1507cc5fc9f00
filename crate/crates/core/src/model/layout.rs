//! Parameter layout of the model and its initialization.

use super::spec::ModelSpec;
use crate::diffcore::{softplus_inverse, Constraint, ParamLayout, ParamStore};
use crate::rng;
use rand::Rng;
use std::ops::Range;

/// Initial raw delay; `softplus(−2) ≈ 0.127`.
pub const DELAY_RAW_INIT: f64 = -2.0;
/// Fraction of the clip range targeted by the mean pre-clip φ output at `u = 0`.
pub const PHI_HEAD_INIT: f64 = 0.95;

/// Weight and bias ranges of one dense layer, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub params: ParamLayout,
    pub embeddings: Range<usize>,
    pub baselines: Range<usize>,
    pub delay_raw: Range<usize>,
    /// Hidden layers of ψ followed by the scalar head.
    pub psi: Vec<Dense>,
    /// Hidden layers of φ followed by the scalar head. The first layer's
    /// inputs are `[e_src, e_tgt, −u]`.
    pub phi: Vec<Dense>,
}

fn dense(
    params: &mut ParamLayout,
    name: &str,
    inputs: usize,
    outputs: usize,
    weight: Constraint,
) -> Dense {
    let suffix = if weight == Constraint::Positive { "weight-raw" } else { "weight" };
    let w = params.push(format!("{name}.{suffix}"), inputs * outputs, weight, true);
    let b = params.push(format!("{name}.bias"), outputs, Constraint::Free, false);
    Dense {
        inputs,
        outputs,
        weight: w,
        bias: b,
    }
}

impl ModelLayout {
    pub fn new(spec: &ModelSpec) -> Self {
        let k = spec.num_types;
        let m = spec.embedding_dim;
        let mut params = ParamLayout::new();
        let embeddings = params.push("embeddings", k * m, Constraint::Free, true);
        let baselines = params.push("baselines", k, Constraint::Free, false);
        let delay_raw = params.push("delay-raw", k * k, Constraint::Positive, false);

        let mut psi = Vec::new();
        let mut fan = 2 * m;
        for (i, &h) in spec.psi_hidden.iter().enumerate() {
            psi.push(dense(&mut params, &format!("psi.{i}"), fan, h, Constraint::Free));
            fan = h;
        }
        psi.push(dense(&mut params, "psi.out", fan, 1, Constraint::Free));

        let mut phi = Vec::new();
        let mut fan = 2 * m + 1;
        for (i, &h) in spec.phi_hidden.iter().enumerate() {
            phi.push(dense(&mut params, &format!("phi.{i}"), fan, h, Constraint::Positive));
            fan = h;
        }
        phi.push(dense(&mut params, "phi.out", fan, 1, Constraint::Positive));

        Self {
            params,
            embeddings,
            baselines,
            delay_raw,
            psi,
            phi,
        }
    }

    pub fn total(&self) -> usize {
        self.params.total()
    }

    /// Random initial parameters.
    ///
    /// Embeddings are uniform on `[−0.5, 0.5]`; ψ weights and all biases are
    /// the same scaled by `1/√fan-in`; baselines start at 0 and raw delays at
    /// [`DELAY_RAW_INIT`]. φ's raw weights are centred on
    /// `softplus⁻¹(1/fan-in)` so each constrained layer starts near an
    /// average of its inputs, and the head bias puts the pair-mean pre-clip
    /// output at `u = 0` at [`PHI_HEAD_INIT`] of the clip range.
    pub fn init(&self, spec: &ModelSpec, seed: u64) -> ParamStore {
        let mut rng = rng::stream(seed, &[0x1417]);
        let mut store = ParamStore::zeros(self.params.clone());
        let raw = store.raw_mut();
        for v in &mut raw[self.embeddings.clone()] {
            *v = rng.gen_range(-0.5..0.5);
        }
        for d in &self.psi {
            let scale = 1.0 / (d.inputs as f64).sqrt();
            for v in &mut raw[d.weight.clone()] {
                *v = rng.gen_range(-0.5..0.5) * scale;
            }
            if d.outputs > 1 {
                for v in &mut raw[d.bias.clone()] {
                    *v = rng.gen_range(-0.5..0.5) * scale;
                }
            }
        }
        for d in &self.phi {
            let centre = softplus_inverse(1.0 / d.inputs as f64, 1.0);
            let scale = 1.0 / (d.inputs as f64).sqrt();
            for v in &mut raw[d.weight.clone()] {
                *v = centre + rng.gen_range(-0.5..0.5);
            }
            for v in &mut raw[d.bias.clone()] {
                *v = rng.gen_range(-0.5..0.5) * scale;
            }
        }
        for v in &mut raw[self.delay_raw.clone()] {
            *v = DELAY_RAW_INIT;
        }

        let (a, b) = spec.clip_bounds;
        let head = self.phi.last().expect("phi has a head");
        let mean_pre = |store: &ParamStore, u: f64| {
            let view = super::Snmpp::from_parts(spec.clone(), self.clone(), store.clone()).view();
            (0..spec.num_pairs()).map(|p| view.phi.pre_clip(p, u)).sum::<f64>() / spec.num_pairs() as f64
        };
        store.raw_mut()[head.bias.start] = 0.0;
        store.raw_mut()[head.bias.start] = a + PHI_HEAD_INIT * (b - a) - mean_pre(&store, 0.0);
        store
    }
}
