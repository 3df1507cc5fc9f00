//! Delay-aware monotone temporal network φ.
//!
//! Inputs are `[e_src, e_tgt, −u]` with `u = |Δt − d|`. All linear weights
//! are `softplus` of raw parameters and every activation is `softplus`, so
//! the pre-clip output is non-increasing in `u`. The scalar head goes
//! through [`soft_clip`].
//!
//! On the tape one φ evaluation is a single [`Op::Custom`](crate::diffcore::Op)
//! node whose only parent is the delay. The activations needed for the
//! parameter gradient are kept in a [`PhiTrace`] and contracted with the
//! node adjoints after the backward sweep in [`PhiNet::accumulate_gradient`].

use super::layout::{Dense, ModelLayout};
use super::softclip::{soft_clip, soft_clip_grad};
use super::spec::ModelSpec;
use crate::diffcore::scalar::{sigmoid, softplus_unit_with_grad};
use crate::diffcore::{Adjoints, NodeId, ParamStore};

#[derive(Debug, Clone)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Constrained (non-negative) weights, row-major `[out][in]`.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// φ resolved at a parameter snapshot.
#[derive(Debug, Clone)]
pub struct PhiNet {
    num_types: usize,
    embedding_dim: usize,
    /// First layer: constrained weight matrix `[h1][2m + 1]` and bias.
    first: Layer,
    /// `bias + W_e · [e_src, e_tgt]` for every ordered pair, `[pair][h1]`.
    pair_pre: Vec<f64>,
    /// Constrained weights on the `−u` input, `[h1]`.
    time_weight: Vec<f64>,
    hidden: Vec<Layer>,
    head: Vec<f64>,
    head_bias: f64,
    clip: (f64, f64, f64),
    sizes: Vec<usize>,
    stride: usize,
    max_width: usize,
}

/// Activations recorded by [`PhiNet::eval_traced`].
#[derive(Debug, Clone, Default)]
pub struct PhiTrace {
    nodes: Vec<NodeId>,
    pairs: Vec<u32>,
    lags: Vec<f64>,
    acts: Vec<f64>,
}

impl PhiTrace {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.pairs.clear();
        self.lags.clear();
        self.acts.clear();
    }

    /// Attach the tape node that carries the most recent traced evaluation.
    pub fn bind(&mut self, node: NodeId) {
        debug_assert_eq!(self.nodes.len() + 1, self.pairs.len());
        self.nodes.push(node);
    }
}

fn embedding<'a>(store: &'a ParamStore, layout: &ModelLayout, m: usize, k: usize) -> &'a [f64] {
    &store.raw()[layout.embeddings.start + k * m..layout.embeddings.start + (k + 1) * m]
}

fn constrained_layer(store: &ParamStore, d: &Dense) -> Layer {
    Layer {
        inputs: d.inputs,
        outputs: d.outputs,
        weight: store.raw()[d.weight.clone()]
            .iter()
            .map(|&r| softplus_unit_with_grad(r).0)
            .collect(),
        bias: store.raw()[d.bias.clone()].to_vec(),
    }
}

impl PhiNet {
    pub fn new(spec: &ModelSpec, layout: &ModelLayout, store: &ParamStore) -> Self {
        let k = spec.num_types;
        let m = spec.embedding_dim;
        let first = constrained_layer(store, &layout.phi[0]);
        let h1 = first.outputs;
        let cols = first.inputs;
        let mut pair_pre = vec![0.0; k * k * h1];
        for src in 0..k {
            for tgt in 0..k {
                let es = embedding(store, layout, m, src);
                let et = embedding(store, layout, m, tgt);
                let out = &mut pair_pre[(src * k + tgt) * h1..(src * k + tgt + 1) * h1];
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &first.weight[j * cols..(j + 1) * cols];
                    let mut z = first.bias[j];
                    for i in 0..m {
                        z += row[i] * es[i] + row[m + i] * et[i];
                    }
                    *o = z;
                }
            }
        }
        let time_weight = (0..h1).map(|j| first.weight[j * cols + 2 * m]).collect();
        let n = layout.phi.len();
        let hidden: Vec<Layer> = layout.phi[1..n - 1].iter().map(|d| constrained_layer(store, d)).collect();
        let head_layer = constrained_layer(store, &layout.phi[n - 1]);
        let sizes: Vec<usize> = layout.phi[..n - 1].iter().map(|d| d.outputs).collect();
        let stride = 1 + 2 * sizes.iter().sum::<usize>();
        let max_width = *sizes.iter().max().expect("phi has hidden layers");
        let (a, b) = spec.clip_bounds;
        Self {
            num_types: k,
            embedding_dim: m,
            first,
            pair_pre,
            time_weight,
            hidden,
            head: head_layer.weight,
            head_bias: head_layer.bias[0],
            clip: (a, b, spec.smoothness),
            sizes,
            stride,
            max_width,
        }
    }

    fn h1(&self) -> usize {
        self.sizes[0]
    }

    /// Head output before soft clipping.
    pub fn pre_clip(&self, pair: usize, u: f64) -> f64 {
        let mut cur = [0.0f64; 64];
        let mut next = [0.0f64; 64];
        let mut heap_cur;
        let mut heap_next;
        let (cur, next): (&mut [f64], &mut [f64]) = if self.max_width <= 64 {
            (&mut cur[..], &mut next[..])
        } else {
            heap_cur = vec![0.0; self.max_width];
            heap_next = vec![0.0; self.max_width];
            (&mut heap_cur[..], &mut heap_next[..])
        };
        let h1 = self.h1();
        let pre = &self.pair_pre[pair * h1..(pair + 1) * h1];
        for j in 0..h1 {
            cur[j] = softplus_unit_with_grad(pre[j] - self.time_weight[j] * u).0;
        }
        let mut width = h1;
        for layer in &self.hidden {
            for ((n, row), b) in next.iter_mut().zip(layer.weight.chunks_exact(layer.inputs)).zip(&layer.bias) {
                *n = softplus_unit_with_grad(b + dot(row, &cur[..width])).0;
            }
            width = layer.outputs;
            cur[..width].copy_from_slice(&next[..width]);
        }
        self.head_bias + dot(&self.head, &cur[..width])
    }

    /// `φ(src, tgt, u)` for the flat pair index.
    #[inline]
    pub fn eval(&self, pair: usize, u: f64) -> f64 {
        let (a, b, s) = self.clip;
        soft_clip(self.pre_clip(pair, u), a, b, s)
    }

    /// `φ` and `∂φ/∂u`, appending the activations to `trace`. The caller
    /// must follow up with [`PhiTrace::bind`].
    pub fn eval_traced(&self, pair: usize, u: f64, trace: &mut PhiTrace) -> (f64, f64) {
        let start = trace.acts.len();
        trace.acts.resize(start + self.stride, 0.0);
        let sum_h: usize = self.sizes.iter().sum();
        let (head, rest) = trace.acts[start..].split_at_mut(1);
        let (hs, gs) = rest.split_at_mut(sum_h);

        // forward: hs holds h_1..h_L, gs temporarily holds σ'(z_l)
        let h1 = self.h1();
        let pre = &self.pair_pre[pair * h1..(pair + 1) * h1];
        for j in 0..h1 {
            let (v, g) = softplus_unit_with_grad(pre[j] - self.time_weight[j] * u);
            hs[j] = v;
            gs[j] = g;
        }
        let mut offset = 0;
        for layer in &self.hidden {
            let (done, todo) = hs.split_at_mut(offset + layer.inputs);
            let input = &done[offset..];
            for j in 0..layer.outputs {
                let row = &layer.weight[j * layer.inputs..(j + 1) * layer.inputs];
                let (v, g) = softplus_unit_with_grad(layer.bias[j] + dot(row, input));
                todo[j] = v;
                gs[offset + layer.inputs + j] = g;
            }
            offset += layer.inputs;
        }
        let last = *self.sizes.last().unwrap();
        let raw = self.head_bias + dot(&self.head, &hs[offset..offset + last]);
        let (a, b, s) = self.clip;
        let cg = soft_clip_grad(raw, a, b, s);
        head[0] = cg;

        // backward: gs becomes ∂φ/∂z_l
        for j in 0..last {
            gs[offset + j] *= cg * self.head[j];
        }
        for layer in self.hidden.iter().rev() {
            let in_off = offset - layer.inputs;
            let (lower, upper) = gs.split_at_mut(offset);
            let g_out = &upper[..layer.outputs];
            let g_in = &mut lower[in_off..];
            let mut acc = [0.0f64; 64];
            let mut heap;
            let acc: &mut [f64] = if layer.inputs <= 64 {
                &mut acc[..layer.inputs]
            } else {
                heap = vec![0.0; layer.inputs];
                &mut heap[..]
            };
            for (j, &g) in g_out.iter().enumerate() {
                let row = &layer.weight[j * layer.inputs..(j + 1) * layer.inputs];
                for (a, &w) in acc.iter_mut().zip(row) {
                    *a += g * w;
                }
            }
            for (gi, a) in g_in.iter_mut().zip(acc.iter()) {
                *gi *= a;
            }
            offset = in_off;
        }
        let dphi_du = -dot(&self.time_weight, &gs[..h1]);

        trace.pairs.push(pair as u32);
        trace.lags.push(u);
        (soft_clip(raw, a, b, s), dphi_du)
    }

    /// Add the φ-parameter and embedding gradient implied by the adjoints of
    /// the traced nodes into `grad` (raw parameter space).
    pub fn accumulate_gradient(
        &self,
        layout: &ModelLayout,
        store: &ParamStore,
        trace: &PhiTrace,
        adjoints: &Adjoints,
        grad: &mut [f64],
    ) {
        let k2 = self.num_types * self.num_types;
        let h1 = self.h1();
        let sum_h: usize = self.sizes.iter().sum();
        let last = *self.sizes.last().unwrap();

        // gradients with respect to constrained weights
        let mut pair_acc = vec![0.0; k2 * h1];
        let mut time_w = vec![0.0; h1];
        let mut hidden_w: Vec<Vec<f64>> = self.hidden.iter().map(|l| vec![0.0; l.weight.len()]).collect();
        let mut hidden_b: Vec<Vec<f64>> = self.hidden.iter().map(|l| vec![0.0; l.outputs]).collect();
        let mut head_w = vec![0.0; last];
        let mut head_b = 0.0;

        for (e, &node) in trace.nodes.iter().enumerate() {
            let adj = adjoints.get(node);
            if adj == 0.0 {
                continue;
            }
            let acts = &trace.acts[e * self.stride..(e + 1) * self.stride];
            let cg = acts[0];
            let hs = &acts[1..1 + sum_h];
            let gs = &acts[1 + sum_h..];
            let pair = trace.pairs[e] as usize;
            let u = trace.lags[e];

            let acc = &mut pair_acc[pair * h1..(pair + 1) * h1];
            for j in 0..h1 {
                let g = adj * gs[j];
                acc[j] += g;
                time_w[j] -= g * u;
            }
            let mut offset = 0;
            for (l, layer) in self.hidden.iter().enumerate() {
                let input = &hs[offset..offset + layer.inputs];
                let g_out = &gs[offset + layer.inputs..offset + layer.inputs + layer.outputs];
                let w = &mut hidden_w[l];
                for (j, &g) in g_out.iter().enumerate() {
                    let g = adj * g;
                    hidden_b[l][j] += g;
                    let row = &mut w[j * layer.inputs..(j + 1) * layer.inputs];
                    for (r, &x) in row.iter_mut().zip(input) {
                        *r += g * x;
                    }
                }
                offset += layer.inputs;
            }
            let a_cg = adj * cg;
            head_b += a_cg;
            for (hw, &h) in head_w.iter_mut().zip(&hs[offset..offset + last]) {
                *hw += a_cg * h;
            }
        }

        let raw = store.raw();
        let chain = |i: usize| sigmoid(raw[i]);
        let m = self.embedding_dim;
        let cols = self.first.inputs;
        let first = &layout.phi[0];
        let emb = layout.embeddings.start;
        for src in 0..self.num_types {
            for tgt in 0..self.num_types {
                let p = src * self.num_types + tgt;
                let acc = &pair_acc[p * h1..(p + 1) * h1];
                for (j, &g) in acc.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    grad[first.bias.start + j] += g;
                    let row = &self.first.weight[j * cols..(j + 1) * cols];
                    for i in 0..m {
                        let es = raw[emb + src * m + i];
                        let et = raw[emb + tgt * m + i];
                        let wi = first.weight.start + j * cols + i;
                        grad[wi] += g * es * chain(wi);
                        grad[wi + m] += g * et * chain(wi + m);
                        grad[emb + src * m + i] += g * row[i];
                        grad[emb + tgt * m + i] += g * row[m + i];
                    }
                }
            }
        }
        for (j, &g) in time_w.iter().enumerate() {
            let wi = first.weight.start + j * cols + 2 * m;
            grad[wi] += g * chain(wi);
        }
        for (l, d) in layout.phi[1..layout.phi.len() - 1].iter().enumerate() {
            for (o, &g) in hidden_w[l].iter().enumerate() {
                let wi = d.weight.start + o;
                grad[wi] += g * chain(wi);
            }
            for (o, &g) in hidden_b[l].iter().enumerate() {
                grad[d.bias.start + o] += g;
            }
        }
        let head = layout.phi.last().unwrap();
        for (o, &g) in head_w.iter().enumerate() {
            let wi = head.weight.start + o;
            grad[wi] += g * chain(wi);
        }
        grad[head.bias.start] += head_b;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
