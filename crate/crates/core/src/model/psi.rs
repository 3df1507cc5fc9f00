//! Signed interaction network ψ over ordered embedding pairs.
//!
//! Input is the concatenation `[e_src, e_tgt]`, hidden layers use GELU and
//! the head is linear, so the output is an unbounded signed scalar and
//! `ψ(a, b) ≠ ψ(b, a)` in general.

use super::layout::ModelLayout;
use super::spec::ModelSpec;
use crate::diffcore::{gelu, NodeId, ParamStore, Tape};

fn input(spec: &ModelSpec, layout: &ModelLayout, raw: &[f64], src: usize, tgt: usize) -> Vec<f64> {
    let m = spec.embedding_dim;
    let e = &raw[layout.embeddings.clone()];
    let mut x = Vec::with_capacity(2 * m);
    x.extend_from_slice(&e[src * m..(src + 1) * m]);
    x.extend_from_slice(&e[tgt * m..(tgt + 1) * m]);
    x
}

pub fn psi(spec: &ModelSpec, layout: &ModelLayout, store: &ParamStore, src: usize, tgt: usize) -> f64 {
    let raw = store.raw();
    let mut x = input(spec, layout, raw, src, tgt);
    let last = layout.psi.len() - 1;
    for (l, d) in layout.psi.iter().enumerate() {
        let w = &raw[d.weight.clone()];
        let b = &raw[d.bias.clone()];
        x = (0..d.outputs)
            .map(|j| {
                let z = b[j] + w[j * d.inputs..(j + 1) * d.inputs].iter().zip(&x).map(|(w, x)| w * x).sum::<f64>();
                if l == last {
                    z
                } else {
                    gelu(z)
                }
            })
            .collect();
    }
    x[0]
}

/// Tape leaves for the embeddings (one node per coordinate).
pub fn record_embeddings(layout: &ModelLayout, store: &ParamStore, tape: &mut Tape) -> Vec<NodeId> {
    layout
        .embeddings
        .clone()
        .map(|i| tape.param(i, store.raw()[i]))
        .collect()
}

/// Record ψ for every ordered pair; returns nodes indexed by flat pair.
pub fn record_psi_matrix(
    spec: &ModelSpec,
    layout: &ModelLayout,
    store: &ParamStore,
    embeddings: &[NodeId],
    tape: &mut Tape,
) -> Vec<NodeId> {
    let raw = store.raw();
    let m = spec.embedding_dim;
    let weights: Vec<(Vec<NodeId>, Vec<NodeId>)> = layout
        .psi
        .iter()
        .map(|d| {
            let w = d.weight.clone().map(|i| tape.param(i, raw[i])).collect();
            let b = d.bias.clone().map(|i| tape.param(i, raw[i])).collect();
            (w, b)
        })
        .collect();
    let last = layout.psi.len() - 1;
    let mut out = Vec::with_capacity(spec.num_pairs());
    for src in 0..spec.num_types {
        for tgt in 0..spec.num_types {
            let mut x: Vec<NodeId> = embeddings[src * m..(src + 1) * m]
                .iter()
                .chain(&embeddings[tgt * m..(tgt + 1) * m])
                .copied()
                .collect();
            for (l, (d, (w, b))) in layout.psi.iter().zip(&weights).enumerate() {
                x = (0..d.outputs)
                    .map(|j| {
                        let z = w[j * d.inputs..(j + 1) * d.inputs]
                            .iter()
                            .zip(&x)
                            .fold(b[j], |acc, (&wi, &xi)| tape.mul_add(wi, xi, acc));
                        if l == last {
                            z
                        } else {
                            tape.gelu(z)
                        }
                    })
                    .collect();
            }
            out.push(x[0]);
        }
    }
    out
}
