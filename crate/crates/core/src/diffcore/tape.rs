//! Append-only scalar tape for reverse-mode differentiation.
//!
//! Every node stores its value, at most two parents and the partial
//! derivative of the node with respect to each parent. Parents always have
//! smaller ids than their children, so a single reverse sweep over the node
//! list is a valid topological order for the backward pass.
//!
//! Leaves bound to a parameter index ([`Op::Param`]) are how gradients get
//! back into a flat parameter vector. [`Op::Custom`] nodes let a caller
//! record a fused computation (a whole small network, say) as one node whose
//! remaining parameter dependence is handled outside the tape using the
//! node's adjoint, see [`Adjoints::get`].

use super::scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TapeError {
    #[error("parent node {parent} is not on the tape (length {len})")]
    ParentOutOfRange { parent: u32, len: usize },
    #[error("node {node} is not on the tape (length {len})")]
    UnknownNode { node: u32, len: usize },
    #[error("{given} local gradients supplied for {parents} parents")]
    ArityMismatch { parents: usize, given: usize },
    #[error("at most two parents are supported, got {0}")]
    TooManyParents(usize),
}

/// Identifier of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Operation tag. Tags are descriptive only; the backward pass uses the
/// stored local gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Const,
    Param(u32),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Offset,
    Exp,
    Log,
    Sin,
    Abs,
    Softplus,
    Gelu,
    EluPlusOne,
    SoftClip,
    Custom,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    parents: [u32; 2],
    local: [f64; 2],
    arity: u8,
    op: Op,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].value
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[id.index()].op
    }

    /// Local gradients of `id` with respect to its parents, in parent order.
    pub fn local_gradients(&self, id: NodeId) -> &[f64] {
        let node = &self.nodes[id.index()];
        &node.local[..node.arity as usize]
    }

    /// Checked general-purpose recording entry point.
    pub fn record(
        &mut self,
        op: Op,
        value: f64,
        parents: &[NodeId],
        local: &[f64],
    ) -> Result<NodeId, TapeError> {
        if parents.len() > 2 {
            return Err(TapeError::TooManyParents(parents.len()));
        }
        if parents.len() != local.len() {
            return Err(TapeError::ArityMismatch {
                parents: parents.len(),
                given: local.len(),
            });
        }
        let len = self.nodes.len();
        if let Some(p) = parents.iter().find(|p| p.index() >= len) {
            return Err(TapeError::ParentOutOfRange { parent: p.0, len });
        }
        let mut ps = [0u32; 2];
        let mut ls = [0.0; 2];
        for (i, (p, g)) in parents.iter().zip(local).enumerate() {
            ps[i] = p.0;
            ls[i] = *g;
        }
        Ok(self.push(op, value, ps, ls, parents.len() as u8))
    }

    #[inline]
    fn push(&mut self, op: Op, value: f64, parents: [u32; 2], local: [f64; 2], arity: u8) -> NodeId {
        debug_assert!(parents[..arity as usize]
            .iter()
            .all(|&p| (p as usize) < self.nodes.len()));
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            parents,
            local,
            arity,
            op,
        });
        id
    }

    #[inline]
    fn unary(&mut self, op: Op, x: NodeId, value: f64, grad: f64) -> NodeId {
        self.push(op, value, [x.0, 0], [grad, 0.0], 1)
    }

    #[inline]
    fn binary(&mut self, op: Op, a: NodeId, b: NodeId, value: f64, ga: f64, gb: f64) -> NodeId {
        self.push(op, value, [a.0, b.0], [ga, gb], 2)
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Const, value, [0, 0], [0.0, 0.0], 0)
    }

    /// Leaf bound to entry `index` of the parameter vector.
    pub fn param(&mut self, index: usize, value: f64) -> NodeId {
        self.push(Op::Param(index as u32), value, [0, 0], [0.0, 0.0], 0)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.binary(Op::Add, a, b, v, 1.0, 1.0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.binary(Op::Sub, a, b, v, 1.0, -1.0)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        self.binary(Op::Mul, a, b, va * vb, vb, va)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        self.binary(Op::Div, a, b, va / vb, 1.0 / vb, -va / (vb * vb))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let v = -self.value(x);
        self.unary(Op::Neg, x, v, -1.0)
    }

    /// `c * x`.
    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = c * self.value(x);
        self.unary(Op::Scale, x, v, c)
    }

    /// `x + c`.
    pub fn offset(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x) + c;
        self.unary(Op::Offset, x, v, 1.0)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).exp();
        self.unary(Op::Exp, x, v, v)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        self.unary(Op::Log, x, vx.ln(), 1.0 / vx)
    }

    pub fn sin(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        self.unary(Op::Sin, x, vx.sin(), vx.cos())
    }

    /// `|x|`, with subgradient 0 at the origin.
    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        let g = if vx > 0.0 {
            1.0
        } else if vx < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(Op::Abs, x, vx.abs(), g)
    }

    pub fn softplus(&mut self, x: NodeId, beta: f64) -> NodeId {
        let vx = self.value(x);
        self.unary(
            Op::Softplus,
            x,
            scalar::softplus(vx, beta),
            scalar::softplus_grad(vx, beta),
        )
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        self.unary(Op::Gelu, x, scalar::gelu(vx), scalar::gelu_grad(vx))
    }

    pub fn elu_plus_one(&mut self, x: NodeId) -> NodeId {
        let vx = self.value(x);
        self.unary(
            Op::EluPlusOne,
            x,
            scalar::elu_plus_one(vx),
            scalar::elu_plus_one_grad(vx),
        )
    }

    /// Fused node with one tape parent; `grad` is the derivative of `value`
    /// with respect to that parent.
    pub fn custom(&mut self, parent: NodeId, value: f64, grad: f64) -> NodeId {
        self.unary(Op::Custom, parent, value, grad)
    }

    /// `w * x + acc` as a product node followed by a sum node.
    pub fn mul_add(&mut self, w: NodeId, x: NodeId, acc: NodeId) -> NodeId {
        let p = self.mul(w, x);
        self.add(p, acc)
    }

    /// Sum of `xs`; an empty slice yields a constant zero.
    pub fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        match xs.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.add(acc, x)),
        }
    }

    /// Reverse sweep from `loss`, returning the adjoint of every node.
    pub fn backward_all(&self, loss: NodeId) -> Result<Adjoints, TapeError> {
        let len = self.nodes.len();
        if loss.index() >= len {
            return Err(TapeError::UnknownNode { node: loss.0, len });
        }
        let mut adj = vec![0.0; loss.index() + 1];
        adj[loss.index()] = 1.0;
        for i in (0..=loss.index()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for j in 0..node.arity as usize {
                adj[node.parents[j] as usize] += a * node.local[j];
            }
        }
        Ok(Adjoints { adj })
    }

    /// Gradient of `loss` with respect to the parameter leaves, as a dense
    /// vector of length `n_params`.
    pub fn backward(&self, loss: NodeId, n_params: usize) -> Result<Vec<f64>, TapeError> {
        let adjoints = self.backward_all(loss)?;
        let mut grad = vec![0.0; n_params];
        adjoints.accumulate_params(self, &mut grad);
        Ok(grad)
    }
}

/// Adjoints produced by [`Tape::backward_all`].
#[derive(Debug, Clone)]
pub struct Adjoints {
    adj: Vec<f64>,
}

impl Adjoints {
    /// Adjoint of `id`; nodes recorded after the loss have adjoint zero.
    pub fn get(&self, id: NodeId) -> f64 {
        self.adj.get(id.index()).copied().unwrap_or(0.0)
    }

    /// Add the adjoints of all [`Op::Param`] leaves into `grad`.
    pub fn accumulate_params(&self, tape: &Tape, grad: &mut [f64]) {
        for (node, &a) in tape.nodes.iter().zip(&self.adj) {
            if let Op::Param(p) = node.op {
                grad[p as usize] += a;
            }
        }
    }
}
