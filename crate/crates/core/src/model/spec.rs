use crate::diffcore::scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("number of event types must be >= 1")]
    NoTypes,
    #[error("embedding dimension must be >= 1")]
    EmbeddingDim,
    #[error("network {0} needs at least one non-empty hidden layer")]
    Hidden(&'static str),
    #[error("soft-clip smoothness must be > 0, got {0}")]
    Smoothness(f64),
    #[error("clip bounds must satisfy a < b, got ({0}, {1})")]
    ClipBounds(f64, f64),
    #[error("softplus link sharpness must be > 0, got {0}")]
    LinkBeta(f64),
}

/// Positive link applied to the baseline-plus-influence sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Softplus { beta: f64 },
    EluPlusOne,
}

impl Link {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Softplus { beta } => scalar::softplus(x, beta),
            Link::EluPlusOne => scalar::elu_plus_one(x),
        }
    }

    /// Pre-link value mapping to intensity `y > 0`.
    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Link::Softplus { beta } => scalar::softplus_inverse(y, beta),
            Link::EluPlusOne => {
                if y > 1.0 {
                    y - 1.0
                } else {
                    y.ln()
                }
            }
        }
    }

    /// Link used by the synthetic recovery experiments.
    pub fn synthetic() -> Self {
        Link::Softplus { beta: 10.0 }
    }
}

impl Default for Link {
    fn default() -> Self {
        Link::synthetic()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ModelSpec {
    #[serde(rename = "K")]
    pub num_types: usize,
    pub embedding_dim: usize,
    pub psi_hidden: Vec<usize>,
    pub phi_hidden: Vec<usize>,
    /// Soft-clip smoothness `s`.
    pub smoothness: f64,
    pub clip_bounds: (f64, f64),
    pub link: Link,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            num_types: 1,
            embedding_dim: 4,
            psi_hidden: vec![16, 16],
            phi_hidden: vec![16, 16],
            smoothness: 0.1,
            clip_bounds: (0.0, 1.0),
            link: Link::default(),
        }
    }
}

impl ModelSpec {
    pub fn new(num_types: usize, link: Link) -> Self {
        Self {
            num_types,
            link,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.num_types == 0 {
            return Err(SpecError::NoTypes);
        }
        if self.embedding_dim == 0 {
            return Err(SpecError::EmbeddingDim);
        }
        if self.psi_hidden.is_empty() || self.psi_hidden.contains(&0) {
            return Err(SpecError::Hidden("psi"));
        }
        if self.phi_hidden.is_empty() || self.phi_hidden.contains(&0) {
            return Err(SpecError::Hidden("phi"));
        }
        if !(self.smoothness > 0.0) {
            return Err(SpecError::Smoothness(self.smoothness));
        }
        let (a, b) = self.clip_bounds;
        if !(a < b) {
            return Err(SpecError::ClipBounds(a, b));
        }
        if let Link::Softplus { beta } = self.link {
            if !(beta > 0.0) {
                return Err(SpecError::LinkBeta(beta));
            }
        }
        Ok(())
    }

    pub fn num_pairs(&self) -> usize {
        self.num_types * self.num_types
    }

    /// Flat index of the ordered pair `src → tgt`.
    #[inline]
    pub fn pair(&self, src: usize, tgt: usize) -> usize {
        src * self.num_types + tgt
    }
}
