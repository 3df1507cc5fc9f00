//! Flat parameter storage with named slices and optimizer state.

use super::scalar;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// How a raw slice maps to the value the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// Used as is.
    Free,
    /// Mapped through `softplus` with unit sharpness, strictly positive.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub constraint: Constraint,
    /// Whether decoupled weight decay applies to this slice.
    pub decay: bool,
}

impl NamedSlice {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered list of named slices covering `0..total()` without gaps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    slices: Vec<NamedSlice>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a slice of `len` entries and return its range.
    pub fn push(&mut self, name: impl Into<String>, len: usize, constraint: Constraint, decay: bool) -> Range<usize> {
        let offset = self.total();
        self.slices.push(NamedSlice {
            name: name.into(),
            offset,
            len,
            constraint,
            decay,
        });
        offset..offset + len
    }

    pub fn total(&self) -> usize {
        self.slices.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn slices(&self) -> &[NamedSlice] {
        &self.slices
    }

    pub fn get(&self, name: &str) -> Option<&NamedSlice> {
        self.slices.iter().find(|s| s.name == name)
    }
}

/// Raw parameters plus AdamW moment buffers.
///
/// Constrained values are never stored; [`ParamStore::constrained`] computes
/// them on demand from the raw slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub(crate) layout: ParamLayout,
    pub(crate) raw: Vec<f64>,
    pub(crate) first_moment: Vec<f64>,
    pub(crate) second_moment: Vec<f64>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.total();
        Self {
            layout,
            raw: vec![0.0; n],
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        }
    }

    /// Store with the given raw values; `raw.len()` must equal the layout total.
    pub fn from_raw(layout: ParamLayout, raw: Vec<f64>) -> Option<Self> {
        if raw.len() != layout.total() {
            return None;
        }
        let mut store = Self::zeros(layout);
        store.raw = raw;
        Some(store)
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.raw
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Constrained value of raw entry `index` under `constraint`.
    #[inline]
    pub fn constrain(constraint: Constraint, raw: f64) -> f64 {
        match constraint {
            Constraint::Free => raw,
            Constraint::Positive => scalar::softplus(raw, 1.0),
        }
    }

    /// Constrained values of the slice `name`.
    pub fn constrained(&self, name: &str) -> Option<Vec<f64>> {
        let slice = self.layout.get(name)?;
        Some(
            self.raw[slice.range()]
                .iter()
                .map(|&r| Self::constrain(slice.constraint, r))
                .collect(),
        )
    }

    /// Drop optimizer state, keeping the raw values.
    pub fn reset_moments(&mut self) {
        self.first_moment.iter_mut().for_each(|m| *m = 0.0);
        self.second_moment.iter_mut().for_each(|v| *v = 0.0);
        self.step = 0;
    }
}
