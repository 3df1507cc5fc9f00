//! Kernel and intensity traces for plotting.
//!
//! CSV headers are fixed: `src,tgt,dt,f` for kernels and `t,k,lambda` for
//! intensities.

use super::{IntensityModel, ModelView};
use crate::data::EventSequence;
use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCurve {
    pub src: usize,
    pub tgt: usize,
    /// `(Δt, f(Δt))` on a strictly increasing grid starting at 0.
    pub points: Vec<(f64, f64)>,
}

impl KernelCurve {
    /// Largest `|f|` over the grid and where it occurs.
    pub fn peak(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((0.0, 0.0), |best, &(dt, f)| if f.abs() > best.1.abs() { (dt, f) } else { best })
    }
}

/// Evenly spaced grid `0, …, dt_max` with `points` entries.
pub fn lag_grid(dt_max: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && dt_max > 0.0);
    (0..points).map(|i| dt_max * i as f64 / (points - 1) as f64).collect()
}

/// Default export grid: `[0, 3 × mean gap]` with 200 points.
pub fn default_lag_grid(mean_gap: f64) -> Vec<f64> {
    lag_grid(3.0 * mean_gap, 200)
}

/// All `K²` kernels on `grid`, ordered by `(src, tgt)`.
pub fn kernel_curves(view: &ModelView, grid: &[f64]) -> Vec<KernelCurve> {
    let k = view.num_types();
    let mut out = Vec::with_capacity(k * k);
    for src in 0..k {
        for tgt in 0..k {
            out.push(KernelCurve {
                src,
                tgt,
                points: grid.iter().map(|&dt| (dt, view.influence(src, tgt, dt))).collect(),
            });
        }
    }
    out
}

pub fn write_kernel_csv<W: Write>(mut w: W, curves: &[KernelCurve]) -> io::Result<()> {
    writeln!(w, "src,tgt,dt,f")?;
    for c in curves {
        for &(dt, f) in &c.points {
            writeln!(w, "{},{},{},{}", c.src, c.tgt, dt, f)?;
        }
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityPoint {
    pub t: f64,
    pub k: usize,
    pub lambda: f64,
}

/// `λ_k(t | H_t)` for every type on `points` evenly spaced times in
/// `[0, T)`, with the history strictly before each time.
pub fn intensity_curve<M: IntensityModel + ?Sized>(model: &M, seq: &EventSequence, points: usize) -> Vec<IntensityPoint> {
    let mut out = Vec::with_capacity(points * model.num_types());
    for i in 0..points {
        let t = seq.horizon * i as f64 / points as f64;
        let history = seq.history_before(t);
        for k in 0..model.num_types() {
            out.push(IntensityPoint {
                t,
                k,
                lambda: model.intensity(k, t, history),
            });
        }
    }
    out
}

pub fn write_intensity_csv<W: Write>(mut w: W, points: &[IntensityPoint]) -> io::Result<()> {
    writeln!(w, "t,k,lambda")?;
    for p in points {
        writeln!(w, "{},{},{}", p.t, p.k, p.lambda)?;
    }
    w.flush()
}
