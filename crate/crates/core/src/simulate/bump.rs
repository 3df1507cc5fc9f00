//! Two-type processes where type-0 events shift the type-1 intensity by a
//! Gaussian bump centred at a fixed lag.
//!
//! ```text
//! λ_0(t) = r
//! λ_1(t) = b + a·Σ g(t − t_n)                 (excite)
//! λ_1(t) = softplus_β(c − a·Σ g(t − t_n))     (inhibit)
//! g(Δ)   = exp(−(Δ − lag)² / (2 w²))
//! ```
//!
//! with the sums over type-0 events strictly before `t`.

use super::GroundTruthProcess;
use crate::data::Event;
use crate::diffcore::softplus;
use crate::model::IntensityModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpEffect {
    Excite { baseline: f64, amplitude: f64 },
    Inhibit { offset: f64, amplitude: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DelayedBumpProcess {
    pub driver_rate: f64,
    pub effect: BumpEffect,
    pub lag: f64,
    pub width: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Validity window of the thinning bound.
    pub bound_window: f64,
}

/// Delayed excitation: `λ_1 = 0.05 + Σ 0.6·g`, lag 1, width 0.5, `T = 50`.
pub fn pp1_process() -> DelayedBumpProcess {
    DelayedBumpProcess {
        driver_rate: 0.5,
        effect: BumpEffect::Excite {
            baseline: 0.05,
            amplitude: 0.6,
        },
        lag: 1.0,
        width: 0.5,
        horizon: 50.0,
        bound_window: 0.5,
    }
}

/// Delayed inhibition: `λ_1 = softplus₁₀(1 − Σ 1.5·g)`, lag 1, width 0.5, `T = 40`.
pub fn pp2_process() -> DelayedBumpProcess {
    DelayedBumpProcess {
        driver_rate: 0.5,
        effect: BumpEffect::Inhibit {
            offset: 1.0,
            amplitude: 1.5,
            beta: 10.0,
        },
        lag: 1.0,
        width: 0.5,
        horizon: 40.0,
        bound_window: f64::INFINITY,
    }
}

impl DelayedBumpProcess {
    pub fn bump(&self, dt: f64) -> f64 {
        let z = dt - self.lag;
        (-z * z / (2.0 * self.width * self.width)).exp()
    }

    fn bump_sum(&self, t: f64, history: &[Event]) -> f64 {
        history
            .iter()
            .filter(|e| e.k == 0 && e.t < t)
            .map(|e| self.bump(t - e.t))
            .sum()
    }

    /// The true signed kernel on the pre-link scale.
    pub fn kernel(&self, dt: f64) -> f64 {
        match self.effect {
            BumpEffect::Excite { amplitude, .. } => amplitude * self.bump(dt),
            BumpEffect::Inhibit { amplitude, .. } => -amplitude * self.bump(dt),
        }
    }

    /// Intensity of type 1 with no type-0 history.
    pub fn base_rate(&self) -> f64 {
        match self.effect {
            BumpEffect::Excite { baseline, .. } => baseline,
            BumpEffect::Inhibit { offset, beta, .. } => softplus(offset, beta),
        }
    }

    /// Largest value of `g(s − t_n)` over `s ∈ [lo, hi]`.
    fn bump_max(&self, t_n: f64, lo: f64, hi: f64) -> f64 {
        let peak = t_n + self.lag;
        let s = peak.clamp(lo, hi);
        self.bump(s - t_n)
    }
}

impl IntensityModel for DelayedBumpProcess {
    fn num_types(&self) -> usize {
        2
    }

    fn intensity(&self, k: usize, t: f64, history: &[Event]) -> f64 {
        if k == 0 {
            return self.driver_rate;
        }
        let s = self.bump_sum(t, history);
        match self.effect {
            BumpEffect::Excite { baseline, amplitude } => baseline + amplitude * s,
            BumpEffect::Inhibit { offset, amplitude, beta } => softplus(offset - amplitude * s, beta),
        }
    }
}

impl GroundTruthProcess for DelayedBumpProcess {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn upper_bound(&self, t: f64, history: &[Event]) -> (f64, f64) {
        match self.effect {
            BumpEffect::Excite { baseline, amplitude } => {
                let end = t + self.bound_window;
                let m: f64 = history
                    .iter()
                    .filter(|e| e.k == 0)
                    .map(|e| self.bump_max(e.t, t, end))
                    .sum();
                (self.driver_rate + baseline + amplitude * m, self.bound_window)
            }
            BumpEffect::Inhibit { offset, beta, .. } => (self.driver_rate + softplus(offset, beta), self.bound_window),
        }
    }
}
