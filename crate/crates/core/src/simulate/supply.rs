//! Hidden-inventory supply-chain generator.
//!
//! Marks: 0 = customer order, 1 = replenishment order, 2 = stock arrival,
//! 3 = stockout.

use super::SimulateError;
use crate::data::{Event, EventSequence};
use crate::rng::StreamRng;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

pub const SUPPLY_CHAIN_MARKS: [&str; 4] = ["E1", "E2", "E3", "E_out"];

pub const ORDER: usize = 0;
pub const REORDER: usize = 1;
pub const ARRIVAL: usize = 2;
pub const STOCKOUT: usize = 3;

const MIN_LEAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SupplyChainConfig {
    pub t_max: f64,
    pub initial_inventory: u32,
    pub reorder_point: u32,
    pub reorder_quantity: u32,
    pub lead_mean: f64,
    pub demand_rate_range: (f64, f64),
}

impl Default for SupplyChainConfig {
    fn default() -> Self {
        Self {
            t_max: 30.0,
            initial_inventory: 10,
            reorder_point: 5,
            reorder_quantity: 15,
            lead_mean: 4.0,
            demand_rate_range: (1.5, 3.5),
        }
    }
}

impl SupplyChainConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let (lo, hi) = self.demand_rate_range;
        let checks = [
            (self.t_max.is_finite() && self.t_max > 0.0, "t-max must be > 0"),
            (self.initial_inventory > self.reorder_point, "initial inventory must exceed the reorder point"),
            (self.reorder_quantity > 0, "reorder quantity must be > 0"),
            (self.lead_mean > MIN_LEAD, "lead mean must exceed 0.5"),
            (lo > 0.0 && hi >= lo && hi.is_finite(), "demand rate range must be positive and ordered"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(SimulateError::Config(msg.to_string())),
            None => Ok(()),
        }
    }
}

/// One sequence on `[0, t_max)`.
///
/// Each step draws a candidate order gap; a pending arrival that comes no
/// later than the candidate is processed first and the candidate is
/// discarded. Orders, the stockout flag and a reorder triggered by the same
/// order share its timestamp and are emitted in that order. An arrival
/// scheduled at or after `t_max` is not recorded.
pub fn supply_chain_sample(config: &SupplyChainConfig, rng: &mut StreamRng) -> EventSequence {
    let (lo, hi) = config.demand_rate_range;
    let rate = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let gap = Exp::new(rate).unwrap();
    let mut events = Vec::new();
    let mut t = 0.0;
    let mut inventory = config.initial_inventory;
    let mut pending: Option<f64> = None;
    let mut stockout = false;

    while t < config.t_max {
        let candidate = t + gap.sample(rng);
        if let Some(arrival) = pending.filter(|&a| a <= candidate) {
            t = arrival;
            if t >= config.t_max {
                break;
            }
            events.push(Event::new(t, ARRIVAL));
            inventory += config.reorder_quantity;
            pending = None;
            stockout = false;
            continue;
        }
        if candidate >= config.t_max {
            break;
        }
        t = candidate;
        if inventory == 0 {
            continue;
        }
        events.push(Event::new(t, ORDER));
        inventory -= 1;
        if inventory == 0 && !stockout {
            events.push(Event::new(t, STOCKOUT));
            stockout = true;
        }
        if inventory <= config.reorder_point && pending.is_none() {
            events.push(Event::new(t, REORDER));
            let z: f64 = StandardNormal.sample(rng);
            pending = Some(t + (config.lead_mean + z).max(MIN_LEAD));
        }
    }
    EventSequence::new(config.t_max, events)
}
