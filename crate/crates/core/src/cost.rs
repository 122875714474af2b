//! FLOP, payload, time, energy and monetised-cost accounting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::learner::model::LayerShape;
use crate::sparse::MaskSet;

/// Hardware constants for the cost model (defaults: a single 80 TFLOPS / 450 W accelerator,
/// 1 Gbit/s links and 1 W network cards).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConstants {
    pub v_flops: f64,
    pub p_comp: f64,
    pub bandwidth_bps: f64,
    pub p_comm: f64,
    /// Multiplier from theoretical to observed compute time.
    pub correction: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            v_flops: 80e12,
            p_comp: 450.0,
            bandwidth_bps: 1e9,
            p_comm: 1.0,
            correction: 5.0,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.v_flops,
            self.p_comp,
            self.bandwidth_bps,
            self.p_comm,
            self.correction,
        ];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(invalid("cost constants must be strictly positive"))
        }
    }
}

/// Training FLOPs for `samples` passes: forward is `2 * density * n_in * n_out` per layer and
/// sample, backward twice the forward.
pub fn training_flops(shapes: &[LayerShape], densities: &[f64], samples: usize) -> f64 {
    let forward: f64 = shapes
        .iter()
        .zip(densities)
        .map(|(s, d)| 2.0 * d * s.weights() as f64)
        .sum();
    3.0 * forward * samples as f64
}

/// Bytes to ship one sparse model: active values, a one-bit-per-weight bitmap, dense biases.
pub fn comm_bytes(mask: &MaskSet, bias_params: usize, bytes_per_weight: usize) -> u64 {
    let values = mask.total_active() * bytes_per_weight;
    let bitmap = mask.total_len().div_ceil(8);
    (values + bitmap + bias_params * bytes_per_weight) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyTime {
    pub t_comp: f64,
    pub t_comm: f64,
    pub c_comp: f64,
    pub c_comm: f64,
}

pub fn energy_time(flops: f64, bytes: f64, constants: &CostConstants) -> EnergyTime {
    let t_comp = constants.correction * flops / constants.v_flops;
    let t_comm = 8.0 * bytes / constants.bandwidth_bps;
    EnergyTime {
        t_comp,
        t_comm,
        c_comp: t_comp * constants.p_comp,
        c_comm: t_comm * constants.p_comm,
    }
}

/// `(1 - theta) * price_time * C_time + theta * price_energy * C_energy`.
pub fn total_cost(c_time: f64, c_energy: f64, theta: f64, price_time: f64, price_energy: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(invalid(format!("theta = {theta} outside [0, 1]")));
    }
    Ok((1.0 - theta) * price_time * c_time + theta * price_energy * c_energy)
}

pub fn total_cost_curve(
    c_time: f64,
    c_energy: f64,
    thetas: &[f64],
    price_time: f64,
    price_energy: f64,
) -> Result<Vec<f64>> {
    thetas
        .iter()
        .map(|&t| total_cost(c_time, c_energy, t, price_time, price_energy))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClientCost {
    pub flops: f64,
    pub bytes: u64,
    pub energy_j: f64,
}

/// Cumulative costs. Time accrues per round as the round's wall-clock span; energy accrues
/// over every client, including idle waiting (which costs time but no energy).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub cum_flops: f64,
    pub cum_bytes: u64,
    pub c_time: f64,
    pub c_energy: f64,
    pub per_client: Vec<ClientCost>,
    pub busiest_bytes_per_round: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundCharge {
    pub flops: f64,
    pub bytes: u64,
}

impl CostLedger {
    pub fn new(num_clients: usize) -> Self {
        Self {
            per_client: vec![ClientCost::default(); num_clients],
            ..Self::default()
        }
    }

    /// Books one round. `makespan` is the compute span from the timing simulation; the
    /// slowest upload is added on top. Returns the round's wall-clock time.
    pub fn record_round(&mut self, charges: &[RoundCharge], makespan: f64, constants: &CostConstants) -> f64 {
        let mut max_comm = 0.0f64;
        let mut busiest = 0u64;
        for (client, c) in charges.iter().enumerate() {
            let et = energy_time(c.flops, c.bytes as f64, constants);
            let entry = &mut self.per_client[client];
            entry.flops += c.flops;
            entry.bytes += c.bytes;
            entry.energy_j += et.c_comp + et.c_comm;
            self.cum_flops += c.flops;
            self.cum_bytes += c.bytes;
            self.c_energy += et.c_comp + et.c_comm;
            max_comm = max_comm.max(et.t_comm);
            busiest = busiest.max(c.bytes);
        }
        let span = makespan + max_comm;
        self.c_time += span;
        self.busiest_bytes_per_round.push(busiest);
        span
    }
}
