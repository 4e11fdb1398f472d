//! Per-round communication and computation latency/energy accounting.
//!
//! Communication cost covers the uplink only: every device transmits `q`
//! analog symbols, packed `L` symbols per resource block of duration
//! `t_slot`. Computation cost prices `epochs` passes over the cumulative
//! dataset; the harness charges the gradient-averaging path one full epoch
//! and the model-averaging path `tau * batch_size / S` epochs, i.e. cycles
//! proportional to the samples actually processed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radio frame constants plus the model size they price.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostConfig {
    pub t_slot: f64,
    pub symbols_per_block: usize,
    pub param_len: usize,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_slot.is_finite() && self.t_slot > 0.0) {
            return Err(Error::Config(format!(
                "t_slot must be positive, got {}",
                self.t_slot
            )));
        }
        if self.symbols_per_block == 0 {
            return Err(Error::Config("symbols_per_block must be >= 1".into()));
        }
        Ok(())
    }
}

/// Uplink transmission latency: `ceil(q / L) * t_slot`.
pub fn comm_latency(param_len: usize, symbols_per_block: usize, t_slot: f64) -> Result<f64> {
    if param_len == 0 {
        return Err(Error::Config("comm_latency needs q >= 1".into()));
    }
    if symbols_per_block == 0 {
        return Err(Error::Config("comm_latency needs L >= 1".into()));
    }
    Ok(param_len.div_ceil(symbols_per_block) as f64 * t_slot)
}

/// Transmit energy: power times air time.
pub fn comm_energy(power: f64, latency: f64) -> f64 {
    power * latency
}

/// Local training latency: `epochs * cycles_per_sample * samples / freq`.
pub fn comp_latency(
    cycles_per_sample: f64,
    samples: usize,
    freq: f64,
    epochs: f64,
) -> Result<f64> {
    if !(freq.is_finite() && freq > 0.0) {
        return Err(Error::Config(format!("cpu frequency must be positive, got {freq}")));
    }
    Ok(epochs * cycles_per_sample * samples as f64 / freq)
}

/// Local training energy: `epochs * cycles_per_sample * coeff * freq^2 * samples`.
pub fn comp_energy(
    cycles_per_sample: f64,
    energy_coeff: f64,
    freq: f64,
    samples: usize,
    epochs: f64,
) -> f64 {
    epochs * cycles_per_sample * energy_coeff * freq * freq * samples as f64
}

/// Per-device slice of one round's cost.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeviceRoundCost {
    pub comp_latency: f64,
    pub comp_energy: f64,
    pub comm_energy: f64,
}

/// One round's totals. Devices compute in parallel and then transmit
/// simultaneously, so round latency is the slowest computation plus one
/// transmission; energies add across devices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundCost {
    pub comm_latency: f64,
    pub comp_latency: Vec<f64>,
    pub comm_energy: Vec<f64>,
    pub comp_energy: Vec<f64>,
    pub total_latency: f64,
    pub total_energy: f64,
}

impl RoundCost {
    pub fn max_comp_latency(&self) -> f64 {
        self.comp_latency.iter().cloned().fold(0.0, f64::max)
    }

    pub fn comm_energy_total(&self) -> f64 {
        self.comm_energy.iter().sum()
    }

    pub fn comp_energy_total(&self) -> f64 {
        self.comp_energy.iter().sum()
    }
}

/// Combine per-device costs with the shared transmission latency.
pub fn round_cost(devices: &[DeviceRoundCost], comm_latency: f64) -> Result<RoundCost> {
    if devices.is_empty() {
        return Err(Error::Config("round_cost needs at least one device".into()));
    }
    let comp_latency: Vec<f64> = devices.iter().map(|d| d.comp_latency).collect();
    let comm_energy: Vec<f64> = devices.iter().map(|d| d.comm_energy).collect();
    let comp_energy: Vec<f64> = devices.iter().map(|d| d.comp_energy).collect();
    let max_comp = comp_latency.iter().cloned().fold(0.0, f64::max);
    let total_energy = comm_energy.iter().sum::<f64>() + comp_energy.iter().sum::<f64>();
    Ok(RoundCost {
        comm_latency,
        comp_latency,
        comm_energy,
        comp_energy,
        total_latency: max_comp + comm_latency,
        total_energy,
    })
}
