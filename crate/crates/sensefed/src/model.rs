//! Shared data types: parameter vectors, sensing schedules, device state,
//! and the aggregation-weight arithmetic used by every other module.

use serde::{Deserialize, Serialize};

use crate::data::SampleBatch;
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Flat real vector of fixed length `q` holding model weights or gradients.
///
/// The length is fixed for the lifetime of an experiment; all devices and the
/// server share it. Entries must stay finite — operations that can produce
/// non-finite values call [`ParamVector::check_finite`] at their boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Build from raw values, rejecting NaN/Inf entries.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ParamVector::from_vec".into()));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }

    /// `self - other`, checking lengths.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "ParamVector::sub",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Hard error if any entry is NaN/Inf; `context` names the operation.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        Ok(())
    }
}

/// Per-round new-sample counts `D_t^n` plus derived cumulative sizes `S_t^n`.
///
/// Rounds are 1-based to match the round loop; `cumulative(n, 0)` is the
/// initial size `S_0^n`. The telescoping identity
/// `S_t^n = S_{t-1}^n + D_t^n` holds by construction.
#[derive(Debug, Clone)]
pub struct SensingSchedule {
    new_counts: Vec<Vec<usize>>, // [device][round-1]
    cumulative: Vec<Vec<usize>>, // [device][round-1]
    initial: Vec<usize>,
}

impl SensingSchedule {
    /// Build from an explicit per-device matrix of new-sample counts.
    pub fn new(new_counts: Vec<Vec<usize>>, initial: Vec<usize>) -> Result<Self> {
        if new_counts.is_empty() {
            return Err(Error::Schedule("schedule needs at least one device".into()));
        }
        if new_counts.len() != initial.len() {
            return Err(Error::Schedule(format!(
                "initial sizes ({}) do not match device count ({})",
                initial.len(),
                new_counts.len()
            )));
        }
        let rounds = new_counts[0].len();
        if new_counts.iter().any(|row| row.len() != rounds) {
            return Err(Error::Schedule("ragged schedule matrix".into()));
        }
        let cumulative = new_counts
            .iter()
            .zip(&initial)
            .map(|(row, &s0)| {
                row.iter()
                    .scan(s0, |acc, &d| {
                        *acc += d;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            new_counts,
            cumulative,
            initial,
        })
    }

    pub fn devices(&self) -> usize {
        self.new_counts.len()
    }

    pub fn rounds(&self) -> usize {
        self.new_counts[0].len()
    }

    /// `D_t^n` for round `t` in `1..=rounds()`.
    pub fn new_count(&self, device: usize, round: usize) -> usize {
        self.new_counts[device][round - 1]
    }

    /// `S_t^n`; `round = 0` returns the initial size `S_0^n`.
    pub fn cumulative(&self, device: usize, round: usize) -> usize {
        if round == 0 {
            self.initial[device]
        } else {
            self.cumulative[device][round - 1]
        }
    }

    /// `D_t` summed over devices.
    pub fn round_new_total(&self, round: usize) -> usize {
        (0..self.devices()).map(|n| self.new_count(n, round)).sum()
    }

    /// `S_t` summed over devices; `round = 0` gives `S_0`.
    pub fn round_cumulative_total(&self, round: usize) -> usize {
        (0..self.devices()).map(|n| self.cumulative(n, round)).sum()
    }

    /// Per-round cumulative sizes for one round as a vector over devices.
    pub fn sizes_at(&self, round: usize) -> Vec<usize> {
        (0..self.devices()).map(|n| self.cumulative(n, round)).collect()
    }

    /// Total samples device `n` collects over the whole run (excluding S_0).
    pub fn device_total(&self, device: usize) -> usize {
        self.new_counts[device].iter().sum()
    }

    pub fn initial_sizes(&self) -> &[usize] {
        &self.initial
    }
}

/// Hardware constants of one device: CPU cycles per sample, chip energy
/// coefficient, CPU frequency, and maximum transmit power.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeviceHardware {
    pub cycles_per_sample: f64,
    pub energy_coeff: f64,
    pub cpu_freq: f64,
    pub max_power: f64,
}

impl DeviceHardware {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cycles_per_sample", self.cycles_per_sample),
            ("energy_coeff", self.energy_coeff),
            ("cpu_freq", self.cpu_freq),
            ("max_power", self.max_power),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "device hardware constant {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One device: its cumulative dataset, local model, stream key, and
/// hardware constants. Owned by exactly one worker at a time.
#[derive(Debug, Clone)]
pub struct DeviceState {
    pub id: usize,
    pub data: SampleBatch,
    pub local_model: ParamVector,
    pub key: StreamKey,
    pub hw: DeviceHardware,
}

impl DeviceState {
    pub fn new(
        id: usize,
        data: SampleBatch,
        local_model: ParamVector,
        key: StreamKey,
        hw: DeviceHardware,
    ) -> Result<Self> {
        hw.validate()?;
        Ok(Self {
            id,
            data,
            local_model,
            key,
            hw,
        })
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }
}

/// Which dataset sizes the weights were formed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightVariant {
    /// `rho_t^n` from current cumulative sizes `S_t^n`.
    Current,
    /// `rho-bar^n` from previous cumulative sizes `S_{t-1}^n`.
    Cumulative,
    /// `rho-tilde^n` from fresh counts `D_t^n`.
    Fresh,
}

/// Per-device aggregation fractions; entries lie in [0,1] and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationWeights {
    rho: Vec<f64>,
    variant: WeightVariant,
}

impl AggregationWeights {
    pub fn from_sizes(sizes: &[usize], variant: WeightVariant) -> Result<Self> {
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(Error::EmptyPopulation);
        }
        let total = total as f64;
        let rho = sizes.iter().map(|&s| s as f64 / total).collect();
        Ok(Self { rho, variant })
    }

    /// Weights given directly as fractions; must sum to 1 within 1e-12.
    pub fn from_fractions(rho: Vec<f64>, variant: WeightVariant) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || rho.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::Config(format!(
                "aggregation weights must lie in [0,1] and sum to 1, got sum {sum}"
            )));
        }
        Ok(Self { rho, variant })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn variant(&self) -> WeightVariant {
        self.variant
    }

    /// Sum of squared weights, used by the gradient-variance bound term.
    pub fn sum_sq(&self) -> f64 {
        self.rho.iter().map(|r| r * r).sum()
    }
}

/// `rho[n] = sizes[n] / sum(sizes)`; errors when every size is zero.
pub fn weight_fraction(sizes: &[usize]) -> Result<AggregationWeights> {
    AggregationWeights::from_sizes(sizes, WeightVariant::Current)
}

/// `result[j] = sum_n rho[n] * vectors[n][j]`.
///
/// Devices are accumulated in index order so the result is independent of
/// scheduling; callers pass the vectors already filtered to active devices.
pub fn weighted_sum(vectors: &[&ParamVector], weights: &AggregationWeights) -> Result<ParamVector> {
    if vectors.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "weighted_sum: weights",
            expected: vectors.len(),
            got: weights.len(),
        });
    }
    if vectors.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let q = vectors[0].len();
    let mut out = ParamVector::zeros(q);
    for (v, &rho) in vectors.iter().zip(weights.rho()) {
        if v.len() != q {
            return Err(Error::DimensionMismatch {
                context: "weighted_sum: vectors",
                expected: q,
                got: v.len(),
            });
        }
        out.add_scaled(v, rho);
    }
    Ok(out)
}
