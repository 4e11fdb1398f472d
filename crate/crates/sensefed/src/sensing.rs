//! Sample-arrival schedules, data partitioning, and the per-round sensing
//! step that grows each device's cumulative dataset.
//!
//! Sensing is modeled as drawing pre-generated samples from a per-device
//! stream: partitioning fixes which samples a device will ever see and in
//! what order, and the schedule fixes how many arrive each round.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::SampleBatch;
use crate::error::{Error, Result};
use crate::model::{DeviceState, SensingSchedule};
use crate::rng::{StreamKey, StreamPurpose};

/// How new-sample counts are spread over rounds.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleStrategy {
    /// Equal counts per round, remainder to the earliest rounds.
    Uniform,
    /// `ceil(total/2)` in round 1, the rest uniform over remaining rounds.
    FrontLoaded,
    /// Everything in round 1.
    AllAtStart,
    /// Explicit per-device matrix of counts (devices x rounds).
    Explicit(Vec<Vec<usize>>),
}

fn spread_uniform(total: usize, rounds: usize) -> Vec<usize> {
    if rounds == 0 {
        return Vec::new();
    }
    let base = total / rounds;
    let rem = total % rounds;
    (0..rounds).map(|t| base + usize::from(t < rem)).collect()
}

/// Build the `D_t^n` matrix for the given strategy and per-device totals.
pub fn build_schedule(
    strategy: &ScheduleStrategy,
    totals: &[usize],
    rounds: usize,
    initial: &[usize],
) -> Result<SensingSchedule> {
    if totals.is_empty() {
        return Err(Error::Schedule("need at least one device".into()));
    }
    if initial.len() != totals.len() {
        return Err(Error::Schedule(
            "initial sizes must match device count".into(),
        ));
    }
    let rows: Vec<Vec<usize>> = match strategy {
        ScheduleStrategy::Uniform => {
            if rounds == 0 && totals.iter().any(|&t| t > 0) {
                return Err(Error::Schedule("cannot place samples in zero rounds".into()));
            }
            totals.iter().map(|&t| spread_uniform(t, rounds)).collect()
        }
        ScheduleStrategy::FrontLoaded => {
            if rounds == 0 && totals.iter().any(|&t| t > 0) {
                return Err(Error::Schedule("cannot place samples in zero rounds".into()));
            }
            totals
                .iter()
                .map(|&t| {
                    if rounds == 0 {
                        return Vec::new();
                    }
                    if rounds == 1 {
                        return vec![t];
                    }
                    let first = t.div_ceil(2);
                    let mut row = vec![first];
                    row.extend(spread_uniform(t - first, rounds - 1));
                    row
                })
                .collect()
        }
        ScheduleStrategy::AllAtStart => {
            if rounds == 0 && totals.iter().any(|&t| t > 0) {
                return Err(Error::Schedule("cannot place samples in zero rounds".into()));
            }
            totals
                .iter()
                .map(|&t| {
                    let mut row = vec![0; rounds];
                    if rounds > 0 {
                        row[0] = t;
                    }
                    row
                })
                .collect()
        }
        ScheduleStrategy::Explicit(matrix) => {
            if matrix.len() != totals.len() {
                return Err(Error::Schedule(format!(
                    "explicit matrix has {} rows, expected {}",
                    matrix.len(),
                    totals.len()
                )));
            }
            if matrix.iter().any(|row| row.len() != rounds) {
                return Err(Error::Schedule(format!(
                    "explicit matrix rows must have {rounds} columns"
                )));
            }
            matrix.clone()
        }
    };
    SensingSchedule::new(rows, initial.to_vec())
}

/// How the pool is split across devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Iid,
    Dirichlet,
}

/// Partition parameters. `gamma` is the Dirichlet concentration: smaller
/// values give more skewed per-device class mixes.
#[derive(Debug, Clone, Copy)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub gamma: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mode == PartitionMode::Dirichlet && !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "dirichlet gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Group pool indices by class. Non-integral labels fall back to a single
/// group, which is fine for IID splits of regression-style pools.
fn class_groups(pool: &SampleBatch) -> Vec<Vec<usize>> {
    let integral = pool
        .labels()
        .iter()
        .all(|&y| y.fract() == 0.0 && (0.0..1e6).contains(&y));
    if !integral {
        return vec![(0..pool.len()).collect()];
    }
    let classes = pool.labels().iter().map(|&y| y as usize).max().unwrap_or(0) + 1;
    let mut groups = vec![Vec::new(); classes];
    for (i, &y) in pool.labels().iter().enumerate() {
        groups[y as usize].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Largest-remainder apportionment of `quota` by weights `w` (ties broken
/// by lower index, so the result is deterministic).
fn apportion(quota: usize, w: &[f64]) -> Vec<usize> {
    let total: f64 = w.iter().sum();
    let shares: Vec<f64> = w.iter().map(|x| x / total * quota as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..(quota - assigned) {
        counts[order[k % w.len()]] += 1;
    }
    counts
}

/// Split the pool into disjoint per-device index streams.
///
/// IID deals each class round-robin across devices (per-device class counts
/// differ by at most one), then shuffles each device's arrival order.
/// Dirichlet draws a per-device class distribution from `Dirichlet(gamma *
/// 1)` and fills equal per-device quotas from per-class queues, falling back
/// to whatever classes remain when one runs out.
pub fn partition_assign(
    pool: &SampleBatch,
    spec: &PartitionSpec,
    devices: usize,
) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    if pool.is_empty() {
        return Err(Error::Data("cannot partition an empty pool".into()));
    }
    if devices == 0 || devices > pool.len() {
        return Err(Error::Data(format!(
            "device count {devices} invalid for pool of {} samples",
            pool.len()
        )));
    }
    let key = StreamKey::new(spec.seed);
    let mut streams: Vec<Vec<usize>> = vec![Vec::new(); devices];

    match spec.mode {
        PartitionMode::Iid => {
            for (c, group) in class_groups(pool).into_iter().enumerate() {
                let mut group = group;
                group.shuffle(&mut key.stream(StreamPurpose::Partition, c as u64, 0));
                for (j, idx) in group.into_iter().enumerate() {
                    streams[(j + c) % devices].push(idx);
                }
            }
        }
        PartitionMode::Dirichlet => {
            let groups = class_groups(pool);
            let integral = pool.labels().iter().all(|&y| y.fract() == 0.0 && y >= 0.0);
            if !integral {
                return Err(Error::Data(
                    "dirichlet partition requires integer class labels".into(),
                ));
            }
            let mut queues: Vec<Vec<usize>> = groups
                .into_iter()
                .enumerate()
                .map(|(c, mut g)| {
                    g.shuffle(&mut key.stream(StreamPurpose::Partition, c as u64, 0));
                    g
                })
                .collect();
            let classes = queues.len();
            let gamma = Gamma::new(spec.gamma, 1.0)
                .map_err(|e| Error::Config(format!("bad gamma: {e}")))?;
            let base_quota = pool.len() / devices;
            for (n, stream) in streams.iter_mut().enumerate() {
                let quota = base_quota + usize::from(n < pool.len() % devices);
                let mut rng = key.stream(StreamPurpose::Partition, n as u64, 1);
                let mut proportions: Vec<f64> =
                    (0..classes).map(|_| gamma.sample(&mut rng).max(1e-300)).collect();
                let total: f64 = proportions.iter().sum();
                for p in &mut proportions {
                    *p /= total;
                }
                let targets = apportion(quota, &proportions);
                let mut shortfall = 0usize;
                for (c, &want) in targets.iter().enumerate() {
                    let take = want.min(queues[c].len());
                    shortfall += want - take;
                    stream.extend(queues[c].drain(..take));
                }
                // Class pools can run dry under heavy skew; backfill from
                // whatever remains so quotas stay exact.
                let remaining: usize = queues.iter().map(Vec::len).sum();
                if remaining < shortfall {
                    return Err(Error::Data("pool exhausted during partition".into()));
                }
                let mut c = 0;
                while shortfall > 0 {
                    if let Some(idx) = queues[c % classes].pop() {
                        stream.push(idx);
                        shortfall -= 1;
                    }
                    c += 1;
                }
            }
        }
    }

    for (n, stream) in streams.iter_mut().enumerate() {
        stream.shuffle(&mut key.stream(StreamPurpose::ArrivalOrder, n as u64, 0));
    }
    Ok(streams)
}

/// A device's pre-materialized arrival queue.
#[derive(Debug, Clone)]
pub struct DeviceStream {
    batch: SampleBatch,
    cursor: usize,
}

impl DeviceStream {
    pub fn new(batch: SampleBatch) -> Self {
        Self { batch, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.batch.len() - self.cursor
    }

    /// Take the next `count` samples in arrival order.
    pub fn take(&mut self, count: usize) -> Result<SampleBatch> {
        if count > self.remaining() {
            return Err(Error::Schedule(format!(
                "device stream exhausted: need {count}, have {}",
                self.remaining()
            )));
        }
        let indices: Vec<usize> = (self.cursor..self.cursor + count).collect();
        self.cursor += count;
        self.batch.select(&indices)
    }
}

/// Perform the round-`t` sensing step for one device: append `D_t^n` new
/// samples from its stream. Existing samples are never touched.
pub fn sense(
    device: &mut DeviceState,
    round: usize,
    schedule: &SensingSchedule,
    stream: &mut DeviceStream,
) -> Result<()> {
    let count = schedule.new_count(device.id, round);
    if count == 0 {
        return Ok(());
    }
    let fresh = stream.take(count)?;
    device.data.append(&fresh)?;
    let expected = schedule.cumulative(device.id, round);
    if device.data_len() != expected {
        return Err(Error::Schedule(format!(
            "device {} holds {} samples after round {round}, schedule says {expected}",
            device.id,
            device.data_len()
        )));
    }
    Ok(())
}
