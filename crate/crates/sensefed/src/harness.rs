//! Experiment orchestration: the four-step round loop (broadcast, sense,
//! local train, aggregate + global update), metrics and cost recording,
//! parameter sweeps, and bound-report emission.
//!
//! Determinism contract: every random choice draws from a stream keyed by
//! `(seed, purpose, device, round)`, rounds are strictly sequential, and
//! per-device work inside a round is order-independent, so serial and
//! parallel execution produce identical results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::analysis::{
    complexity_proxies, estimate_constants, theorem1_bound, theorem2_bound, Algorithm,
    AssumptionConstants, BoundReport, ComplexityProxies, ConstSource, ConstantProbe, RoundMetrics,
    TrainingTrace,
};
use crate::channel::{
    draw_channel, error_free_aggregate, ota_aggregate, AggregationResult, ChannelRealization,
};
use crate::config::ExperimentConfig;
use crate::cost::{
    comm_energy, comm_latency, comp_energy, comp_latency, round_cost, DeviceRoundCost, RoundCost,
};
use crate::data::{generate_pool, load_pool, Generator, SampleBatch};
use crate::error::{Error, Result};
use crate::learning::{
    fedavg_global_update, fedavg_local_update, fedsgd_global_update, local_gradient, local_loss,
    predict_accuracy, LocalUpdateConfig, ModelKind, ModelSpec,
};
use crate::model::{weight_fraction, DeviceState, ParamVector, SensingSchedule};
use crate::rng::{StreamKey, StreamPurpose};
use crate::sensing::{build_schedule, partition_assign, sense, DeviceStream};

/// Number of probe batches per device for the mini-batch variance estimate.
const VARIANCE_PROBE_BATCHES: usize = 4;

/// A fully prepared experiment, ready to run round by round.
pub struct Experiment {
    cfg: ExperimentConfig,
    spec: ModelSpec,
    schedule: SensingSchedule,
    devices: Vec<DeviceState>,
    streams: Vec<DeviceStream>,
    test_pool: SampleBatch,
    global: ParamVector,
    key: StreamKey,
    update_cfg: LocalUpdateConfig,
    f0: Option<f64>,
    completed_rounds: usize,
}

/// Everything a run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub trace: TrainingTrace,
    pub costs: Vec<RoundCost>,
    pub config_echo: String,
    pub final_model: ParamVector,
    /// Aggregation weights of the final round, used by the variance term.
    pub final_rho: Vec<f64>,
    /// Known optimum value (0 for the quadratic kind).
    pub fstar_hint: Option<f64>,
    pub wall_clock_s: f64,
}

impl ExperimentResult {
    /// `F* `: the known optimum if any, otherwise the best observed loss.
    pub fn fstar(&self) -> Option<f64> {
        self.fstar_hint.or_else(|| self.trace.min_loss())
    }
}

fn divergence(round: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(step) => Error::Divergence { round, step },
        other => other,
    }
}

impl Experiment {
    /// Validate the config, build pools, partition, schedule, and devices.
    /// Every precondition that can fail mid-run is checked here instead.
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.model_spec()?;
        let key = StreamKey::new(cfg.seed);
        let totals = cfg.device_totals()?;
        let initial = vec![cfg.sensing.initial_per_device; cfg.devices];
        let schedule = build_schedule(&cfg.schedule_strategy()?, &totals, cfg.rounds, &initial)?;
        if cfg.rounds > 0 && schedule.round_cumulative_total(1) == 0 {
            return Err(Error::Config(
                "schedule must deliver at least one sample by round 1".into(),
            ));
        }

        let (train_pool, test_pool) = match cfg.data.source.as_str() {
            "synthetic" => {
                let classes = spec.classes().unwrap_or(1);
                let generator = match cfg.data.generator.as_str() {
                    "blobs" => Generator::Blobs {
                        classes,
                        class_sep: cfg.data.class_sep,
                        noise: cfg.data.noise,
                    },
                    "logistic_teacher" => Generator::LogisticTeacher { classes },
                    other => return Err(Error::Config(format!("unknown generator `{other}`"))),
                };
                let train = generate_pool(
                    &generator,
                    cfg.train_pool_size()?,
                    spec.feature_dim,
                    &mut key.stream(StreamPurpose::PoolTrain, 0, 0),
                )?;
                let test = generate_pool(
                    &generator,
                    cfg.data.test_samples,
                    spec.feature_dim,
                    &mut key.stream(StreamPurpose::PoolTest, 0, 0),
                )?;
                (train, test)
            }
            "file" => {
                let path = cfg.data.path.as_ref().expect("validated");
                let pool = load_pool(path)?;
                if pool.feature_dim() != spec.feature_dim {
                    return Err(Error::Config(format!(
                        "pool feature dim {} does not match model feature_dim {}",
                        pool.feature_dim(),
                        spec.feature_dim
                    )));
                }
                if cfg.data.test_samples >= pool.len() {
                    return Err(Error::Config(format!(
                        "test_samples {} leaves no training data in a pool of {}",
                        cfg.data.test_samples,
                        pool.len()
                    )));
                }
                let split = pool.len() - cfg.data.test_samples;
                let train = pool.select(&(0..split).collect::<Vec<_>>())?;
                let test = pool.select(&(split..pool.len()).collect::<Vec<_>>())?;
                (train, test)
            }
            other => return Err(Error::Config(format!("unknown data source `{other}`"))),
        };

        let assignments = partition_assign(&train_pool, &cfg.partition_spec()?, cfg.devices)?;
        let hw = cfg.device_hardware();
        let mut devices = Vec::with_capacity(cfg.devices);
        let mut streams = Vec::with_capacity(cfg.devices);
        let global = spec.init_model(&mut key.stream(StreamPurpose::ModelInit, 0, 0));
        for (id, idx) in assignments.iter().enumerate() {
            let need = initial[id] + schedule.device_total(id);
            if idx.len() < need {
                return Err(Error::Config(format!(
                    "device {id} assigned {} samples but the schedule consumes {need}; \
                     increase data.train_samples",
                    idx.len()
                )));
            }
            let mut stream = DeviceStream::new(train_pool.select(idx)?);
            let seed_data = stream.take(initial[id])?;
            devices.push(DeviceState::new(id, seed_data, global.clone(), key, hw)?);
            streams.push(stream);
        }

        let update_cfg = cfg.local_update();
        let mut exp = Self {
            cfg,
            spec,
            schedule,
            devices,
            streams,
            test_pool,
            global,
            key,
            update_cfg,
            f0: None,
            completed_rounds: 0,
        };
        if exp.schedule.round_cumulative_total(0) > 0 {
            exp.f0 = Some(exp.global_loss(&exp.global)?);
        }
        Ok(exp)
    }

    /// rho-weighted loss of `w` over the devices' current cumulative data.
    fn global_loss(&self, w: &ParamVector) -> Result<f64> {
        let sizes: Vec<usize> = self.devices.iter().map(|d| d.data_len()).collect();
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Err(Error::Data("no data held by any device".into()));
        }
        let mut loss = 0.0;
        for dev in &self.devices {
            if dev.data_len() == 0 {
                continue;
            }
            let rho = dev.data_len() as f64 / total as f64;
            loss += rho * local_loss(w, &dev.data, &self.spec)?;
        }
        Ok(loss)
    }

    /// rho-weighted aggregate gradient of `w` over current device data,
    /// together with the per-device gradients (devices without data yield
    /// `None`).
    fn aggregate_gradient(
        &self,
        w: &ParamVector,
    ) -> Result<(Option<ParamVector>, Vec<Option<ParamVector>>)> {
        let per_device: Vec<Option<ParamVector>> = self
            .devices
            .iter()
            .map(|d| {
                if d.data_len() == 0 {
                    Ok(None)
                } else {
                    local_gradient(w, &d.data, &self.spec).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        let sizes: Vec<usize> = self.devices.iter().map(|d| d.data_len()).collect();
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Ok((None, per_device));
        }
        let mut agg = ParamVector::zeros(w.len());
        for (g, &s) in per_device.iter().zip(&sizes) {
            if let Some(g) = g {
                agg.add_scaled(g, s as f64 / total as f64);
            }
        }
        Ok((Some(agg), per_device))
    }

    /// Execute round `t` (1-based). Returns the round's metrics and cost.
    pub fn run_round(&mut self, t: usize) -> Result<(RoundMetrics, RoundCost)> {
        if t != self.completed_rounds + 1 || t > self.cfg.rounds {
            return Err(Error::Config(format!(
                "round {t} out of order (completed {})",
                self.completed_rounds
            )));
        }
        let w_prev = self.global.clone();

        // Gradient over the previous cumulative datasets, before sensing.
        let prev_sizes: Vec<usize> = self.devices.iter().map(|d| d.data_len()).collect();
        let s_prev_total: usize = prev_sizes.iter().sum();
        let grad_prev = if s_prev_total > 0 {
            self.aggregate_gradient(&w_prev)
                .map_err(|e| divergence(t, e))?
                .0
        } else {
            None
        };

        // Sense: each device appends its scheduled new samples.
        let schedule = &self.schedule;
        let sense_one = |(device, stream): (&mut DeviceState, &mut DeviceStream)| {
            sense(device, t, schedule, stream)
        };
        let pairs: Vec<(&mut DeviceState, &mut DeviceStream)> = self
            .devices
            .iter_mut()
            .zip(self.streams.iter_mut())
            .collect();
        if self.cfg.parallel_devices {
            pairs.into_par_iter().try_for_each(sense_one)?;
        } else {
            pairs.into_iter().try_for_each(sense_one)?;
        }

        let sizes: Vec<usize> = self.devices.iter().map(|d| d.data_len()).collect();
        let s_total: usize = sizes.iter().sum();
        let d_total = self.schedule.round_new_total(t);
        debug_assert_eq!(s_total, self.schedule.round_cumulative_total(t));

        if self.f0.is_none() {
            self.f0 = Some(self.global_loss(&w_prev).map_err(|e| divergence(t, e))?);
        }

        // Per-device gradients on the grown datasets at w_{t-1}; these feed
        // the gradient-averaging path, the probes, and the fresh-data
        // fallback for the first measurable gradient.
        let (agg_grad_curr, per_device_grads) = self
            .aggregate_gradient(&w_prev)
            .map_err(|e| divergence(t, e))?;
        let agg_grad_curr =
            agg_grad_curr.ok_or_else(|| Error::Data("no data after sensing".into()))?;

        // Freshly sensed data gradient (over the union of this round's new
        // samples), used for G_t probes and the no-prior-data fallback.
        let fresh_grad = {
            let mut parts: Vec<(usize, ParamVector)> = Vec::new();
            for dev in &self.devices {
                let fresh_count = self.schedule.new_count(dev.id, t);
                if fresh_count == 0 {
                    continue;
                }
                let start = dev.data_len() - fresh_count;
                let rows: Vec<usize> = (start..dev.data_len()).collect();
                let fresh = dev.data.select(&rows)?;
                parts.push((fresh_count, local_gradient(&w_prev, &fresh, &self.spec)?));
            }
            let total: usize = parts.iter().map(|(c, _)| c).sum();
            if total == 0 {
                None
            } else {
                let mut g = ParamVector::zeros(w_prev.len());
                for (c, part) in &parts {
                    g.add_scaled(part, *c as f64 / total as f64);
                }
                Some(g)
            }
        };

        let grad_norm_sq = match &grad_prev {
            Some(g) => g.norm_sq(),
            // First measurable round: gradient over the freshly sensed data.
            None => fresh_grad.as_ref().map(|g| g.norm_sq()).unwrap_or(0.0),
        };

        // Local computation.
        let uploads: Vec<ParamVector> = match self.cfg.algorithm {
            Algorithm::FedAvg => {
                let spec = &self.spec;
                let update_cfg = self.update_cfg;
                let key = self.key;
                let train_one = |device: &DeviceState| -> Result<ParamVector> {
                    if device.data_len() == 0 {
                        return Ok(w_prev.clone());
                    }
                    let mut rng = key.stream(StreamPurpose::MiniBatch, device.id as u64, t as u64);
                    fedavg_local_update(&w_prev, &device.data, &update_cfg, spec, &mut rng)
                };
                let out: Result<Vec<ParamVector>> = if self.cfg.parallel_devices {
                    self.devices.par_iter().map(train_one).collect()
                } else {
                    self.devices.iter().map(train_one).collect()
                };
                out.map_err(|e| divergence(t, e))?
            }
            Algorithm::FedSgd => per_device_grads
                .iter()
                .map(|g| g.clone().unwrap_or_else(|| ParamVector::zeros(w_prev.len())))
                .collect(),
        };
        for (dev, u) in self.devices.iter_mut().zip(&uploads) {
            dev.local_model = u.clone();
        }

        // Aggregate over the active devices (those holding data).
        let active: Vec<usize> = (0..self.devices.len())
            .filter(|&n| sizes[n] > 0)
            .collect();
        let active_sizes: Vec<usize> = active.iter().map(|&n| sizes[n]).collect();
        let weights = weight_fraction(&active_sizes)?;
        let upload_refs: Vec<&ParamVector> = active.iter().map(|&n| &uploads[n]).collect();

        let (agg, chan): (AggregationResult, Option<ChannelRealization>) = if self.cfg.error_free {
            (
                error_free_aggregate(&upload_refs, &weights).map_err(|e| divergence(t, e))?,
                None,
            )
        } else {
            let h = draw_channel(
                self.devices.len(),
                &mut self.key.stream(StreamPurpose::Fading, 0, t as u64),
            );
            let p_max = vec![self.cfg.channel.p_max; self.devices.len()];
            let chan = ChannelRealization::from_policy(
                h,
                &p_max,
                self.cfg.channel.sigma_z,
                self.cfg.power_policy()?,
            )?;
            let chan_active = chan.select(&active);
            let agg = ota_aggregate(
                &upload_refs,
                &weights,
                &chan_active,
                &mut self.key.stream(StreamPurpose::Noise, 0, t as u64),
            )
            .map_err(|e| divergence(t, e))?;
            (agg, Some(chan))
        };

        // Global update.
        self.global = match self.cfg.algorithm {
            Algorithm::FedAvg => fedavg_global_update(&agg.received).map_err(|e| divergence(t, e))?,
            Algorithm::FedSgd => fedsgd_global_update(&w_prev, &agg.received, self.cfg.training.eta)
                .map_err(|e| divergence(t, e))?,
        };

        // Metrics.
        let loss = self.global_loss(&self.global).map_err(|e| divergence(t, e))?;
        let (test_loss, test_acc) = if !self.test_pool.is_empty()
            && (t % self.cfg.eval_stride == 0 || t == self.cfg.rounds)
        {
            let tl = local_loss(&self.global, &self.test_pool, &self.spec)
                .map_err(|e| divergence(t, e))?;
            let ta = predict_accuracy(&self.global, &self.test_pool, &self.spec)?
                .unwrap_or(f64::NAN);
            (tl, ta)
        } else {
            (f64::NAN, f64::NAN)
        };

        let rho_full: Vec<f64> = sizes.iter().map(|&s| s as f64 / s_total as f64).collect();

        let probe = if self.cfg.record_probes {
            Some(self.build_probe(t, &w_prev, &agg_grad_curr, &per_device_grads, &rho_full, &fresh_grad)?)
        } else {
            None
        };

        // Costs. Idle devices neither compute nor transmit; in error-free
        // mode active devices are charged their full power budget.
        let q = self.spec.param_len();
        let t_comm = comm_latency(q, self.cfg.cost.symbols_per_block, self.cfg.cost.t_slot)?;
        let hw = self.cfg.device_hardware();
        let device_costs: Vec<DeviceRoundCost> = (0..self.devices.len())
            .map(|n| {
                let s_n = sizes[n];
                if s_n == 0 {
                    return Ok(DeviceRoundCost {
                        comp_latency: 0.0,
                        comp_energy: 0.0,
                        comm_energy: 0.0,
                    });
                }
                let epochs = match self.cfg.algorithm {
                    Algorithm::FedSgd => 1.0,
                    Algorithm::FedAvg => {
                        let batch = self.update_cfg.batch_size.min(s_n);
                        self.update_cfg.tau as f64 * batch as f64 / s_n as f64
                    }
                };
                let lat = comp_latency(hw.cycles_per_sample, s_n, hw.cpu_freq, epochs)?;
                let energy = comp_energy(hw.cycles_per_sample, hw.energy_coeff, hw.cpu_freq, s_n, epochs);
                let p_n = chan.as_ref().map_or(self.cfg.channel.p_max, |c| c.p[n]);
                Ok(DeviceRoundCost {
                    comp_latency: lat,
                    comp_energy: energy,
                    comm_energy: comm_energy(p_n, t_comm),
                })
            })
            .collect::<Result<_>>()?;
        let cost = round_cost(&device_costs, t_comm)?;

        let metrics = RoundMetrics {
            round: t,
            loss,
            grad_norm_sq,
            err_sq_norm: agg.error_sq_norm,
            test_loss,
            test_acc,
            s_total,
            d_total,
            device_sizes: sizes,
            rho: rho_full,
            probe,
        };
        self.completed_rounds = t;
        Ok((metrics, cost))
    }

    /// Assemble the per-round probe for constant estimation: smoothness
    /// pair, dissimilarity data, fresh-data gradient, and mini-batch
    /// variance (sampled from a dedicated stream so training is unaffected).
    fn build_probe(
        &self,
        t: usize,
        w_prev: &ParamVector,
        agg_grad_curr: &ParamVector,
        per_device_grads: &[Option<ParamVector>],
        rho: &[f64],
        fresh_grad: &Option<ParamVector>,
    ) -> Result<ConstantProbe> {
        let displacement_sq = self.global.sub(w_prev)?.norm_sq();
        let (agg_grad_next, _) = self.aggregate_gradient(&self.global)?;
        let grad_diff_sq = agg_grad_next
            .as_ref()
            .map(|g| g.sub(agg_grad_curr).map(|d| d.norm_sq()))
            .transpose()?;

        let per_device_grad_sq: Vec<f64> = per_device_grads
            .iter()
            .map(|g| g.as_ref().map(|g| g.norm_sq()).unwrap_or(0.0))
            .collect();

        let minibatch_variance = if self.cfg.algorithm == Algorithm::FedAvg {
            let mut worst: f64 = 0.0;
            for dev in &self.devices {
                if dev.data_len() == 0 {
                    continue;
                }
                let full = per_device_grads[dev.id]
                    .as_ref()
                    .expect("device has data");
                let batch = self.update_cfg.batch_size.min(dev.data_len());
                let mut rng = self
                    .key
                    .stream(StreamPurpose::VarianceProbe, dev.id as u64, t as u64);
                let mut acc = 0.0;
                for _ in 0..VARIANCE_PROBE_BATCHES {
                    let idx =
                        rand::seq::index::sample(&mut rng, dev.data_len(), batch).into_vec();
                    let g = local_gradient(w_prev, &dev.data.select(&idx)?, &self.spec)?;
                    acc += g.sub(full)?.norm_sq();
                }
                worst = worst.max(acc / VARIANCE_PROBE_BATCHES as f64);
            }
            Some(worst)
        } else {
            None
        };

        Ok(ConstantProbe {
            round: t,
            displacement_sq: Some(displacement_sq),
            grad_diff_sq,
            global_grad_sq: agg_grad_curr.norm_sq(),
            per_device_grad_sq,
            rho: rho.to_vec(),
            fresh_grad_sq: fresh_grad.as_ref().map(|g| g.norm_sq()),
            minibatch_variance,
        })
    }

    /// Run all configured rounds and collect the result.
    pub fn run(mut self) -> Result<ExperimentResult> {
        let start = Instant::now();
        let mut rounds = Vec::with_capacity(self.cfg.rounds);
        let mut costs = Vec::with_capacity(self.cfg.rounds);
        for t in 1..=self.cfg.rounds {
            let (metrics, cost) = self.run_round(t)?;
            rounds.push(metrics);
            costs.push(cost);
        }
        let final_rho = rounds
            .last()
            .map(|r: &RoundMetrics| r.rho.clone())
            .unwrap_or_default();
        let trace = TrainingTrace {
            algorithm: self.cfg.algorithm,
            eta: self.cfg.training.eta,
            tau: self.cfg.training.tau,
            s0_total: self.schedule.round_cumulative_total(0),
            f0: self.f0,
            rounds,
        };
        let fstar_hint = match self.spec.kind {
            ModelKind::Quadratic { .. } => Some(0.0),
            _ => None,
        };
        Ok(ExperimentResult {
            trace,
            costs,
            config_echo: self.cfg.echo(),
            final_model: self.global,
            final_rho,
            fstar_hint,
            wall_clock_s: start.elapsed().as_secs_f64(),
        })
    }
}

/// Prepare and run in one call.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<ExperimentResult> {
    Experiment::prepare(cfg)?.run()
}

/// Fixed column order of `metrics.csv`.
pub const METRIC_COLUMNS: &str = "round,loss,grad_norm_sq,err_sq_norm,test_loss,test_acc,S_t,D_t,\
comm_latency_s,comp_latency_s,total_latency_s,comm_energy_j,comp_energy_j,total_energy_j";

/// Render the metrics CSV (shortest round-trip float formatting, so equal
/// runs produce byte-identical files).
pub fn metrics_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(METRIC_COLUMNS);
    out.push('\n');
    for (r, c) in result.trace.rounds.iter().zip(&result.costs) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.round,
            r.loss,
            r.grad_norm_sq,
            r.err_sq_norm,
            r.test_loss,
            r.test_acc,
            r.s_total,
            r.d_total,
            c.comm_latency,
            c.max_comp_latency(),
            c.total_latency,
            c.comm_energy_total(),
            c.comp_energy_total(),
            c.total_energy,
        ));
    }
    out
}

/// Write `metrics.csv`, `trace.json`, `config.toml`, and `summary.txt`.
pub fn write_result(dir: &Path, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(result))?;
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| Error::Data(format!("serialize result: {e}")))?;
    std::fs::write(dir.join("trace.json"), json)?;
    std::fs::write(dir.join("config.toml"), &result.config_echo)?;

    let total_latency: f64 = result.costs.iter().map(|c| c.total_latency).sum();
    let total_energy: f64 = result.costs.iter().map(|c| c.total_energy).sum();
    let summary = format!(
        "algorithm: {}\nrounds: {}\nfinal_loss: {}\nfinal_test_loss: {}\nfinal_test_acc: {}\n\
         total_latency_s: {}\ntotal_energy_j: {}\nwall_clock_s: {}\n",
        result.trace.algorithm,
        result.trace.len(),
        result.trace.rounds.last().map_or(f64::NAN, |r| r.loss),
        result.trace.rounds.last().map_or(f64::NAN, |r| r.test_loss),
        result.trace.rounds.last().map_or(f64::NAN, |r| r.test_acc),
        total_latency,
        total_energy,
        result.wall_clock_s,
    );
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

/// Load a result directory written by [`write_result`].
pub fn load_result(dir: &Path) -> Result<ExperimentResult> {
    let json = std::fs::read_to_string(dir.join("trace.json"))?;
    serde_json::from_str(&json).map_err(|e| Error::Parse(format!("trace.json: {e}")))
}

/// How the assumption constants for a bound report are obtained.
#[derive(Debug, Clone)]
pub enum ConstantsSource {
    /// Estimate from the trace's probes.
    Estimated,
    /// Use the given constants.
    Provided(AssumptionConstants),
}

/// Evaluate the convergence bound for a finished run.
///
/// Constants are estimated over the whole trace unless provided. `F*` is
/// the known optimum for the quadratic kind and the best observed loss
/// otherwise.
pub fn evaluate_bounds(
    result: &ExperimentResult,
    source: ConstantsSource,
) -> Result<(BoundReport, AssumptionConstants, ComplexityProxies)> {
    let trace = &result.trace;
    let cfg = ExperimentConfig::from_toml_str(&result.config_echo)?;
    let consts = match source {
        ConstantsSource::Provided(mut c) => {
            c.source = ConstSource::Provided;
            c.validate()?;
            c
        }
        ConstantsSource::Estimated => {
            let probes = trace.probes();
            if probes.len() != trace.len() {
                return Err(Error::InvalidBound(
                    "trace lacks per-round probes; rerun with record_probes = true".into(),
                ));
            }
            let iid = cfg.partition.mode == "iid";
            estimate_constants(&probes, iid)?
        }
    };
    let f0 = trace
        .f0
        .ok_or_else(|| Error::InvalidBound("trace has no initial loss".into()))?;
    let fstar = result.fstar().unwrap_or(0.0);
    let gap = (f0 - fstar).max(0.0);
    let report = match trace.algorithm {
        Algorithm::FedAvg => theorem1_bound(trace, &consts, trace.eta, trace.tau, gap, &result.final_rho)?,
        Algorithm::FedSgd => theorem2_bound(trace, &consts, trace.eta, gap)?,
    };
    let proxies = complexity_proxies(trace, &consts);
    Ok((report, consts, proxies))
}

/// Render the machine-readable bound report: one `name,value` row per term,
/// then total, measured average, and feasibility.
pub fn bound_report_csv(report: &BoundReport) -> String {
    let mut out = String::from("term_name,value\n");
    for (term, value) in &report.terms {
        out.push_str(&format!("{term},{value}\n"));
    }
    out.push_str(&format!(
        "total,{}\n",
        report.total.map_or(f64::NAN, |t| t)
    ));
    out.push_str(&format!(
        "measured_avg_grad_sq,{}\n",
        report.measured_avg_grad_sq.unwrap_or(f64::NAN)
    ));
    out.push_str(&format!("feasible,{}\n", report.feasible));
    out
}

/// Human-readable bound report.
pub fn bound_report_text(
    report: &BoundReport,
    consts: &AssumptionConstants,
    proxies: &ComplexityProxies,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "bound report ({}, constants {:?})\n",
        report.algorithm, report.source
    ));
    out.push_str(&format!("feasible: {}\n", report.feasible));
    for (term, value) in &report.terms {
        out.push_str(&format!("  {term:<24} {value:.6e}\n"));
    }
    if let Some(total) = report.total {
        out.push_str(&format!("  {:<24} {total:.6e}\n", "total"));
    }
    if let Some(measured) = report.measured_avg_grad_sq {
        out.push_str(&format!("  {:<24} {measured:.6e}\n", "measured_avg_grad_sq"));
    }
    out.push_str(&format!(
        "constants: L={:.6e} sigma_sq={:.6e} alpha_sq={:.6} beta_sq={:.6e}\n",
        consts.smoothness, consts.grad_variance, consts.alpha_sq, consts.beta_sq
    ));
    out.push_str(&format!(
        "complexity proxies: M1={:.6e} M2={:.6e} M3={:.6e}\n",
        proxies.m1, proxies.m2, proxies.m3
    ));
    out
}

/// Write `bound_report.txt` and `bound_report.csv` into a result directory.
pub fn emit_bounds(dir: &Path, source: ConstantsSource) -> Result<BoundReport> {
    let result = load_result(dir)?;
    let (report, consts, proxies) = evaluate_bounds(&result, source)?;
    std::fs::write(dir.join("bound_report.csv"), bound_report_csv(&report))?;
    std::fs::write(
        dir.join("bound_report.txt"),
        bound_report_text(&report, &consts, &proxies),
    )?;
    Ok(report)
}

/// Sweepable configuration axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Gamma,
    SigmaZ,
    Eta,
    Tau,
    Schedule,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gamma" => Ok(Self::Gamma),
            "sigma_z" => Ok(Self::SigmaZ),
            "eta" => Ok(Self::Eta),
            "tau" => Ok(Self::Tau),
            "schedule" => Ok(Self::Schedule),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad {what} value `{value}`"));
        match self {
            SweepAxis::Gamma => {
                cfg.partition.mode = "dirichlet".into();
                cfg.partition.gamma = value.parse().map_err(|_| bad("gamma"))?;
            }
            SweepAxis::SigmaZ => {
                cfg.channel.sigma_z = value.parse().map_err(|_| bad("sigma_z"))?;
            }
            SweepAxis::Eta => {
                cfg.training.eta = value.parse().map_err(|_| bad("eta"))?;
            }
            SweepAxis::Tau => {
                cfg.training.tau = value.parse().map_err(|_| bad("tau"))?;
            }
            SweepAxis::Schedule => {
                cfg.sensing.strategy = value.to_string();
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::SigmaZ => "sigma_z",
            SweepAxis::Eta => "eta",
            SweepAxis::Tau => "tau",
            SweepAxis::Schedule => "schedule",
        };
        write!(f, "{s}")
    }
}

/// Headline numbers of one run, for sweep tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_loss: f64,
    pub best_loss: f64,
    pub final_test_loss: f64,
    pub final_test_acc: f64,
    pub avg_grad_sq: f64,
    pub rounds_to_target: Option<usize>,
    pub total_latency_s: f64,
    pub total_energy_j: f64,
}

impl RunSummary {
    pub fn from_result(result: &ExperimentResult, target_loss: Option<f64>) -> Self {
        let trace = &result.trace;
        let rounds_to_target = target_loss.and_then(|target| {
            trace
                .rounds
                .iter()
                .find(|r| r.loss <= target)
                .map(|r| r.round)
        });
        Self {
            final_loss: trace.rounds.last().map_or(f64::NAN, |r| r.loss),
            best_loss: trace.min_loss().unwrap_or(f64::NAN),
            final_test_loss: trace.rounds.last().map_or(f64::NAN, |r| r.test_loss),
            final_test_acc: trace.rounds.last().map_or(f64::NAN, |r| r.test_acc),
            avg_grad_sq: trace.measured_avg_grad_sq().unwrap_or(f64::NAN),
            rounds_to_target,
            total_latency_s: result.costs.iter().map(|c| c.total_latency).sum(),
            total_energy_j: result.costs.iter().map(|c| c.total_energy).sum(),
        }
    }
}

/// One (axis value, seed) cell of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis_value: String,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub replications: usize,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Median of `pick` over the successful replications of one value.
    pub fn median_over_seeds<F>(&self, axis_value: &str, pick: F) -> Option<f64>
    where
        F: Fn(&RunSummary) -> f64,
    {
        let mut vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.axis_value == axis_value)
            .filter_map(|c| c.summary.as_ref().map(&pick))
            .filter(|v| v.is_finite())
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Some(vals[vals.len() / 2])
    }

    /// Comparison table: one row per cell plus a median row per value.
    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "axis_value,seed,final_loss,best_loss,final_test_loss,final_test_acc,\
             rounds_to_target,total_latency_s,total_energy_j,error\n",
        );
        for c in &self.cells {
            match &c.summary {
                Some(s) => out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},\n",
                    c.axis_value,
                    c.seed,
                    s.final_loss,
                    s.best_loss,
                    s.final_test_loss,
                    s.final_test_acc,
                    s.rounds_to_target.map_or(String::from(""), |r| r.to_string()),
                    s.total_latency_s,
                    s.total_energy_j,
                )),
                None => out.push_str(&format!(
                    "{},{},,,,,,,,{}\n",
                    c.axis_value,
                    c.seed,
                    c.error.as_deref().unwrap_or("unknown")
                )),
            }
        }
        let mut values: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !values.contains(&c.axis_value.as_str()) {
                values.push(&c.axis_value);
            }
        }
        for v in values {
            if let Some(median) = self.median_over_seeds(v, |s| s.final_loss) {
                out.push_str(&format!("median:{v},,{median},,,,,,,\n"));
            }
        }
        out
    }
}

/// Run one experiment per (value, seed) pair; failures mark their cell and
/// the sweep continues. Seeds are `base.seed + replication index`.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    replications: usize,
) -> SweepResult {
    let mut cells = Vec::with_capacity(values.len() * replications);
    for value in values {
        for rep in 0..replications {
            let mut cfg = base.clone();
            cfg.raw_toml = None;
            cfg.seed = base.seed + rep as u64;
            let outcome = axis
                .apply(&mut cfg, value)
                .and_then(|_| cfg.validate())
                .and_then(|_| run_experiment(cfg.clone()));
            let (summary, error) = match outcome {
                Ok(result) => (
                    Some(RunSummary::from_result(&result, base.target_loss)),
                    None,
                ),
                Err(e) => (None, Some(e.to_string())),
            };
            cells.push(SweepCell {
                axis_value: value.clone(),
                seed: cfg_seed(base.seed, rep),
                summary,
                error,
            });
        }
    }
    SweepResult {
        axis: axis.to_string(),
        replications,
        cells,
    }
}

fn cfg_seed(base: u64, rep: usize) -> u64 {
    base + rep as u64
}
