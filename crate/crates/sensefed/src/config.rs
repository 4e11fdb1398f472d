//! Experiment configuration: a strict TOML schema with cross-field
//! validation. Unknown keys are errors, and every module precondition that
//! can be checked before round 1 is checked here or in harness setup.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::analysis::Algorithm;
use crate::channel::PowerPolicy;
use crate::error::{Error, Result};
use crate::learning::{LocalUpdateConfig, ModelKind, ModelSpec};
use crate::model::{DeviceHardware, ParamVector};
use crate::sensing::{PartitionMode, PartitionSpec, ScheduleStrategy};

fn d_rounds() -> usize {
    100
}
fn d_devices() -> usize {
    10
}
fn d_one() -> usize {
    1
}
fn d_true() -> bool {
    true
}

/// Top-level experiment description. Defaults follow the reference
/// wireless setup (10 devices, unit noise variance, 10 W power budget,
/// learning rate 1e-3, 6000 samples per device); everything else carries
/// documented desk-scale defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_devices")]
    pub devices: usize,
    /// Bypass the channel: aggregation is the exact weighted sum.
    #[serde(default)]
    pub error_free: bool,
    /// Run per-device sense/train steps on a thread pool. Results are
    /// identical to serial execution.
    #[serde(default)]
    pub parallel_devices: bool,
    /// Evaluate test loss/accuracy every this many rounds.
    #[serde(default = "d_one")]
    pub eval_stride: usize,
    /// Record per-round probes for constant estimation.
    #[serde(default = "d_true")]
    pub record_probes: bool,
    /// Optional loss threshold for rounds-to-target reporting.
    #[serde(default)]
    pub target_loss: Option<f64>,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub sensing: SensingSection,
    #[serde(default)]
    pub partition: PartitionSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Original file text, kept so results echo the config byte for byte.
    #[serde(skip)]
    pub raw_toml: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `quadratic`, `logistic`, or `mlp`.
    pub kind: String,
    pub feature_dim: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Target center for the quadratic kind; defaults to all ones.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

fn default_classes() -> usize {
    2
}
fn default_hidden() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_tau")]
    pub tau: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_eta() -> f64 {
    0.001
}
fn default_tau() -> usize {
    5
}
fn default_batch() -> usize {
    32
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            eta: default_eta(),
            tau: default_tau(),
            batch_size: default_batch(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingSection {
    /// `uniform`, `front_loaded`, `all_at_start`, or `explicit`.
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_total")]
    pub total_per_device: usize,
    /// Per-device totals overriding `total_per_device`.
    #[serde(default)]
    pub per_device_totals: Option<Vec<usize>>,
    /// Devices x rounds matrix for the explicit strategy.
    #[serde(default)]
    pub explicit: Option<Vec<Vec<usize>>>,
    /// Initial cumulative size `S_0^n`, same for every device.
    #[serde(default)]
    pub initial_per_device: usize,
}

fn default_strategy() -> String {
    "uniform".into()
}
fn default_total() -> usize {
    6000
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            total_per_device: default_total(),
            per_device_totals: None,
            explicit: None,
            initial_per_device: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    /// `iid` or `dirichlet`.
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_mode() -> String {
    "iid".into()
}
fn default_gamma() -> f64 {
    1.0
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            gamma: default_gamma(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// `synthetic` or `file`.
    #[serde(default = "default_source")]
    pub source: String,
    /// `blobs` or `logistic_teacher` for the synthetic source.
    #[serde(default = "default_generator")]
    pub generator: String,
    /// Training pool size; defaults to exactly what the schedule needs.
    #[serde(default)]
    pub train_samples: Option<usize>,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    #[serde(default = "default_class_sep")]
    pub class_sep: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Pool file for the `file` source; the last `test_samples` rows are
    /// held out for evaluation.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn default_source() -> String {
    "synthetic".into()
}
fn default_generator() -> String {
    "blobs".into()
}
fn default_test_samples() -> usize {
    500
}
fn default_class_sep() -> f64 {
    2.0
}
fn default_noise() -> f64 {
    1.0
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: default_source(),
            generator: default_generator(),
            train_samples: None,
            test_samples: default_test_samples(),
            class_sep: default_class_sep(),
            noise: default_noise(),
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// `full_inversion` or `fixed_lambda`.
    #[serde(default = "default_policy")]
    pub policy: String,
    /// Denoising factor for the `fixed_lambda` policy.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Noise variance per analog symbol.
    #[serde(default = "default_sigma_z")]
    pub sigma_z: f64,
    /// Per-device transmit power budget.
    #[serde(default = "default_p_max")]
    pub p_max: f64,
}

fn default_policy() -> String {
    "full_inversion".into()
}
fn default_sigma_z() -> f64 {
    1.0
}
fn default_p_max() -> f64 {
    10.0
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            lambda: None,
            sigma_z: default_sigma_z(),
            p_max: default_p_max(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default = "default_t_slot")]
    pub t_slot: f64,
    #[serde(default = "default_symbols")]
    pub symbols_per_block: usize,
    #[serde(default = "default_cycles")]
    pub cycles_per_sample: f64,
    #[serde(default = "default_coeff")]
    pub energy_coeff: f64,
    #[serde(default = "default_freq")]
    pub cpu_freq: f64,
}

fn default_t_slot() -> f64 {
    1e-3
}
fn default_symbols() -> usize {
    14
}
fn default_cycles() -> f64 {
    1e6
}
fn default_coeff() -> f64 {
    1e-28
}
fn default_freq() -> f64 {
    1e9
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            t_slot: default_t_slot(),
            symbols_per_block: default_symbols(),
            cycles_per_sample: default_cycles(),
            energy_coeff: default_coeff(),
            cpu_freq: default_freq(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.raw_toml = Some(text.to_string());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The config as written, or a round-trip serialization for configs
    /// built or mutated in code.
    pub fn echo(&self) -> String {
        match &self.raw_toml {
            Some(raw) => raw.clone(),
            None => toml::to_string(self).unwrap_or_default(),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let kind = match m.kind.as_str() {
            "quadratic" => {
                let center = match &m.center {
                    Some(c) => ParamVector::from_vec(c.clone())?,
                    None => ParamVector::from_vec(vec![1.0; m.feature_dim])?,
                };
                ModelKind::Quadratic { center }
            }
            "logistic" => ModelKind::Logistic { classes: m.classes },
            "mlp" => ModelKind::Mlp {
                hidden: m.hidden,
                classes: m.classes,
            },
            other => return Err(Error::Config(format!("unknown model kind `{other}`"))),
        };
        let spec = ModelSpec {
            kind,
            feature_dim: m.feature_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn local_update(&self) -> LocalUpdateConfig {
        LocalUpdateConfig {
            eta: self.training.eta,
            tau: self.training.tau,
            batch_size: self.training.batch_size,
        }
    }

    pub fn schedule_strategy(&self) -> Result<ScheduleStrategy> {
        match self.sensing.strategy.as_str() {
            "uniform" => Ok(ScheduleStrategy::Uniform),
            "front_loaded" => Ok(ScheduleStrategy::FrontLoaded),
            "all_at_start" => Ok(ScheduleStrategy::AllAtStart),
            "explicit" => {
                let matrix = self.sensing.explicit.clone().ok_or_else(|| {
                    Error::Config("explicit strategy requires sensing.explicit".into())
                })?;
                Ok(ScheduleStrategy::Explicit(matrix))
            }
            other => Err(Error::Config(format!("unknown schedule strategy `{other}`"))),
        }
    }

    /// Per-device sample totals (explicit matrices report their row sums).
    pub fn device_totals(&self) -> Result<Vec<usize>> {
        if let Some(explicit) = &self.sensing.explicit {
            if self.sensing.strategy == "explicit" {
                return Ok(explicit.iter().map(|row| row.iter().sum()).collect());
            }
        }
        match &self.sensing.per_device_totals {
            Some(v) => {
                if v.len() != self.devices {
                    return Err(Error::Config(format!(
                        "per_device_totals has {} entries for {} devices",
                        v.len(),
                        self.devices
                    )));
                }
                Ok(v.clone())
            }
            None => Ok(vec![self.sensing.total_per_device; self.devices]),
        }
    }

    pub fn partition_spec(&self) -> Result<PartitionSpec> {
        let mode = match self.partition.mode.as_str() {
            "iid" => PartitionMode::Iid,
            "dirichlet" => PartitionMode::Dirichlet,
            other => return Err(Error::Config(format!("unknown partition mode `{other}`"))),
        };
        let spec = PartitionSpec {
            mode,
            gamma: self.partition.gamma,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn power_policy(&self) -> Result<PowerPolicy> {
        match self.channel.policy.as_str() {
            "full_inversion" => Ok(PowerPolicy::FullInversion),
            "fixed_lambda" => {
                let lambda = self.channel.lambda.ok_or_else(|| {
                    Error::Config("fixed_lambda policy requires channel.lambda".into())
                })?;
                Ok(PowerPolicy::FixedLambda(lambda))
            }
            other => Err(Error::Config(format!("unknown power policy `{other}`"))),
        }
    }

    pub fn device_hardware(&self) -> DeviceHardware {
        DeviceHardware {
            cycles_per_sample: self.cost.cycles_per_sample,
            energy_coeff: self.cost.energy_coeff,
            cpu_freq: self.cost.cpu_freq,
            max_power: self.channel.p_max,
        }
    }

    /// Training pool size: explicit, or exactly what the schedule consumes.
    pub fn train_pool_size(&self) -> Result<usize> {
        if let Some(n) = self.data.train_samples {
            return Ok(n);
        }
        let totals = self.device_totals()?;
        let need: usize = totals
            .iter()
            .map(|t| t + self.sensing.initial_per_device)
            .sum();
        Ok(need.max(self.devices))
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 {
            return Err(Error::Config("devices must be at least 1".into()));
        }
        if self.eval_stride == 0 {
            return Err(Error::Config("eval_stride must be at least 1".into()));
        }
        let spec = self.model_spec()?;
        self.local_update().validate()?;
        if !(self.training.eta.is_finite() && self.training.eta >= 0.0) {
            return Err(Error::Config("training.eta must be non-negative".into()));
        }
        let strategy = self.schedule_strategy()?;
        if let ScheduleStrategy::Explicit(matrix) = &strategy {
            if matrix.len() != self.devices {
                return Err(Error::Config(format!(
                    "explicit schedule has {} rows for {} devices",
                    matrix.len(),
                    self.devices
                )));
            }
            if matrix.iter().any(|row| row.len() != self.rounds) {
                return Err(Error::Config(format!(
                    "explicit schedule rows must have {} columns",
                    self.rounds
                )));
            }
        }
        self.device_totals()?;
        self.partition_spec()?;
        self.power_policy()?;
        if !(self.channel.sigma_z.is_finite() && self.channel.sigma_z >= 0.0) {
            return Err(Error::Config("channel.sigma_z must be >= 0".into()));
        }
        if !(self.channel.p_max.is_finite() && self.channel.p_max > 0.0) {
            return Err(Error::Config("channel.p_max must be positive".into()));
        }
        self.device_hardware().validate()?;
        crate::cost::CostConfig {
            t_slot: self.cost.t_slot,
            symbols_per_block: self.cost.symbols_per_block,
            param_len: spec.param_len(),
        }
        .validate()?;
        match self.data.source.as_str() {
            "synthetic" => match self.data.generator.as_str() {
                "blobs" | "logistic_teacher" => {}
                other => {
                    return Err(Error::Config(format!("unknown generator `{other}`")));
                }
            },
            "file" => {
                if self.data.path.is_none() {
                    return Err(Error::Config("file source requires data.path".into()));
                }
            }
            other => return Err(Error::Config(format!("unknown data source `{other}`"))),
        }
        Ok(())
    }
}
