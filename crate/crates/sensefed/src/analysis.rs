//! Convergence analysis: the exact gradient-decomposition identity, empirical
//! estimators for the smoothness/variance/dissimilarity constants, the
//! learning-rate feasibility conditions, and term-by-term evaluation of the
//! convergence bounds for both algorithms.

use serde::{Deserialize, Serialize};

use crate::data::SampleBatch;
use crate::error::{Error, Result};
use crate::learning::{local_gradient, ModelKind, ModelSpec};
use crate::model::{AggregationWeights, ParamVector, WeightVariant};

/// Which training path produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Multi-step local SGD, models aggregated.
    FedAvg,
    /// Full-batch local gradients, gradients aggregated.
    FedSgd,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::FedAvg => write!(f, "fedavg"),
            Algorithm::FedSgd => write!(f, "fedsgd"),
        }
    }
}

/// Where a set of assumption constants came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstSource {
    /// Empirical envelopes measured on a trace; not certified suprema.
    Estimated,
    /// Supplied by the user.
    Provided,
}

/// Per-round gradient-norm bound `G_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum GradBound {
    /// One value per round, index `t-1`.
    PerRound(Vec<f64>),
    /// Same value for every round.
    Uniform(f64),
}

/// The constants of the smoothness / bounded-gradient / bounded-variance /
/// bounded-dissimilarity assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// Smoothness constant `L`.
    pub smoothness: f64,
    /// Mini-batch gradient variance bound `sigma^2`.
    pub grad_variance: f64,
    /// Per-round gradient-norm bounds `G_t`.
    pub grad_bound: GradBound,
    /// Dissimilarity slope `alpha^2 >= 1`.
    pub alpha_sq: f64,
    /// Dissimilarity offset `beta^2 >= 0`.
    pub beta_sq: f64,
    pub source: ConstSource,
}

impl AssumptionConstants {
    pub fn grad_bound_at(&self, round: usize) -> f64 {
        match &self.grad_bound {
            GradBound::Uniform(g) => *g,
            GradBound::PerRound(v) => v.get(round - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.smoothness < 0.0 || self.grad_variance < 0.0 || self.beta_sq < 0.0 {
            return Err(Error::Config(
                "assumption constants must be non-negative".into(),
            ));
        }
        if self.alpha_sq < 1.0 {
            return Err(Error::Config("alpha^2 must be at least 1".into()));
        }
        Ok(())
    }
}

/// One round's raw material for estimating the assumption constants.
///
/// All gradients are evaluated at the pre-update model `w_{t-1}` on the
/// post-sensing datasets; the `(displacement, grad_diff)` pair compares
/// gradients of the *same* dataset at `w_{t-1}` and `w_t` for the
/// smoothness estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantProbe {
    pub round: usize,
    /// `||w_t - w_{t-1}||^2`, when both iterates exist.
    pub displacement_sq: Option<f64>,
    /// `||grad F(w_t; S_t) - grad F(w_{t-1}; S_t)||^2`.
    pub grad_diff_sq: Option<f64>,
    /// `||grad F(w_{t-1}; S_t)||^2`.
    pub global_grad_sq: f64,
    /// `||grad F(w_{t-1}; S_t^n)||^2` per device.
    pub per_device_grad_sq: Vec<f64>,
    /// Aggregation weights of the same round.
    pub rho: Vec<f64>,
    /// `||grad F(w_{t-1}; D_t)||^2` over the freshly sensed data, when any.
    pub fresh_grad_sq: Option<f64>,
    /// Mean squared deviation of mini-batch gradients from the full-batch
    /// gradient, when the algorithm samples batches.
    pub minibatch_variance: Option<f64>,
}

/// Serialize NaN-able metrics as JSON null and read null back as NaN
/// (JSON has no NaN literal).
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Everything a finished run exposes to the bound evaluators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// Global loss `F(w_t; S_t)` after the round's update.
    pub loss: f64,
    /// `||grad F(w_{t-1}; S_{t-1})||^2`; for the first round with no prior
    /// data this is the gradient over the freshly sensed samples.
    pub grad_norm_sq: f64,
    /// `||eps_t||^2` from aggregation.
    pub err_sq_norm: f64,
    /// NaN on rounds the evaluation stride skips.
    #[serde(with = "nan_as_null")]
    pub test_loss: f64,
    /// NaN when the model kind has no classification read-out.
    #[serde(with = "nan_as_null")]
    pub test_acc: f64,
    pub s_total: usize,
    pub d_total: usize,
    pub device_sizes: Vec<usize>,
    pub rho: Vec<f64>,
    pub probe: Option<ConstantProbe>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub tau: usize,
    pub s0_total: usize,
    /// `F(w_0; S_0)`, or the loss on the first sensed data when `S_0 = 0`.
    pub f0: Option<f64>,
    pub rounds: Vec<RoundMetrics>,
}

impl TrainingTrace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// `S_{t-1}` seen from round `t` (so `s_prev(1) = S_0`).
    pub fn s_prev(&self, round: usize) -> usize {
        if round <= 1 {
            self.s0_total
        } else {
            self.rounds[round - 2].s_total
        }
    }

    pub fn sum_err_sq(&self) -> f64 {
        self.rounds.iter().map(|r| r.err_sq_norm).sum()
    }

    /// `(1/T) sum_t ||grad F(w_{t-1}; S_{t-1})||^2`.
    pub fn measured_avg_grad_sq(&self) -> Option<f64> {
        if self.rounds.is_empty() {
            return None;
        }
        Some(self.rounds.iter().map(|r| r.grad_norm_sq).sum::<f64>() / self.rounds.len() as f64)
    }

    pub fn min_loss(&self) -> Option<f64> {
        self.rounds.iter().map(|r| r.loss).fold(None, |acc, l| {
            Some(acc.map_or(l, |a: f64| a.min(l)))
        })
    }

    pub fn probes(&self) -> Vec<&ConstantProbe> {
        self.rounds.iter().filter_map(|r| r.probe.as_ref()).collect()
    }
}

/// Residual of the exact aggregated-gradient decomposition: the
/// rho-weighted gradient over the grown datasets must equal the size-scaled
/// combination of the gradients over the previous cumulative data and over
/// the freshly sensed data. Both sides are evaluated by brute force.
pub fn lemma1_residual(
    w: &ParamVector,
    old_data: &[SampleBatch],
    new_data: &[SampleBatch],
    spec: &ModelSpec,
) -> Result<f64> {
    if old_data.len() != new_data.len() {
        return Err(Error::DimensionMismatch {
            context: "lemma1_residual: device count",
            expected: old_data.len(),
            got: new_data.len(),
        });
    }
    let n = old_data.len();
    let s_prev: Vec<usize> = old_data.iter().map(|b| b.len()).collect();
    let fresh: Vec<usize> = new_data.iter().map(|b| b.len()).collect();
    let current: Vec<usize> = s_prev.iter().zip(&fresh).map(|(a, b)| a + b).collect();
    let s_prev_total: usize = s_prev.iter().sum();
    let fresh_total: usize = fresh.iter().sum();
    let current_total: usize = current.iter().sum();
    if current_total == 0 {
        return Err(Error::Data("lemma1_residual: all datasets empty".into()));
    }

    // Left side: weights from current sizes over the unions.
    let rho = AggregationWeights::from_sizes(&current, WeightVariant::Current)?;
    let mut lhs = ParamVector::zeros(w.len());
    for dev in 0..n {
        if current[dev] == 0 {
            continue;
        }
        let union = if fresh[dev] == 0 {
            old_data[dev].clone()
        } else if s_prev[dev] == 0 {
            new_data[dev].clone()
        } else {
            let mut u = old_data[dev].clone();
            u.append(&new_data[dev])?;
            u
        };
        let g = local_gradient(w, &union, spec)?;
        lhs.add_scaled(&g, rho.rho()[dev]);
    }

    // Right side: previous-cumulative part plus fresh part.
    let mut rhs = ParamVector::zeros(w.len());
    if s_prev_total > 0 {
        let rho_bar = AggregationWeights::from_sizes(&s_prev, WeightVariant::Cumulative)?;
        let scale = s_prev_total as f64 / current_total as f64;
        for dev in 0..n {
            if s_prev[dev] == 0 {
                continue;
            }
            let g = local_gradient(w, &old_data[dev], spec)?;
            rhs.add_scaled(&g, scale * rho_bar.rho()[dev]);
        }
    }
    if fresh_total > 0 {
        let rho_tilde = AggregationWeights::from_sizes(&fresh, WeightVariant::Fresh)?;
        let scale = fresh_total as f64 / current_total as f64;
        for dev in 0..n {
            if fresh[dev] == 0 {
                continue;
            }
            let g = local_gradient(w, &new_data[dev], spec)?;
            rhs.add_scaled(&g, scale * rho_tilde.rho()[dev]);
        }
    }

    Ok(lhs.sub(&rhs)?.norm())
}

/// Estimate the assumption constants from per-round probes.
///
/// The estimates are empirical envelopes over the observed probes, not
/// certified suprema: `L` is the largest observed gradient-difference
/// ratio, `sigma^2` the largest observed mini-batch variance, `G_t` the
/// largest observed squared gradient norm of round `t` inflated by 1.1,
/// and `(alpha^2, beta^2)` the lexicographically least feasible pair of
/// the dissimilarity envelope (alpha^2 minimized first, clamped to
/// `[1, 2)`, then beta^2).
pub fn estimate_constants(probes: &[&ConstantProbe], iid_tag: bool) -> Result<AssumptionConstants> {
    if probes.len() < 2 {
        return Err(Error::Data(
            "estimate_constants needs at least two probes".into(),
        ));
    }
    let mut smoothness: Option<f64> = None;
    for p in probes {
        if let (Some(d), Some(g)) = (p.displacement_sq, p.grad_diff_sq) {
            if d > 0.0 {
                let l = (g / d).sqrt();
                smoothness = Some(smoothness.map_or(l, |cur: f64| cur.max(l)));
            }
        }
    }
    let smoothness = smoothness.ok_or_else(|| {
        Error::Data("estimate_constants: no probe pair with nonzero displacement".into())
    })?;

    let grad_variance = probes
        .iter()
        .filter_map(|p| p.minibatch_variance)
        .fold(0.0, f64::max);

    let mut ordered: Vec<&&ConstantProbe> = probes.iter().collect();
    ordered.sort_by_key(|p| p.round);
    for (i, p) in ordered.iter().enumerate() {
        if p.round != i + 1 {
            return Err(Error::Data(format!(
                "probes must cover rounds 1..=T contiguously, missing round {}",
                i + 1
            )));
        }
    }
    let grad_bound = GradBound::PerRound(
        ordered
            .iter()
            .map(|p| 1.1 * p.global_grad_sq.max(p.fresh_grad_sq.unwrap_or(0.0)))
            .collect(),
    );

    let (alpha_sq, beta_sq) = if iid_tag {
        (1.0, 0.0)
    } else {
        // Feasible set: beta^2 >= y_i - alpha^2 x_i for every probe, with
        // alpha^2 in [1, 2). The lexicographically least point of the
        // envelope sits at alpha^2 = 1.
        let alpha_sq = 1.0;
        let beta_sq = probes
            .iter()
            .map(|p| {
                let y: f64 = p
                    .per_device_grad_sq
                    .iter()
                    .zip(&p.rho)
                    .map(|(g, r)| g * r)
                    .sum();
                y - alpha_sq * p.global_grad_sq
            })
            .fold(0.0, f64::max);
        (alpha_sq, beta_sq)
    };

    Ok(AssumptionConstants {
        smoothness,
        grad_variance,
        grad_bound,
        alpha_sq,
        beta_sq,
        source: ConstSource::Estimated,
    })
}

/// Learning-rate condition for the model-averaging path:
/// `2 L^2 eta^2 tau (tau - 1) <= min(1/5, S_t^2 / (S_t^2 + 4 S_{t-1}^2))`.
pub fn fedavg_lr_feasible(eta: f64, smoothness: f64, tau: usize, s_t: f64, s_prev: f64) -> bool {
    let lhs = 2.0 * smoothness * smoothness * eta * eta * (tau as f64) * (tau as f64 - 1.0);
    let ratio = if s_prev == 0.0 {
        1.0
    } else {
        let st2 = s_t * s_t;
        st2 / (st2 + 4.0 * s_prev * s_prev)
    };
    lhs >= 0.0 && lhs <= 0.2f64.min(ratio)
}

/// Learning-rate condition for the gradient-averaging path:
/// `eta <= min(1/L, S_t / (2 sqrt(2) L S_{t-1}))`.
pub fn fedsgd_lr_feasible(eta: f64, smoothness: f64, s_t: f64, s_prev: f64) -> bool {
    if smoothness <= 0.0 {
        return eta >= 0.0;
    }
    let first = 1.0 / smoothness;
    let bound = if s_prev == 0.0 {
        first
    } else {
        first.min(s_t / (2.0 * std::f64::consts::SQRT_2 * smoothness * s_prev))
    };
    (0.0..=bound).contains(&eta)
}

/// Named summands of a convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundTerm {
    Initialization,
    CommunicationErrors,
    GradientVariance,
    SensingNonIid,
    SensingLocalUpdates,
}

impl std::fmt::Display for BoundTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundTerm::Initialization => "initialization",
            BoundTerm::CommunicationErrors => "communication_errors",
            BoundTerm::GradientVariance => "gradient_variance",
            BoundTerm::SensingNonIid => "sensing_noniid",
            BoundTerm::SensingLocalUpdates => "sensing_local_updates",
        };
        write!(f, "{s}")
    }
}

/// Evaluated bound on the average squared gradient norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub algorithm: Algorithm,
    /// False when the learning-rate condition failed (terms are then empty
    /// and there is no total) or when `alpha^2` is too close to 2.
    pub feasible: bool,
    pub terms: Vec<(BoundTerm, f64)>,
    pub total: Option<f64>,
    pub measured_avg_grad_sq: Option<f64>,
    pub source: ConstSource,
}

impl BoundReport {
    fn infeasible(algorithm: Algorithm, trace: &TrainingTrace, source: ConstSource) -> Self {
        Self {
            algorithm,
            feasible: false,
            terms: Vec::new(),
            total: None,
            measured_avg_grad_sq: trace.measured_avg_grad_sq(),
            source,
        }
    }

    pub fn term(&self, which: BoundTerm) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == which).map(|(_, v)| *v)
    }
}

fn validate_bound_inputs(trace: &TrainingTrace, consts: &AssumptionConstants) -> Result<()> {
    consts.validate()?;
    if consts.alpha_sq >= 2.0 {
        return Err(Error::InvalidBound(format!(
            "alpha^2 = {} makes the 1/(2 - alpha^2) factor meaningless",
            consts.alpha_sq
        )));
    }
    if trace.is_empty() {
        return Err(Error::InvalidBound("empty trace".into()));
    }
    if trace.len() >= 2 && trace.rounds[0].s_total == 0 {
        return Err(Error::InvalidBound(
            "S_1 must be positive for the size-ratio sums".into(),
        ));
    }
    Ok(())
}

/// Sum over `t = 2..=T` of `(S_t / S_{t-1})^2` and `(D_t / S_{t-1})^2 G_t`.
fn ratio_sums(trace: &TrainingTrace, consts: &AssumptionConstants) -> (f64, f64) {
    let mut s_ratio = 0.0;
    let mut dg = 0.0;
    for t in 2..=trace.len() {
        let prev = trace.s_prev(t) as f64;
        let r = trace.rounds[t - 1].s_total as f64 / prev;
        s_ratio += r * r;
        let d = trace.rounds[t - 1].d_total as f64 / prev;
        dg += d * d * consts.grad_bound_at(t);
    }
    (s_ratio, dg)
}

/// Bound on the average squared gradient norm for the model-averaging path:
/// initialization, communication-error, gradient-variance, sensing/non-IID,
/// and sensing/local-update terms.
pub fn theorem1_bound(
    trace: &TrainingTrace,
    consts: &AssumptionConstants,
    eta: f64,
    tau: usize,
    f0_minus_fstar: f64,
    rho: &[f64],
) -> Result<BoundReport> {
    validate_bound_inputs(trace, consts)?;
    if consts.alpha_sq >= 2.0 - 1e-6 {
        return Ok(BoundReport::infeasible(
            Algorithm::FedAvg,
            trace,
            consts.source,
        ));
    }
    let all_feasible = (1..=trace.len()).all(|t| {
        fedavg_lr_feasible(
            eta,
            consts.smoothness,
            tau,
            trace.rounds[t - 1].s_total as f64,
            trace.s_prev(t) as f64,
        )
    });
    if !all_feasible {
        return Ok(BoundReport::infeasible(
            Algorithm::FedAvg,
            trace,
            consts.source,
        ));
    }

    let t_count = trace.len() as f64;
    let denom = 2.0 - consts.alpha_sq;
    let tau_f = tau as f64;
    let (s_ratio, dg) = ratio_sums(trace, consts);
    let rho_sq: f64 = rho.iter().map(|r| r * r).sum();

    let initialization = 4.0 * f0_minus_fstar / (denom * t_count * eta * tau_f);
    let communication = 4.0 * trace.sum_err_sq() / (denom * t_count * eta * eta * tau_f * tau_f);
    let variance = 4.0 * consts.smoothness * eta * consts.grad_variance * rho_sq / denom;
    let sensing_noniid =
        ((1.0 + s_ratio) * consts.beta_sq + consts.alpha_sq * dg) / (denom * t_count);
    let local_bracket: f64 = 5.0
        + (2..=trace.len())
            .map(|t| {
                let r = trace.rounds[t - 1].s_total as f64 / trace.s_prev(t) as f64;
                4.0 + r * r
            })
            .sum::<f64>();
    let sensing_local = consts.smoothness * consts.smoothness
        * eta
        * eta
        * consts.grad_variance
        * (tau_f - 1.0)
        * local_bracket
        / (denom * t_count);

    let terms = vec![
        (BoundTerm::Initialization, initialization),
        (BoundTerm::CommunicationErrors, communication),
        (BoundTerm::GradientVariance, variance),
        (BoundTerm::SensingNonIid, sensing_noniid),
        (BoundTerm::SensingLocalUpdates, sensing_local),
    ];
    let total = terms.iter().map(|(_, v)| v).sum();
    Ok(BoundReport {
        algorithm: Algorithm::FedAvg,
        feasible: true,
        terms,
        total: Some(total),
        measured_avg_grad_sq: trace.measured_avg_grad_sq(),
        source: consts.source,
    })
}

/// Bound on the average squared gradient norm for the gradient-averaging
/// path: initialization, communication-error, and sensing/non-IID terms.
pub fn theorem2_bound(
    trace: &TrainingTrace,
    consts: &AssumptionConstants,
    eta: f64,
    f0_minus_fstar: f64,
) -> Result<BoundReport> {
    validate_bound_inputs(trace, consts)?;
    if consts.alpha_sq >= 2.0 - 1e-6 {
        return Ok(BoundReport::infeasible(
            Algorithm::FedSgd,
            trace,
            consts.source,
        ));
    }
    let all_feasible = (1..=trace.len()).all(|t| {
        fedsgd_lr_feasible(
            eta,
            consts.smoothness,
            trace.rounds[t - 1].s_total as f64,
            trace.s_prev(t) as f64,
        )
    });
    if !all_feasible {
        return Ok(BoundReport::infeasible(
            Algorithm::FedSgd,
            trace,
            consts.source,
        ));
    }

    let t_count = trace.len() as f64;
    let denom = 2.0 - consts.alpha_sq;
    let (s_ratio, dg) = ratio_sums(trace, consts);

    let initialization = 4.0 * f0_minus_fstar / (denom * t_count * eta);
    let communication = 4.0 * trace.sum_err_sq() / (denom * t_count);
    let sensing_noniid =
        ((1.0 + s_ratio) * consts.beta_sq + consts.alpha_sq * dg) / (denom * t_count);

    let terms = vec![
        (BoundTerm::Initialization, initialization),
        (BoundTerm::CommunicationErrors, communication),
        (BoundTerm::SensingNonIid, sensing_noniid),
    ];
    let total = terms.iter().map(|(_, v)| v).sum();
    Ok(BoundReport {
        algorithm: Algorithm::FedSgd,
        feasible: true,
        terms,
        total: Some(total),
        measured_avg_grad_sq: trace.measured_avg_grad_sq(),
        source: consts.source,
    })
}

/// Trace-level aggregates entering the complexity corollaries: total
/// communication-error energy, the sensing/non-IID bracket, and the
/// sensing/local-update bracket. Rounds whose previous total is zero are
/// skipped in the ratio sums, matching the degenerate-round convention.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComplexityProxies {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

pub fn complexity_proxies(trace: &TrainingTrace, consts: &AssumptionConstants) -> ComplexityProxies {
    if trace.is_empty() {
        return ComplexityProxies {
            m1: 0.0,
            m2: 0.0,
            m3: 0.0,
        };
    }
    let m1 = trace.sum_err_sq();
    let mut s_ratio = 0.0;
    let mut dg = 0.0;
    let mut local = 0.0;
    for t in 2..=trace.len() {
        let prev = trace.s_prev(t) as f64;
        if prev == 0.0 {
            continue;
        }
        let r = trace.rounds[t - 1].s_total as f64 / prev;
        s_ratio += r * r;
        let d = trace.rounds[t - 1].d_total as f64 / prev;
        dg += d * d * consts.grad_bound_at(t);
        local += 4.0 + r * r;
    }
    let m2 = (1.0 + s_ratio) * consts.beta_sq + consts.alpha_sq * dg;
    let m3 = 5.0 + local;
    ComplexityProxies { m1, m2, m3 }
}

/// Outcome of one randomized decomposition check.
#[derive(Debug, Clone, Copy)]
pub struct Lemma1Trial {
    pub residual: f64,
    pub lhs_scale: f64,
}

impl Lemma1Trial {
    /// Residual tolerance: `1e-10 * (1 + ||LHS||)`.
    pub fn passes(&self) -> bool {
        self.residual <= 1e-10 * (1.0 + self.lhs_scale)
    }
}

/// Run one random decomposition check: random device count in 1..=5,
/// quadratic or logistic model, per-device old/new dataset sizes in 1..=20.
pub fn lemma1_random_trial(seed: u64) -> Result<Lemma1Trial> {
    use crate::data::{generate_pool, Generator};
    use crate::rng::{StreamKey, StreamPurpose};
    use rand::Rng;

    let key = StreamKey::new(seed);
    let mut rng = key.stream(StreamPurpose::Partition, 0, 0);
    let devices = rng.random_range(1..=5usize);
    let dim = rng.random_range(1..=4usize);
    let quadratic = rng.random_range(0..2u8) == 0;
    let classes = rng.random_range(2..=3usize);

    let spec = if quadratic {
        let center: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        ModelSpec {
            feature_dim: dim,
            kind: ModelKind::Quadratic {
                center: ParamVector::from_vec(center)?,
            },
        }
    } else {
        ModelSpec {
            feature_dim: dim,
            kind: ModelKind::Logistic { classes },
        }
    };
    let gen = Generator::Blobs {
        classes,
        class_sep: 1.5,
        noise: 1.0,
    };

    let mut old_data = Vec::with_capacity(devices);
    let mut new_data = Vec::with_capacity(devices);
    for dev in 0..devices {
        let old_n = rng.random_range(1..=20usize);
        let new_n = rng.random_range(1..=20usize);
        let mut pool_rng = key.stream(StreamPurpose::PoolTrain, dev as u64, 0);
        old_data.push(generate_pool(&gen, old_n, dim, &mut pool_rng)?);
        new_data.push(generate_pool(&gen, new_n, dim, &mut pool_rng)?);
    }
    let w = ParamVector::from_vec(
        (0..spec.param_len())
            .map(|_| rng.random_range(-1.5..1.5))
            .collect(),
    )?;

    let residual = lemma1_residual(&w, &old_data, &new_data, &spec)?;

    // Scale reference: norm of the left side.
    let current: Vec<usize> = old_data
        .iter()
        .zip(&new_data)
        .map(|(a, b)| a.len() + b.len())
        .collect();
    let rho = AggregationWeights::from_sizes(&current, WeightVariant::Current)?;
    let mut lhs = ParamVector::zeros(w.len());
    for dev in 0..devices {
        let mut union = old_data[dev].clone();
        union.append(&new_data[dev])?;
        let g = local_gradient(&w, &union, &spec)?;
        lhs.add_scaled(&g, rho.rho()[dev]);
    }
    Ok(Lemma1Trial {
        residual,
        lhs_scale: lhs.norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_pool, Generator};
    use crate::rng::{StreamKey, StreamPurpose};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn quadratic_spec(center: Vec<f64>) -> ModelSpec {
        ModelSpec {
            feature_dim: center.len(),
            kind: ModelKind::Quadratic {
                center: ParamVector::from_vec(center).unwrap(),
            },
        }
    }

    fn blob_batch(samples: usize, dim: usize, classes: usize, seed: u64) -> SampleBatch {
        let gen = Generator::Blobs {
            classes,
            class_sep: 1.5,
            noise: 1.0,
        };
        generate_pool(
            &gen,
            samples,
            dim,
            &mut StreamKey::new(seed).stream(StreamPurpose::PoolTrain, 0, 0),
        )
        .unwrap()
    }

    #[test]
    fn lemma1_no_new_data_degenerates_to_identity() {
        let spec = ModelSpec {
            feature_dim: 2,
            kind: ModelKind::Logistic { classes: 2 },
        };
        let old = vec![blob_batch(6, 2, 2, 1), blob_batch(9, 2, 2, 2)];
        let new = vec![SampleBatch::empty(2), SampleBatch::empty(2)];
        let w = ParamVector::from_vec(vec![0.1; spec.param_len()]).unwrap();
        let residual = lemma1_residual(&w, &old, &new, &spec).unwrap();
        assert_eq!(residual, 0.0);
    }

    #[test]
    fn lemma1_single_device_is_gradient_linearity() {
        let spec = ModelSpec {
            feature_dim: 2,
            kind: ModelKind::Logistic { classes: 2 },
        };
        let old = vec![blob_batch(7, 2, 2, 3)];
        let new = vec![blob_batch(5, 2, 2, 4)];
        let w = ParamVector::from_vec(vec![0.2; spec.param_len()]).unwrap();
        let residual = lemma1_residual(&w, &old, &new, &spec).unwrap();
        assert!(residual <= 1e-12, "residual {residual}");
    }

    #[test]
    fn lemma1_random_logistic_instance() {
        let spec = ModelSpec {
            feature_dim: 3,
            kind: ModelKind::Logistic { classes: 3 },
        };
        let mut rng = StreamKey::new(5).stream(StreamPurpose::Partition, 0, 0);
        let old: Vec<SampleBatch> = (0..3)
            .map(|i| blob_batch(rng.random_range(1..=20), 3, 3, 10 + i))
            .collect();
        let new: Vec<SampleBatch> = (0..3)
            .map(|i| blob_batch(rng.random_range(1..=20), 3, 3, 20 + i))
            .collect();
        let w = ParamVector::from_vec(
            (0..spec.param_len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let residual = lemma1_residual(&w, &old, &new, &spec).unwrap();
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn lemma1_handles_empty_old_sides() {
        let spec = quadratic_spec(vec![0.5, -0.5]);
        let old = vec![SampleBatch::empty(2), blob_batch(4, 2, 1, 6)];
        let new = vec![blob_batch(3, 2, 1, 7), blob_batch(2, 2, 1, 8)];
        let w = ParamVector::from_vec(vec![1.0, 1.0]).unwrap();
        let residual = lemma1_residual(&w, &old, &new, &spec).unwrap();
        assert!(residual <= 1e-12);
    }

    #[test]
    fn lemma1_all_empty_is_an_error() {
        let spec = quadratic_spec(vec![0.0]);
        let old = vec![SampleBatch::empty(1)];
        let new = vec![SampleBatch::empty(1)];
        let w = ParamVector::zeros(1);
        assert!(lemma1_residual(&w, &old, &new, &spec).is_err());
    }

    #[test]
    fn lemma1_randomized_trials_pass() {
        for seed in 0..200 {
            let trial = lemma1_random_trial(seed).unwrap();
            assert!(
                trial.passes(),
                "seed {seed}: residual {} scale {}",
                trial.residual,
                trial.lhs_scale
            );
        }
    }

    fn probe(
        round: usize,
        displacement_sq: Option<f64>,
        grad_diff_sq: Option<f64>,
        global_grad_sq: f64,
        per_device: Vec<f64>,
        rho: Vec<f64>,
    ) -> ConstantProbe {
        ConstantProbe {
            round,
            displacement_sq,
            grad_diff_sq,
            global_grad_sq,
            per_device_grad_sq: per_device,
            rho,
            fresh_grad_sq: None,
            minibatch_variance: None,
        }
    }

    #[test]
    fn smoothness_estimate_is_one_for_quadratic() {
        // Gradients of 0.5||w - c||^2: grad differences equal displacements.
        let mut rng = StreamKey::new(30).stream(StreamPurpose::Partition, 0, 0);
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut probes = Vec::new();
        for round in 1..=3 {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w2: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let disp: f64 = w.iter().zip(&w2).map(|(a, b)| (a - b) * (a - b)).sum();
            let g1: Vec<f64> = w.iter().zip(&c).map(|(a, b)| a - b).collect();
            let g2: Vec<f64> = w2.iter().zip(&c).map(|(a, b)| a - b).collect();
            let gd: f64 = g1.iter().zip(&g2).map(|(a, b)| (a - b) * (a - b)).sum();
            let gsq: f64 = g1.iter().map(|x| x * x).sum();
            probes.push(probe(round, Some(disp), Some(gd), gsq, vec![gsq], vec![1.0]));
        }
        let refs: Vec<&ConstantProbe> = probes.iter().collect();
        let consts = estimate_constants(&refs, true).unwrap();
        assert_relative_eq!(consts.smoothness, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_devices_give_unit_alpha_zero_beta() {
        let g = 2.5;
        let probes = vec![
            probe(1, Some(1.0), Some(1.0), g, vec![g, g, g], vec![0.5, 0.25, 0.25]),
            probe(2, Some(1.0), Some(1.0), g, vec![g, g, g], vec![0.5, 0.25, 0.25]),
        ];
        let refs: Vec<&ConstantProbe> = probes.iter().collect();
        let consts = estimate_constants(&refs, false).unwrap();
        assert_eq!(consts.alpha_sq, 1.0);
        assert!(consts.beta_sq <= 1e-12, "beta_sq {}", consts.beta_sq);
    }

    #[test]
    fn dissimilarity_envelope_matches_grid_search_oracle() {
        // Two quadratic devices with different centers: per-device gradients
        // w - c1 and w - c2, equal weights.
        let c1 = [1.0, 0.0];
        let c2 = [-1.0, 2.0];
        let mut rng = StreamKey::new(31).stream(StreamPurpose::Partition, 0, 0);
        let mut probes = Vec::new();
        for round in 1..=6 {
            let w: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let g1: Vec<f64> = w.iter().zip(&c1).map(|(a, b)| a - b).collect();
            let g2: Vec<f64> = w.iter().zip(&c2).map(|(a, b)| a - b).collect();
            let global: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
            probes.push(probe(
                round,
                Some(1.0),
                Some(1.0),
                global.iter().map(|x| x * x).sum(),
                vec![
                    g1.iter().map(|x| x * x).sum(),
                    g2.iter().map(|x| x * x).sum(),
                ],
                vec![0.5, 0.5],
            ));
        }
        let refs: Vec<&ConstantProbe> = probes.iter().collect();
        let consts = estimate_constants(&refs, false).unwrap();

        // Grid-search oracle: for each alpha^2 on a dense grid compute the
        // least feasible beta^2, then take the lexicographically least pair.
        let mut best: Option<(f64, f64)> = None;
        let mut a = 1.0;
        while a < 2.0 {
            let b = probes
                .iter()
                .map(|p| {
                    let y: f64 = p
                        .per_device_grad_sq
                        .iter()
                        .zip(&p.rho)
                        .map(|(g, r)| g * r)
                        .sum();
                    y - a * p.global_grad_sq
                })
                .fold(0.0, f64::max);
            if best.is_none() {
                best = Some((a, b));
            }
            a += 1e-3;
        }
        let (oa, ob) = best.unwrap();
        assert!((consts.alpha_sq - oa).abs() <= 1e-6);
        assert!((consts.beta_sq - ob).abs() <= 1e-6);
        // The analytic envelope for equal weights is beta^2 = ||c1-c2||^2/4.
        let expect = c1
            .iter()
            .zip(&c2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 4.0;
        assert_relative_eq!(consts.beta_sq, expect, epsilon = 1e-9);
    }

    #[test]
    fn estimate_needs_two_probes_and_a_displacement() {
        let p = probe(1, Some(1.0), Some(1.0), 1.0, vec![1.0], vec![1.0]);
        assert!(estimate_constants(&[&p], true).is_err());
        let z1 = probe(1, Some(0.0), Some(0.0), 1.0, vec![1.0], vec![1.0]);
        let z2 = probe(2, None, None, 1.0, vec![1.0], vec![1.0]);
        assert!(estimate_constants(&[&z1, &z2], true).is_err());
    }

    #[test]
    fn fedavg_feasibility_examples() {
        // tau = 1 removes the condition entirely.
        assert!(fedavg_lr_feasible(10.0, 5.0, 1, 10.0, 5.0));
        // 2 * 1 * 0.01 * 2 = 0.04 <= 0.2, and the size ratio exceeds 1/5
        // whenever S_t >= S_{t-1}.
        assert!(fedavg_lr_feasible(0.1, 1.0, 2, 10.0, 10.0));
        assert!(10.0f64.powi(2) / (10.0f64.powi(2) + 4.0 * 10.0f64.powi(2)) >= 0.2);
        // 2 * 100 * 0.01 * 20 = 40 > 1/5.
        assert!(!fedavg_lr_feasible(0.1, 10.0, 5, 10.0, 10.0));
    }

    #[test]
    fn fedsgd_feasibility_examples() {
        // Boundary: eta = 1/L with S_t = 2 sqrt(2) S_{t-1}.
        let s_t = 2.0 * std::f64::consts::SQRT_2;
        assert!(fedsgd_lr_feasible(1.0, 1.0, s_t, 1.0));
        assert!(fedsgd_lr_feasible(0.0, 3.0, 1.0, 1.0));
        // 0.5 > 1/(2 sqrt 2) ~ 0.3536.
        assert!(!fedsgd_lr_feasible(0.5, 1.0, 10.0, 10.0));
    }

    fn trace_from_series(
        algorithm: Algorithm,
        eta: f64,
        tau: usize,
        s: &[usize],
        d: &[usize],
        err: &[f64],
        grad: &[f64],
    ) -> TrainingTrace {
        let rounds = (0..s.len())
            .map(|i| RoundMetrics {
                round: i + 1,
                loss: 0.0,
                grad_norm_sq: grad.get(i).copied().unwrap_or(0.0),
                err_sq_norm: err[i],
                test_loss: f64::NAN,
                test_acc: f64::NAN,
                s_total: s[i],
                d_total: d[i],
                device_sizes: vec![s[i]],
                rho: vec![1.0],
                probe: None,
            })
            .collect();
        TrainingTrace {
            algorithm,
            eta,
            tau,
            s0_total: 0,
            f0: Some(1.0),
            rounds,
        }
    }

    fn plain_consts(alpha_sq: f64, beta_sq: f64, l: f64, sigma_sq: f64, g: f64) -> AssumptionConstants {
        AssumptionConstants {
            smoothness: l,
            grad_variance: sigma_sq,
            grad_bound: GradBound::Uniform(g),
            alpha_sq,
            beta_sq,
            source: ConstSource::Provided,
        }
    }

    #[test]
    fn theorem1_zero_errors_zero_comm_term() {
        let trace = trace_from_series(
            Algorithm::FedAvg,
            0.05,
            2,
            &[10, 20, 30],
            &[10, 10, 10],
            &[0.0, 0.0, 0.0],
            &[1.0, 0.5, 0.25],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.1, 2.0);
        let report = theorem1_bound(&trace, &consts, 0.05, 2, 1.0, &[1.0]).unwrap();
        assert!(report.feasible);
        assert_eq!(report.term(BoundTerm::CommunicationErrors).unwrap(), 0.0);
    }

    #[test]
    fn theorem1_tau_one_kills_local_update_term() {
        let trace = trace_from_series(
            Algorithm::FedAvg,
            0.05,
            1,
            &[10, 20],
            &[10, 10],
            &[0.1, 0.1],
            &[1.0, 0.5],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.5, 2.0);
        let report = theorem1_bound(&trace, &consts, 0.05, 1, 1.0, &[1.0]).unwrap();
        assert_eq!(report.term(BoundTerm::SensingLocalUpdates).unwrap(), 0.0);
    }

    #[test]
    fn theorem1_matches_hand_expansion_iid_all_at_start() {
        // T = 3, all-at-start: S = (100, 100, 100), D = (100, 0, 0);
        // IID constants make the sensing/non-IID term vanish and the
        // local-update bracket is 5 + 5 (T - 1) = 15.
        let eta = 0.01;
        let tau = 3;
        let l = 1.0;
        let sigma_sq = 0.7;
        let err = [0.3, 0.2, 0.1];
        let trace = trace_from_series(
            Algorithm::FedAvg,
            eta,
            tau,
            &[100, 100, 100],
            &[100, 0, 0],
            &err,
            &[1.0, 1.0, 1.0],
        );
        let consts = plain_consts(1.0, 0.0, l, sigma_sq, 2.0);
        let rho = [0.5, 0.5];
        let f0 = 2.0;
        let report = theorem1_bound(&trace, &consts, eta, tau, f0, &rho).unwrap();
        assert!(report.feasible);

        let t = 3.0;
        let tau_f = 3.0;
        let init = 4.0 * f0 / (1.0 * t * eta * tau_f);
        let comm = 4.0 * (0.3 + 0.2 + 0.1) / (t * eta * eta * tau_f * tau_f);
        let var = 4.0 * l * eta * sigma_sq * 0.5;
        let noniid = 0.0;
        let local = l * l * eta * eta * sigma_sq * (tau_f - 1.0) * 15.0 / t;

        assert_relative_eq!(report.term(BoundTerm::Initialization).unwrap(), init, epsilon = 1e-12);
        assert_relative_eq!(report.term(BoundTerm::CommunicationErrors).unwrap(), comm, epsilon = 1e-12);
        assert_relative_eq!(report.term(BoundTerm::GradientVariance).unwrap(), var, epsilon = 1e-12);
        assert_relative_eq!(report.term(BoundTerm::SensingNonIid).unwrap(), noniid, epsilon = 1e-12);
        assert_relative_eq!(report.term(BoundTerm::SensingLocalUpdates).unwrap(), local, epsilon = 1e-12);
        assert_relative_eq!(
            report.total.unwrap(),
            init + comm + var + noniid + local,
            epsilon = 1e-10
        );
    }

    #[test]
    fn theorem1_infeasible_eta_reports_no_total() {
        let trace = trace_from_series(
            Algorithm::FedAvg,
            0.5,
            5,
            &[10, 20],
            &[10, 10],
            &[0.0, 0.0],
            &[1.0, 1.0],
        );
        let consts = plain_consts(1.0, 0.0, 2.0, 0.1, 2.0);
        let report = theorem1_bound(&trace, &consts, 0.5, 5, 1.0, &[1.0]).unwrap();
        assert!(!report.feasible);
        assert!(report.total.is_none());
        assert!(report.terms.is_empty());
    }

    #[test]
    fn alpha_at_or_above_two_is_an_error() {
        let trace = trace_from_series(
            Algorithm::FedSgd,
            0.1,
            1,
            &[10],
            &[10],
            &[0.0],
            &[1.0],
        );
        let consts = plain_consts(2.0, 0.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            theorem2_bound(&trace, &consts, 0.1, 1.0),
            Err(Error::InvalidBound(_))
        ));
        // Just below 2 it is not an error but the report is infeasible.
        let consts = plain_consts(2.0 - 1e-7, 0.0, 1.0, 0.0, 1.0);
        let report = theorem2_bound(&trace, &consts, 0.1, 1.0).unwrap();
        assert!(!report.feasible);
    }

    #[test]
    fn theorem2_zero_errors_zero_comm_term() {
        let trace = trace_from_series(
            Algorithm::FedSgd,
            0.1,
            1,
            &[10, 20],
            &[10, 10],
            &[0.0, 0.0],
            &[1.0, 0.5],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.0, 2.0);
        let report = theorem2_bound(&trace, &consts, 0.1, 1.0).unwrap();
        assert_eq!(report.term(BoundTerm::CommunicationErrors).unwrap(), 0.0);
    }

    #[test]
    fn theorem2_iid_all_at_start_noniid_term_vanishes() {
        let trace = trace_from_series(
            Algorithm::FedSgd,
            0.1,
            1,
            &[50, 50, 50],
            &[50, 0, 0],
            &[0.1, 0.1, 0.1],
            &[1.0, 1.0, 1.0],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.0, 3.0);
        let report = theorem2_bound(&trace, &consts, 0.1, 1.0).unwrap();
        assert_eq!(report.term(BoundTerm::SensingNonIid).unwrap(), 0.0);
    }

    #[test]
    fn theorem2_matches_hand_computation() {
        // T = 2, eta = 0.1, alpha^2 = 1.5, beta^2 = 0.3, G = 2,
        // S = (10, 14), D = (10, 4), errors (0.01, 0.02), F0 - F* = 1:
        //   init    = 4 / (0.5 * 2 * 0.1)                         = 40
        //   comm    = 4 * 0.03 / (0.5 * 2)                        = 0.12
        //   sensing = [ (1 + 1.96) * 0.3 + 1.5 * 0.16 * 2 ] / 1   = 1.368
        let trace = trace_from_series(
            Algorithm::FedSgd,
            0.1,
            1,
            &[10, 14],
            &[10, 4],
            &[0.01, 0.02],
            &[1.0, 1.0],
        );
        let consts = plain_consts(1.5, 0.3, 1.0, 0.0, 2.0);
        let report = theorem2_bound(&trace, &consts, 0.1, 1.0).unwrap();
        assert!(report.feasible);
        assert_relative_eq!(report.term(BoundTerm::Initialization).unwrap(), 40.0, epsilon = 1e-12);
        assert_relative_eq!(
            report.term(BoundTerm::CommunicationErrors).unwrap(),
            0.12,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            report.term(BoundTerm::SensingNonIid).unwrap(),
            1.368,
            epsilon = 1e-12
        );
        assert_relative_eq!(report.total.unwrap(), 41.488, epsilon = 1e-12);
    }

    #[test]
    fn complexity_proxies_zero_cases() {
        let trace = trace_from_series(
            Algorithm::FedSgd,
            0.1,
            1,
            &[50, 50, 50],
            &[50, 0, 0],
            &[0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.0, 2.0);
        let prox = complexity_proxies(&trace, &consts);
        assert_eq!(prox.m1, 0.0);
        assert_eq!(prox.m2, 0.0);
        // all-at-start ratios are 1, so m3 = 5 + 5 (T - 1).
        assert_relative_eq!(prox.m3, 15.0, epsilon = 1e-12);
    }

    #[test]
    fn complexity_proxies_uniform_hand_expansion() {
        // Uniform schedule, T = 3, S_0 = 0, 10 per round:
        //   S = (10, 20, 30), D = (10, 10, 10)
        //   m2 = (1 + (20/10)^2 + (30/20)^2) beta^2
        //        + alpha^2 [ (10/10)^2 + (10/20)^2 ] G
        //   m3 = 5 + (4 + 4) + (4 + 2.25)
        let trace = trace_from_series(
            Algorithm::FedAvg,
            0.01,
            2,
            &[10, 20, 30],
            &[10, 10, 10],
            &[0.5, 0.25, 0.25],
            &[1.0, 1.0, 1.0],
        );
        let consts = plain_consts(1.2, 0.4, 1.0, 0.0, 3.0);
        let prox = complexity_proxies(&trace, &consts);
        assert_relative_eq!(prox.m1, 1.0, epsilon = 1e-12);
        let m2 = (1.0 + 4.0 + 2.25) * 0.4 + 1.2 * (1.0 + 0.25) * 3.0;
        assert_relative_eq!(prox.m2, m2, epsilon = 1e-12);
        assert_relative_eq!(prox.m3, 5.0 + 8.0 + 6.25, epsilon = 1e-12);
    }

    #[test]
    fn comm_term_ratio_between_algorithms_is_exact() {
        // Same trace and constants: the model-averaging communication term
        // is 1/(eta^2 tau^2) times the gradient-averaging one.
        let eta = 0.05;
        let tau = 4;
        let trace_avg = trace_from_series(
            Algorithm::FedAvg,
            eta,
            tau,
            &[10, 20],
            &[10, 10],
            &[0.3, 0.6],
            &[1.0, 1.0],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.0, 1.0);
        let r1 = theorem1_bound(&trace_avg, &consts, eta, tau, 1.0, &[1.0]).unwrap();
        let r2 = theorem2_bound(&trace_avg, &consts, eta, 1.0).unwrap();
        let ratio = r1.term(BoundTerm::CommunicationErrors).unwrap()
            / r2.term(BoundTerm::CommunicationErrors).unwrap();
        assert_relative_eq!(ratio, 1.0 / (eta * eta * (tau * tau) as f64), epsilon = 1e-12);
        // And the gradient-averaging term does not depend on eta at all.
        let r2b = theorem2_bound(&trace_avg, &consts, eta / 2.0, 1.0).unwrap();
        assert_eq!(
            r2.term(BoundTerm::CommunicationErrors),
            r2b.term(BoundTerm::CommunicationErrors)
        );
    }

    #[test]
    fn theorem1_comm_term_decreases_in_eta_and_tau() {
        let trace = trace_from_series(
            Algorithm::FedAvg,
            0.01,
            2,
            &[10, 20],
            &[10, 10],
            &[0.5, 0.5],
            &[1.0, 1.0],
        );
        let consts = plain_consts(1.0, 0.0, 1.0, 0.0, 1.0);
        let at = |eta: f64, tau: usize| {
            theorem1_bound(&trace, &consts, eta, tau, 1.0, &[1.0])
                .unwrap()
                .term(BoundTerm::CommunicationErrors)
                .unwrap()
        };
        assert!(at(0.02, 2) < at(0.01, 2));
        assert!(at(0.01, 4) < at(0.01, 2));
    }
}
