//! Over-the-air analog aggregation: fading draws, power control, denoising,
//! and exact bookkeeping of the per-round communication-error vector.
//!
//! One analog symbol carries one parameter element. The receiver applies a
//! denoising factor `lambda` and adds a single noise draw per element per
//! round: receiver noise enters the superposed signal once — a per-device
//! noise draw would multiply the noise power by the device count with no
//! physical counterpart.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{weighted_sum, AggregationWeights, ParamVector};

/// Transmit power policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerPolicy {
    /// Pick `lambda = min_n h_n^2 P_max^n` and `p_n = lambda / h_n^2`, so
    /// every device's signal arrives with unit alignment within its power
    /// budget.
    FullInversion,
    /// Use the given `lambda`; devices invert as far as their budget
    /// allows (`p_n = min(lambda / h_n^2, P_max^n)`), which leaves a
    /// signal-misalignment error for deeply faded devices.
    FixedLambda(f64),
}

/// Per-round channel state: fading magnitudes, transmit powers, denoising
/// factor, noise variance, and the per-device alignment `h sqrt(p) /
/// sqrt(lambda)`. `FullInversion` stores the alignment as exactly 1, which
/// is the value the policy guarantees in exact arithmetic.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: f64,
    pub sigma_z: f64,
    align: Vec<f64>,
}

impl ChannelRealization {
    /// Build from explicit values; alignment is derived numerically.
    pub fn new(h: Vec<f64>, p: Vec<f64>, lambda: f64, sigma_z: f64) -> Result<Self> {
        if h.len() != p.len() {
            return Err(Error::DimensionMismatch {
                context: "channel h/p",
                expected: h.len(),
                got: p.len(),
            });
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !(sigma_z.is_finite() && sigma_z >= 0.0) {
            return Err(Error::Config(format!(
                "noise variance must be >= 0, got {sigma_z}"
            )));
        }
        if h.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::Config("fading magnitudes must be positive".into()));
        }
        if p.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(Error::Config("transmit powers must be >= 0".into()));
        }
        let align = h
            .iter()
            .zip(&p)
            .map(|(&h, &p)| h * p.sqrt() / lambda.sqrt())
            .collect();
        Ok(Self {
            h,
            p,
            lambda,
            sigma_z,
            align,
        })
    }

    /// Apply a power policy to freshly drawn fading magnitudes.
    pub fn from_policy(
        h: Vec<f64>,
        p_max: &[f64],
        sigma_z: f64,
        policy: PowerPolicy,
    ) -> Result<Self> {
        let (p, lambda) = power_control(&h, p_max, policy)?;
        let mut chan = Self::new(h, p, lambda, sigma_z)?;
        if policy == PowerPolicy::FullInversion {
            // p_n = lambda / h_n^2 makes the alignment identically 1; store
            // the exact value rather than its rounded reconstruction.
            chan.align.iter_mut().for_each(|a| *a = 1.0);
        }
        Ok(chan)
    }

    pub fn devices(&self) -> usize {
        self.h.len()
    }

    pub fn alignment(&self) -> &[f64] {
        &self.align
    }

    /// Restrict to the given device indices (used when some devices hold no
    /// data yet and are excluded from aggregation).
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            h: indices.iter().map(|&i| self.h[i]).collect(),
            p: indices.iter().map(|&i| self.p[i]).collect(),
            lambda: self.lambda,
            sigma_z: self.sigma_z,
            align: indices.iter().map(|&i| self.align[i]).collect(),
        }
    }
}

/// Draw fading magnitudes `h_n = |g|` with `g` circularly symmetric complex
/// Gaussian of unit variance, i.e. Rayleigh with scale `1/sqrt(2)`.
pub fn draw_channel(devices: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..devices)
        .map(|_| {
            let re: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            let im: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
            (re * re + im * im).sqrt().max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Compute transmit powers and the denoising factor for a policy.
pub fn power_control(h: &[f64], p_max: &[f64], policy: PowerPolicy) -> Result<(Vec<f64>, f64)> {
    if h.len() != p_max.len() {
        return Err(Error::DimensionMismatch {
            context: "power_control",
            expected: h.len(),
            got: p_max.len(),
        });
    }
    if h.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(Error::Config(
            "power control requires positive fading magnitudes".into(),
        ));
    }
    match policy {
        PowerPolicy::FullInversion => {
            let lambda = h
                .iter()
                .zip(p_max)
                .map(|(&h, &pm)| h * h * pm)
                .fold(f64::INFINITY, f64::min);
            let p = h.iter().map(|&h| lambda / (h * h)).collect();
            Ok((p, lambda))
        }
        PowerPolicy::FixedLambda(lambda) => {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(Error::Config(format!(
                    "fixed lambda must be positive, got {lambda}"
                )));
            }
            let p = h
                .iter()
                .zip(p_max)
                .map(|(&h, &pm)| (lambda / (h * h)).min(pm))
                .collect();
            Ok((p, lambda))
        }
    }
}

/// Outcome of one aggregation: the noisy received vector, the ideal
/// weighted sum, and their difference.
#[derive(Debug, Clone)]
pub struct AggregationResult {
    pub received: ParamVector,
    pub ideal: ParamVector,
    pub error: ParamVector,
    pub error_sq_norm: f64,
}

impl AggregationResult {
    fn from_parts(received: ParamVector, ideal: ParamVector) -> Result<Self> {
        let error = received.sub(&ideal)?;
        let error_sq_norm = error.norm_sq();
        Ok(Self {
            received,
            ideal,
            error,
            error_sq_norm,
        })
    }
}

/// The signal-misalignment component `sum_n rho_n (align_n - 1) u_n` of the
/// aggregation error; zero under full inversion.
pub fn misalignment_part(
    uploads: &[&ParamVector],
    weights: &AggregationWeights,
    chan: &ChannelRealization,
) -> Result<ParamVector> {
    if uploads.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut out = ParamVector::zeros(uploads[0].len());
    for ((u, &rho), &a) in uploads.iter().zip(weights.rho()).zip(chan.alignment()) {
        out.add_scaled(u, rho * (a - 1.0));
    }
    Ok(out)
}

/// Superpose the uploads through the channel and denoise.
///
/// `received = sum_n rho_n (h_n sqrt(p_n) u_n + z) / sqrt(lambda)` with one
/// noise vector `z` per round, `z_j ~ N(0, sigma_z)` per element. The
/// accumulation runs in device-index order, mirroring the ideal weighted
/// sum, so an aligned noiseless channel reproduces it exactly.
pub fn ota_aggregate(
    uploads: &[&ParamVector],
    weights: &AggregationWeights,
    chan: &ChannelRealization,
    rng: &mut ChaCha12Rng,
) -> Result<AggregationResult> {
    if uploads.len() != chan.devices() {
        return Err(Error::DimensionMismatch {
            context: "ota_aggregate: channel",
            expected: uploads.len(),
            got: chan.devices(),
        });
    }
    let ideal = weighted_sum(uploads, weights)?;
    let q = ideal.len();

    let mut received = ParamVector::zeros(q);
    for ((u, &rho), &a) in uploads.iter().zip(weights.rho()).zip(chan.alignment()) {
        if u.len() != q {
            return Err(Error::DimensionMismatch {
                context: "ota_aggregate: uploads",
                expected: q,
                got: u.len(),
            });
        }
        received.add_scaled(u, rho * a);
    }

    if chan.sigma_z > 0.0 {
        let rho_sum: f64 = weights.rho().iter().sum();
        let noise_scale = rho_sum / chan.lambda.sqrt();
        let std = chan.sigma_z.sqrt();
        let out = received.as_mut_slice();
        for slot in out.iter_mut().take(q) {
            let z: f64 = rng.sample::<f64, _>(StandardNormal);
            *slot += noise_scale * std * z;
        }
    }
    received.check_finite("ota_aggregate")?;
    AggregationResult::from_parts(received, ideal)
}

/// Bypass the channel entirely: the aggregate is the exact weighted sum and
/// the error is identically zero.
pub fn error_free_aggregate(
    uploads: &[&ParamVector],
    weights: &AggregationWeights,
) -> Result<AggregationResult> {
    let ideal = weighted_sum(uploads, weights)?;
    AggregationResult::from_parts(ideal.clone(), ideal)
}
