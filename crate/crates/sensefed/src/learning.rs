//! Loss/gradient engines and both local-computation paths: multi-step
//! mini-batch SGD (model-averaging path) and full-batch gradients
//! (gradient-averaging path), plus the server-side global updates.
//!
//! Three model kinds cover the regimes the analysis cares about:
//! `quadratic` has exact analytic oracles, `logistic` is convex and smooth,
//! and the one-hidden-layer `mlp` with tanh activation is a smooth
//! non-convex stressor.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::data::SampleBatch;
use crate::error::{Error, Result};
use crate::model::ParamVector;

/// Which loss family the experiment trains.
#[derive(Debug, Clone)]
pub enum ModelKind {
    /// `f(w, .) = 0.5 * ||w - center||^2`, independent of the data. Exact
    /// gradients, smoothness constant 1, optimum value 0.
    Quadratic { center: ParamVector },
    /// Multinomial logistic regression on augmented features (trailing
    /// constant 1), `classes * (feature_dim + 1)` parameters.
    Logistic { classes: usize },
    /// One hidden tanh layer followed by softmax cross-entropy.
    Mlp { hidden: usize, classes: usize },
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub feature_dim: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be at least 1".into()));
        }
        match &self.kind {
            ModelKind::Quadratic { center } => {
                if center.is_empty() {
                    return Err(Error::Config("quadratic center must be non-empty".into()));
                }
                center.check_finite("quadratic center")?;
            }
            ModelKind::Logistic { classes } => {
                if *classes < 2 {
                    return Err(Error::Config("logistic needs classes >= 2".into()));
                }
            }
            ModelKind::Mlp { hidden, classes } => {
                if *hidden == 0 || *classes < 2 {
                    return Err(Error::Config("mlp needs hidden >= 1 and classes >= 2".into()));
                }
            }
        }
        Ok(())
    }

    /// Flat parameter length `q`.
    pub fn param_len(&self) -> usize {
        let d = self.feature_dim;
        match &self.kind {
            ModelKind::Quadratic { center } => center.len(),
            ModelKind::Logistic { classes } => classes * (d + 1),
            ModelKind::Mlp { hidden, classes } => hidden * (d + 1) + classes * (hidden + 1),
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::Quadratic { .. } => None,
            ModelKind::Logistic { classes } | ModelKind::Mlp { classes, .. } => Some(*classes),
        }
    }

    /// Initial global model: zeros for the convex kinds, scaled Gaussian
    /// weights for the MLP so the hidden units are not symmetric.
    pub fn init_model(&self, rng: &mut ChaCha12Rng) -> ParamVector {
        use rand::Rng;
        match &self.kind {
            ModelKind::Quadratic { .. } | ModelKind::Logistic { .. } => {
                ParamVector::zeros(self.param_len())
            }
            ModelKind::Mlp { hidden, classes } => {
                let d = self.feature_dim;
                let mut w = vec![0.0; self.param_len()];
                let s1 = 1.0 / (d as f64).sqrt();
                for v in w.iter_mut().take(hidden * d) {
                    *v = s1 * rng.sample::<f64, _>(StandardNormal);
                }
                let off = hidden * (d + 1);
                let s2 = 1.0 / (*hidden as f64).sqrt();
                for v in w.iter_mut().skip(off).take(classes * hidden) {
                    *v = s2 * rng.sample::<f64, _>(StandardNormal);
                }
                ParamVector::from_vec(w).expect("finite init")
            }
        }
    }
}

/// Learning rate, local step count, and mini-batch size for the
/// model-averaging path.
#[derive(Debug, Clone, Copy)]
pub struct LocalUpdateConfig {
    pub eta: f64,
    pub tau: usize,
    pub batch_size: usize,
}

impl LocalUpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.tau == 0 || self.batch_size == 0 {
            return Err(Error::Config("tau and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_inputs(w: &ParamVector, data: &SampleBatch, spec: &ModelSpec) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Data("loss/gradient over an empty dataset".into()));
    }
    if w.len() != spec.param_len() {
        return Err(Error::DimensionMismatch {
            context: "model parameters",
            expected: spec.param_len(),
            got: w.len(),
        });
    }
    if data.feature_dim() != spec.feature_dim {
        return Err(Error::DimensionMismatch {
            context: "feature dimension",
            expected: spec.feature_dim,
            got: data.feature_dim(),
        });
    }
    Ok(())
}

/// Row-wise log-sum-exp with max subtraction; also fills `probs`.
fn softmax_rows(logits: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let m = logits.nrows();
    let mut lse = Array1::zeros(m);
    let mut probs = logits.clone();
    for (i, mut row) in probs.axis_iter_mut(Axis(0)).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        lse[i] = max + sum.ln();
        row.mapv_inplace(|v| v / sum);
    }
    (lse, probs)
}

/// Augment features with a trailing constant-1 column.
fn augmented(data: &SampleBatch) -> Array2<f64> {
    let m = data.len();
    let d = data.feature_dim();
    let mut x = Array2::ones((m, d + 1));
    x.slice_mut(ndarray::s![.., ..d]).assign(&data.features());
    x
}

fn logistic_eval(
    w: &ParamVector,
    data: &SampleBatch,
    classes: usize,
    want_grad: bool,
) -> Result<(f64, Option<ParamVector>)> {
    let d = data.feature_dim();
    let x = augmented(data);
    let weights = ArrayView2::from_shape((classes, d + 1), w.as_slice())
        .expect("param length checked");
    let logits = x.dot(&weights.t());
    let (lse, mut probs) = softmax_rows(&logits);
    let labels = data.class_labels(classes)?;
    let m = data.len() as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss += lse[i] - logits[(i, y)];
    }
    loss /= m;
    if !want_grad {
        return Ok((loss, None));
    }
    for (i, &y) in labels.iter().enumerate() {
        probs[(i, y)] -= 1.0;
    }
    let grad = probs.t().dot(&x) / m; // classes x (d+1)
    let g = ParamVector::from_vec(grad.iter().cloned().collect())?;
    Ok((loss, Some(g)))
}

struct MlpViews<'a> {
    w1: ArrayView2<'a, f64>,
    b1: &'a [f64],
    w2: ArrayView2<'a, f64>,
    b2: &'a [f64],
}

fn mlp_views(w: &ParamVector, d: usize, hidden: usize, classes: usize) -> MlpViews<'_> {
    let s = w.as_slice();
    let (w1, rest) = s.split_at(hidden * d);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(classes * hidden);
    MlpViews {
        w1: ArrayView2::from_shape((hidden, d), w1).unwrap(),
        b1,
        w2: ArrayView2::from_shape((classes, hidden), w2).unwrap(),
        b2,
    }
}

fn mlp_eval(
    w: &ParamVector,
    data: &SampleBatch,
    hidden: usize,
    classes: usize,
    want_grad: bool,
) -> Result<(f64, Option<ParamVector>)> {
    let d = data.feature_dim();
    let v = mlp_views(w, d, hidden, classes);
    let x = data.features();
    let m = data.len() as f64;

    let mut z1 = x.dot(&v.w1.t());
    for mut row in z1.axis_iter_mut(Axis(0)) {
        for (a, &b) in row.iter_mut().zip(v.b1) {
            *a += b;
        }
    }
    let act = z1.mapv(f64::tanh);
    let mut logits = act.dot(&v.w2.t());
    for mut row in logits.axis_iter_mut(Axis(0)) {
        for (a, &b) in row.iter_mut().zip(v.b2) {
            *a += b;
        }
    }
    let (lse, mut probs) = softmax_rows(&logits);
    let labels = data.class_labels(classes)?;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss += lse[i] - logits[(i, y)];
    }
    loss /= m;
    if !want_grad {
        return Ok((loss, None));
    }

    for (i, &y) in labels.iter().enumerate() {
        probs[(i, y)] -= 1.0;
    }
    probs /= m; // dL/dlogits
    let d_w2 = probs.t().dot(&act); // classes x hidden
    let d_b2 = probs.sum_axis(Axis(0)); // classes
    let d_act = probs.dot(&v.w2); // m x hidden
    let d_z1 = &d_act * &act.mapv(|a| 1.0 - a * a);
    let d_w1 = d_z1.t().dot(&x); // hidden x d
    let d_b1 = d_z1.sum_axis(Axis(0)); // hidden

    let mut g = Vec::with_capacity(w.len());
    g.extend(d_w1.iter());
    g.extend(d_b1.iter());
    g.extend(d_w2.iter());
    g.extend(d_b2.iter());
    Ok((loss, Some(ParamVector::from_vec(g)?)))
}

/// Mean of the per-sample losses over `data`.
pub fn local_loss(w: &ParamVector, data: &SampleBatch, spec: &ModelSpec) -> Result<f64> {
    check_inputs(w, data, spec)?;
    let loss = match &spec.kind {
        ModelKind::Quadratic { center } => 0.5 * w.sub(center)?.norm_sq(),
        ModelKind::Logistic { classes } => logistic_eval(w, data, *classes, false)?.0,
        ModelKind::Mlp { hidden, classes } => mlp_eval(w, data, *hidden, *classes, false)?.0,
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite("local_loss".into()));
    }
    Ok(loss)
}

/// Gradient of [`local_loss`] at `w`.
pub fn local_gradient(w: &ParamVector, data: &SampleBatch, spec: &ModelSpec) -> Result<ParamVector> {
    check_inputs(w, data, spec)?;
    let grad = match &spec.kind {
        ModelKind::Quadratic { center } => w.sub(center)?,
        ModelKind::Logistic { classes } => logistic_eval(w, data, *classes, true)?
            .1
            .expect("grad requested"),
        ModelKind::Mlp { hidden, classes } => mlp_eval(w, data, *hidden, *classes, true)?
            .1
            .expect("grad requested"),
    };
    grad.check_finite("local_gradient")?;
    Ok(grad)
}

/// Run `tau` mini-batch SGD steps from the broadcast global model and return
/// the updated local model. Each step draws a fresh batch without
/// replacement; `batch_size` larger than the dataset is clamped with a
/// warning. Deterministic given the RNG state.
pub fn fedavg_local_update(
    w_global: &ParamVector,
    data: &SampleBatch,
    cfg: &LocalUpdateConfig,
    spec: &ModelSpec,
    rng: &mut ChaCha12Rng,
) -> Result<ParamVector> {
    cfg.validate()?;
    check_inputs(w_global, data, spec)?;
    let batch = if cfg.batch_size > data.len() {
        log::warn!(
            "batch_size {} exceeds dataset size {}; clamping",
            cfg.batch_size,
            data.len()
        );
        data.len()
    } else {
        cfg.batch_size
    };
    let mut w = w_global.clone();
    for step in 1..=cfg.tau {
        let idx = sample_indices(rng, data.len(), batch).into_vec();
        let minibatch = data.select(&idx)?;
        let grad = local_gradient(&w, &minibatch, spec)?;
        w.add_scaled(&grad, -cfg.eta);
        w.check_finite(&format!("fedavg_local_update step {step}"))?;
    }
    Ok(w)
}

/// Adopt the aggregated local models as the new global model.
pub fn fedavg_global_update(received: &ParamVector) -> Result<ParamVector> {
    received.check_finite("fedavg_global_update")?;
    Ok(received.clone())
}

/// `w_t = w_prev - eta * aggregated_grad`.
pub fn fedsgd_global_update(
    w_prev: &ParamVector,
    aggregated_grad: &ParamVector,
    eta: f64,
) -> Result<ParamVector> {
    if w_prev.len() != aggregated_grad.len() {
        return Err(Error::DimensionMismatch {
            context: "fedsgd_global_update",
            expected: w_prev.len(),
            got: aggregated_grad.len(),
        });
    }
    let mut w = w_prev.clone();
    w.add_scaled(aggregated_grad, -eta);
    w.check_finite("fedsgd_global_update")?;
    Ok(w)
}

/// Fraction of samples whose argmax logit matches the label. `None` for
/// model kinds without a classification read-out.
pub fn predict_accuracy(w: &ParamVector, data: &SampleBatch, spec: &ModelSpec) -> Result<Option<f64>> {
    check_inputs(w, data, spec)?;
    let classes = match spec.classes() {
        Some(c) => c,
        None => return Ok(None),
    };
    let d = data.feature_dim();
    let logits = match &spec.kind {
        ModelKind::Logistic { .. } => {
            let x = augmented(data);
            let weights = ArrayView2::from_shape((classes, d + 1), w.as_slice()).unwrap();
            x.dot(&weights.t())
        }
        ModelKind::Mlp { hidden, .. } => {
            let v = mlp_views(w, d, *hidden, classes);
            let mut z1 = data.features().dot(&v.w1.t());
            for mut row in z1.axis_iter_mut(Axis(0)) {
                for (a, &b) in row.iter_mut().zip(v.b1) {
                    *a += b;
                }
            }
            let act = z1.mapv(f64::tanh);
            let mut logits = act.dot(&v.w2.t());
            for mut row in logits.axis_iter_mut(Axis(0)) {
                for (a, &b) in row.iter_mut().zip(v.b2) {
                    *a += b;
                }
            }
            logits
        }
        ModelKind::Quadratic { .. } => unreachable!(),
    };
    let labels = data.class_labels(classes)?;
    let mut correct = 0usize;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0;
        for (k, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = k;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / data.len() as f64))
}
