//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`). Every
//! tolerance is pinned here; independent oracles (finite differences,
//! closed forms, brute-force summation) live in this file.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use sensefed::analysis::{
    fedavg_lr_feasible, lemma1_random_trial, theorem1_bound, theorem2_bound, Algorithm,
    AssumptionConstants, BoundTerm, ConstSource, GradBound,
};
use sensefed::channel::{
    draw_channel, error_free_aggregate, ota_aggregate, ChannelRealization, PowerPolicy,
};
use sensefed::config::ExperimentConfig;
use sensefed::cost::{comm_energy, comm_latency, comp_energy, comp_latency, round_cost, DeviceRoundCost};
use sensefed::data::{generate_pool, Generator, SampleBatch};
use sensefed::harness::{
    evaluate_bounds, metrics_csv, run_experiment, run_sweep, write_result, ConstantsSource,
    SweepAxis,
};
use sensefed::learning::{
    fedavg_local_update, fedsgd_global_update, local_gradient, local_loss, LocalUpdateConfig,
    ModelKind, ModelSpec,
};
use sensefed::model::{weight_fraction, weighted_sum, ParamVector};
use sensefed::rng::{StreamKey, StreamPurpose};

fn pass(criterion: usize, what: &str) {
    println!("criterion {criterion}: PASS - {what}");
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

// --- criterion 1: exact gradient decomposition -------------------------

#[test]
fn criterion_1_gradient_decomposition_is_exact() {
    let start = std::time::Instant::now();
    for seed in 0..1000u64 {
        let trial = lemma1_random_trial(seed).unwrap();
        assert!(
            trial.residual <= 1e-10 * (1.0 + trial.lhs_scale),
            "seed {seed}: residual {} exceeds tolerance (scale {})",
            trial.residual,
            trial.lhs_scale
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed}s, budget 10s");
    pass(1, "1000 decomposition residuals within 1e-10 * (1 + ||lhs||)");
}

// --- criterion 2: gradients vs finite differences ----------------------

/// Independent oracle: central finite differences of the loss.
fn fd_gradient(w: &ParamVector, data: &SampleBatch, spec: &ModelSpec, h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut plus = w.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = w.clone();
            minus.as_mut_slice()[j] -= h;
            (local_loss(&plus, data, spec).unwrap() - local_loss(&minus, data, spec).unwrap())
                / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let start = std::time::Instant::now();
    let key = StreamKey::new(2024);
    for instance in 0..100u64 {
        let mut rng = key.stream(StreamPurpose::Partition, instance, 0);
        let dim = rng.random_range(2..=4usize);
        let classes = rng.random_range(2..=3usize);
        let samples = rng.random_range(3..=10usize);
        let specs = [
            ModelSpec {
                feature_dim: dim,
                kind: ModelKind::Quadratic {
                    center: ParamVector::from_vec(
                        (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    )
                    .unwrap(),
                },
            },
            ModelSpec {
                feature_dim: dim,
                kind: ModelKind::Logistic { classes },
            },
            ModelSpec {
                feature_dim: dim,
                kind: ModelKind::Mlp {
                    hidden: 3,
                    classes,
                },
            },
        ];
        let gen = Generator::Blobs {
            classes,
            class_sep: 1.5,
            noise: 1.0,
        };
        let data = generate_pool(
            &gen,
            samples,
            dim,
            &mut key.stream(StreamPurpose::PoolTrain, instance, 0),
        )
        .unwrap();
        for spec in &specs {
            let w = ParamVector::from_vec(
                (0..spec.param_len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let analytic = local_gradient(&w, &data, spec).unwrap();
            let numeric = fd_gradient(&w, &data, spec, 1e-5);
            for (j, (&a, &n)) in analytic.as_slice().iter().zip(&numeric).enumerate() {
                let tol = 1e-4 * a.abs().max(n.abs()) + 1e-8;
                assert!(
                    (a - n).abs() <= tol,
                    "instance {instance} coordinate {j}: analytic {a} vs numeric {n}"
                );
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed}s, budget 30s");
    pass(2, "analytic gradients match central differences on 100 instances x 3 model kinds");
}

// --- criterion 3: channel error closed form ----------------------------

#[test]
fn criterion_3_channel_error_matches_closed_form() {
    let start = std::time::Instant::now();
    let key = StreamKey::new(33);
    for instance in 0..1000u64 {
        let mut rng = key.stream(StreamPurpose::Fading, instance, 0);
        let devices = rng.random_range(1..=5usize);
        let q = rng.random_range(1..=16usize);
        let h = draw_channel(devices, &mut rng);
        let aligned = instance % 3 == 0;
        let sigma_z = if instance % 2 == 0 {
            0.0
        } else {
            rng.random_range(0.1..2.0)
        };
        let chan = if aligned {
            let p_max: Vec<f64> = (0..devices).map(|_| rng.random_range(1.0..10.0)).collect();
            ChannelRealization::from_policy(h.clone(), &p_max, sigma_z, PowerPolicy::FullInversion)
                .unwrap()
        } else {
            let p: Vec<f64> = (0..devices).map(|_| rng.random_range(0.1..5.0)).collect();
            ChannelRealization::new(h.clone(), p, rng.random_range(0.5..4.0), sigma_z).unwrap()
        };
        let uploads: Vec<ParamVector> = (0..devices)
            .map(|_| {
                ParamVector::from_vec((0..q).map(|_| rng.random_range(-3.0..3.0)).collect())
                    .unwrap()
            })
            .collect();
        let sizes: Vec<usize> = (0..devices).map(|_| rng.random_range(1..40)).collect();
        let weights = weight_fraction(&sizes).unwrap();
        let refs: Vec<&ParamVector> = uploads.iter().collect();

        let noise_seed = key.stream(StreamPurpose::Noise, instance, 0);
        let res = ota_aggregate(&refs, &weights, &chan, &mut noise_seed.clone()).unwrap();

        if aligned && sigma_z == 0.0 {
            assert!(
                res.error.as_slice().iter().all(|&e| e == 0.0),
                "instance {instance}: aligned noiseless error must be exactly zero"
            );
        }

        // Closed form, evaluated independently from (h, p, lambda) and the
        // same per-element noise draw.
        let mut noise_rng = noise_seed;
        let rho_sum: f64 = weights.rho().iter().sum();
        for j in 0..q {
            let mut expect = 0.0;
            for n in 0..devices {
                let coeff = h[n] * chan.p[n].sqrt() / chan.lambda.sqrt() - 1.0;
                expect += weights.rho()[n] * coeff * uploads[n].as_slice()[j];
            }
            if sigma_z > 0.0 {
                let z: f64 = noise_rng.sample::<f64, _>(StandardNormal);
                expect += rho_sum * sigma_z.sqrt() * z / chan.lambda.sqrt();
            }
            assert!(
                (res.error.as_slice()[j] - expect).abs() <= 1e-12,
                "instance {instance}, coordinate {j}: {} vs {expect}",
                res.error.as_slice()[j]
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed}s, budget 5s");
    pass(3, "received - ideal equals the closed-form error on 1000 instances; aligned noiseless error is exactly 0");
}

// --- criterion 4: classic FL equivalence --------------------------------

fn identical_data_equivalence(spec: &ModelSpec, data: &SampleBatch, eta: f64, rounds: usize) {
    let devices = 4;
    let key = StreamKey::new(4004);
    let mut w_avg = ParamVector::zeros(spec.param_len());
    let mut w_sgd = w_avg.clone();
    let mut w_central = w_avg.clone();
    let weights = weight_fraction(&vec![data.len(); devices]).unwrap();
    let cfg = LocalUpdateConfig {
        eta,
        tau: 1,
        batch_size: data.len(),
    };

    for t in 1..=rounds {
        // Model-averaging path: one full-batch local step per device.
        let locals: Vec<ParamVector> = (0..devices)
            .map(|n| {
                let mut rng = key.stream(StreamPurpose::MiniBatch, n as u64, t as u64);
                fedavg_local_update(&w_avg, data, &cfg, spec, &mut rng).unwrap()
            })
            .collect();
        let refs: Vec<&ParamVector> = locals.iter().collect();
        w_avg = error_free_aggregate(&refs, &weights).unwrap().received;

        // Gradient-averaging path: full-batch gradients, one server step.
        let grads: Vec<ParamVector> = (0..devices)
            .map(|_| local_gradient(&w_sgd, data, spec).unwrap())
            .collect();
        let grefs: Vec<&ParamVector> = grads.iter().collect();
        let agg = weighted_sum(&grefs, &weights).unwrap();
        w_sgd = fedsgd_global_update(&w_sgd, &agg, eta).unwrap();

        // Centralized full-batch gradient descent oracle.
        let g = local_gradient(&w_central, data, spec).unwrap();
        let mut next = w_central.clone();
        next.add_scaled(&g, -eta);
        w_central = next;

        for j in 0..spec.param_len() {
            let a = w_avg.as_slice()[j];
            let s = w_sgd.as_slice()[j];
            let c = w_central.as_slice()[j];
            assert!(
                (a - c).abs() <= 1e-10 && (s - c).abs() <= 1e-10,
                "round {t} coordinate {j}: avg {a}, sgd {s}, central {c}"
            );
        }
    }
}

#[test]
fn criterion_4_classic_fl_equivalence() {
    let start = std::time::Instant::now();
    let key = StreamKey::new(44);
    let quad = ModelSpec {
        feature_dim: 3,
        kind: ModelKind::Quadratic {
            center: ParamVector::from_vec(vec![1.0, -1.0, 0.5]).unwrap(),
        },
    };
    let logi = ModelSpec {
        feature_dim: 3,
        kind: ModelKind::Logistic { classes: 3 },
    };
    let gen = Generator::Blobs {
        classes: 3,
        class_sep: 1.5,
        noise: 0.8,
    };
    let data = generate_pool(&gen, 40, 3, &mut key.stream(StreamPurpose::PoolTrain, 0, 0)).unwrap();
    identical_data_equivalence(&quad, &data, 0.2, 50);
    identical_data_equivalence(&logi, &data, 0.1, 50);

    // Harness-level check with one device (trivially identical data): the
    // two algorithms coincide round for round.
    let base = r#"
algorithm = "fedavg"
seed = 31
rounds = 50
devices = 1
error_free = true
record_probes = false

[model]
kind = "logistic"
feature_dim = 3
classes = 3

[training]
eta = 0.1
tau = 1
batch_size = 10000

[sensing]
strategy = "all_at_start"
total_per_device = 40

[data]
test_samples = 10
"#;
    let cfg_avg = ExperimentConfig::from_toml_str(base).unwrap();
    let cfg_sgd =
        ExperimentConfig::from_toml_str(&base.replace("\"fedavg\"", "\"fedsgd\"")).unwrap();
    let res_avg = run_experiment(cfg_avg).unwrap();
    let res_sgd = run_experiment(cfg_sgd).unwrap();
    for (a, s) in res_avg
        .final_model
        .as_slice()
        .iter()
        .zip(res_sgd.final_model.as_slice())
    {
        assert!((a - s).abs() <= 1e-10, "harness paths diverged: {a} vs {s}");
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed}s, budget 10s");
    pass(4, "both algorithms track centralized gradient descent for 50 rounds within 1e-10");
}

// --- criterion 5: bound validity ----------------------------------------

#[test]
fn criterion_5_bounds_hold_on_random_feasible_configs() {
    let start = std::time::Instant::now();
    let key = StreamKey::new(55);
    let mut checked = 0;
    for instance in 0..24u64 {
        let mut rng = key.stream(StreamPurpose::Partition, instance, 0);
        let devices = rng.random_range(1..=5usize);
        let rounds = rng.random_range(10..=25usize);
        let fedavg = instance % 2 == 0;
        let tau = if fedavg { rng.random_range(1..=5usize) } else { 1 };
        // Feasible learning rates for smoothness 1 (exact for the
        // quadratic kind): the model-averaging condition needs
        // 2 eta^2 tau (tau-1) <= 1/5, the other path needs
        // eta <= 1/(2 sqrt 2) even for flat schedules.
        let eta = if fedavg {
            if tau > 1 {
                0.9 * (0.1 / (tau as f64 * (tau as f64 - 1.0))).sqrt()
            } else {
                rng.random_range(0.05..0.8)
            }
        } else {
            rng.random_range(0.02..0.3)
        };
        let strategy = ["uniform", "front_loaded", "all_at_start"][instance as usize % 3];
        let (error_free, policy_lines) = match instance % 4 {
            0 => (true, String::new()),
            1 => (
                false,
                "[channel]\npolicy = \"full_inversion\"\nsigma_z = 0.0\n".to_string(),
            ),
            2 => (
                false,
                format!(
                    "[channel]\npolicy = \"full_inversion\"\nsigma_z = {}\n",
                    rng.random_range(0.01..0.3)
                ),
            ),
            _ => (
                false,
                format!(
                    "[channel]\npolicy = \"fixed_lambda\"\nlambda = {}\nsigma_z = {}\n",
                    rng.random_range(3.0..10.0),
                    rng.random_range(0.0..1.0)
                ),
            ),
        };
        let total = rng.random_range(20..=60usize);
        let dim = rng.random_range(2..=5usize);
        let center: Vec<String> = (0..dim)
            .map(|_| format!("{:.3}", rng.random_range(-2.0..2.0)))
            .collect();
        let text = format!(
            r#"
algorithm = "{}"
seed = {}
rounds = {rounds}
devices = {devices}
error_free = {error_free}

[model]
kind = "quadratic"
feature_dim = {dim}
center = [{}]

[training]
eta = {eta}
tau = {tau}
batch_size = 8

[sensing]
strategy = "{strategy}"
total_per_device = {total}

[data]
test_samples = 5

{policy_lines}
"#,
            if fedavg { "fedavg" } else { "fedsgd" },
            1000 + instance,
            center.join(", "),
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let result = run_experiment(cfg).unwrap();
        let (report, consts, _) = evaluate_bounds(&result, ConstantsSource::Estimated).unwrap();
        assert!(
            report.feasible,
            "instance {instance} unexpectedly infeasible: eta {eta}, tau {tau}, L {}",
            consts.smoothness
        );
        let measured = report.measured_avg_grad_sq.unwrap();
        let total_bound = report.total.unwrap();
        assert!(
            measured <= total_bound,
            "instance {instance}: measured {measured} exceeds bound {total_bound}"
        );
        checked += 1;
    }
    assert!(checked >= 20);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed}s, budget 120s");
    pass(5, "measured average squared gradient norm within the bound on 24/24 random feasible runs");
}

// --- criterion 6: IID advantage of multiple local steps ------------------

/// Smoothness upper bound for softmax cross-entropy on a pool: half the
/// mean squared norm of the augmented features dominates the Hessian.
fn logistic_smoothness_bound(pool: &SampleBatch) -> f64 {
    let m = pool.len() as f64;
    let sum: f64 = (0..pool.len())
        .map(|i| pool.feature_row(i).iter().map(|x| x * x).sum::<f64>() + 1.0)
        .sum();
    0.5 * sum / m
}

fn iid_logistic_config(algorithm: &str, seed: u64, eta: f64, tau: usize, rounds: usize) -> ExperimentConfig {
    let text = format!(
        r#"
algorithm = "{algorithm}"
seed = {seed}
rounds = {rounds}
devices = 10
error_free = true
record_probes = false

[model]
kind = "logistic"
feature_dim = 4
classes = 3

[training]
eta = {eta}
tau = {tau}
batch_size = 16

[sensing]
strategy = "uniform"
total_per_device = 120

[partition]
mode = "iid"

[data]
class_sep = 1.0
noise = 0.5
test_samples = 100
"#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

#[test]
fn criterion_6_iid_advantage_of_local_updates() {
    let start = std::time::Instant::now();
    let tau = 5;
    let rounds = 60;

    // Tune eta to the feasibility condition using the worst smoothness
    // bound over the seeds' pools.
    let mut l_bound: f64 = 0.0;
    for seed in 0..5u64 {
        let key = StreamKey::new(seed);
        let gen = Generator::Blobs {
            classes: 3,
            class_sep: 1.0,
            noise: 0.5,
        };
        let pool = generate_pool(&gen, 1300, 4, &mut key.stream(StreamPurpose::PoolTrain, 0, 0))
            .unwrap();
        l_bound = l_bound.max(logistic_smoothness_bound(&pool));
    }
    let eta = 0.9 * (0.1 / (tau as f64 * (tau as f64 - 1.0))).sqrt() / l_bound;
    assert!(
        fedavg_lr_feasible(eta, l_bound, tau, 1.0, 1.0),
        "eta {eta} infeasible for L {l_bound}"
    );

    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let sgd = run_experiment(iid_logistic_config("fedsgd", seed, eta, 1, rounds)).unwrap();
        let avg = run_experiment(iid_logistic_config("fedavg", seed, eta, tau, rounds)).unwrap();
        let target = sgd.trace.rounds.last().unwrap().loss;
        let sgd_rounds = sgd
            .trace
            .rounds
            .iter()
            .find(|r| r.loss <= target)
            .map(|r| r.round)
            .unwrap_or(rounds + 1);
        let avg_rounds = avg
            .trace
            .rounds
            .iter()
            .find(|r| r.loss <= target)
            .map(|r| r.round)
            .unwrap_or(rounds + 1);
        ratios.push(avg_rounds as f64 / sgd_rounds as f64);
    }
    let med = median(ratios.clone());
    assert!(
        med <= 0.6,
        "median rounds-to-target ratio {med} > 0.6 (ratios {ratios:?})"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed}s, budget 120s");
    pass(6, "multi-step local updates reach the target loss in at most 0.6x the rounds (median over 5 seeds)");
}

// --- criterion 7: robustness ordering under label skew -------------------

fn skew_base_config(algorithm: &str, tau: usize, eta: f64) -> ExperimentConfig {
    let text = format!(
        r#"
algorithm = "{algorithm}"
seed = 70
rounds = 50
devices = 10
error_free = true
record_probes = false

[model]
kind = "logistic"
feature_dim = 6
classes = 5

[training]
eta = {eta}
tau = {tau}
batch_size = 8

[sensing]
strategy = "uniform"
total_per_device = 100

[partition]
mode = "dirichlet"
gamma = 1.0

[data]
class_sep = 1.2
noise = 0.6
test_samples = 200
"#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

#[test]
fn criterion_7_noniid_robustness_ordering() {
    let start = std::time::Instant::now();
    let eta = 0.01;
    let values: Vec<String> = ["100", "1", "0.1"].iter().map(|s| s.to_string()).collect();
    let sweep_avg = run_sweep(&skew_base_config("fedavg", 5, eta), SweepAxis::Gamma, &values, 5);
    let sweep_sgd = run_sweep(&skew_base_config("fedsgd", 1, eta), SweepAxis::Gamma, &values, 5);

    let deg = |sweep: &sensefed::harness::SweepResult| {
        let skewed = sweep.median_over_seeds("0.1", |s| s.final_loss).unwrap();
        let mild = sweep.median_over_seeds("100", |s| s.final_loss).unwrap();
        skewed - mild
    };
    let deg_avg = deg(&sweep_avg);
    let deg_sgd = deg(&sweep_sgd);
    assert!(
        deg_avg > deg_sgd,
        "label-skew degradation: multi-step {deg_avg} must exceed single-step {deg_sgd}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "took {elapsed}s, budget 300s");
    pass(7, "final-loss degradation under heavy label skew is larger for the multi-step path");
}

// --- criterion 8: robustness ordering under channel noise ----------------

fn noisy_base_config(algorithm: &str, tau: usize, eta: f64) -> ExperimentConfig {
    let text = format!(
        r#"
algorithm = "{algorithm}"
seed = 80
rounds = 40
devices = 10
record_probes = false

[model]
kind = "logistic"
feature_dim = 6
classes = 3

[training]
eta = {eta}
tau = {tau}
batch_size = 8

[sensing]
strategy = "uniform"
total_per_device = 100

[partition]
mode = "iid"

[channel]
policy = "fixed_lambda"
lambda = 10.0
sigma_z = 1.0

[data]
class_sep = 1.2
noise = 0.6
test_samples = 200
"#
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

#[test]
fn criterion_8_communication_error_robustness_ordering() {
    let start = std::time::Instant::now();
    let eta = 0.01;
    let tau = 5;
    let values: Vec<String> = ["0", "1", "10"].iter().map(|s| s.to_string()).collect();
    let sweep_avg = run_sweep(&noisy_base_config("fedavg", tau, eta), SweepAxis::SigmaZ, &values, 5);
    let sweep_sgd = run_sweep(&noisy_base_config("fedsgd", 1, eta), SweepAxis::SigmaZ, &values, 5);

    let deg = |sweep: &sensefed::harness::SweepResult| {
        let noisy = sweep.median_over_seeds("10", |s| s.final_loss).unwrap();
        let clean = sweep.median_over_seeds("0", |s| s.final_loss).unwrap();
        noisy - clean
    };
    let deg_avg = deg(&sweep_avg);
    let deg_sgd = deg(&sweep_sgd);
    assert!(
        deg_avg > deg_sgd,
        "noise degradation: model-averaging {deg_avg} must exceed gradient-averaging {deg_sgd}"
    );

    // Exact identity: on the same trace and constants, the two bounds'
    // communication terms differ by exactly 1/(eta^2 tau^2).
    let mut cfg = noisy_base_config("fedsgd", 1, eta);
    cfg.record_probes = true;
    cfg.raw_toml = None;
    let result = run_experiment(cfg).unwrap();
    let consts = AssumptionConstants {
        smoothness: 0.5,
        grad_variance: 0.0,
        grad_bound: GradBound::Uniform(1.0),
        alpha_sq: 1.0,
        beta_sq: 0.0,
        source: ConstSource::Provided,
    };
    let r1 = theorem1_bound(&result.trace, &consts, eta, tau, 1.0, &result.final_rho).unwrap();
    let r2 = theorem2_bound(&result.trace, &consts, eta, 1.0).unwrap();
    let ratio = r1.term(BoundTerm::CommunicationErrors).unwrap()
        / r2.term(BoundTerm::CommunicationErrors).unwrap();
    let expect = 1.0 / (eta * eta * (tau * tau) as f64);
    assert!(
        (ratio - expect).abs() <= 1e-12 * expect,
        "communication-term ratio {ratio} differs from 1/(eta^2 tau^2) = {expect}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "took {elapsed}s, budget 300s");
    pass(8, "noise degradation ordering holds and the bound-term ratio equals 1/(eta^2 tau^2)");
}

// --- criterion 9: cost model exactness -----------------------------------

#[test]
fn criterion_9_cost_model_exactness() {
    let start = std::time::Instant::now();

    // Reference radio constants: one full resource block of 14 symbols in
    // 1 ms carries a 14-parameter model in exactly 1 ms.
    assert_eq!(comm_latency(14, 14, 1e-3).unwrap(), 1e-3);

    // Hand-computed instances: (q, L, t_slot, expected latency).
    let latency_cases = [
        (14usize, 14usize, 1e-3, 1e-3),
        (15, 14, 1e-3, 2e-3),
        (1, 14, 1e-3, 1e-3),
        (28, 14, 1e-3, 2e-3),
        (29, 14, 2e-3, 6e-3),
    ];
    for (q, l, slot, expect) in latency_cases {
        let got = comm_latency(q, l, slot).unwrap();
        assert!((got - expect).abs() <= 1e-12, "latency({q},{l},{slot})");
    }

    // (cycles/sample, samples, freq, epochs, expected seconds).
    let comp_latency_cases = [
        (1e6, 60usize, 1e9, 1.0, 0.06),
        (1e6, 0, 1e9, 1.0, 0.0),
        (2e6, 30, 1e9, 1.0, 0.06),
        (1e6, 60, 2e9, 1.0, 0.03),
        (1e6, 60, 1e9, 0.5, 0.03),
    ];
    for (cps, s, f, ep, expect) in comp_latency_cases {
        let got = comp_latency(cps, s, f, ep).unwrap();
        assert!((got - expect).abs() <= 1e-12, "comp_latency({cps},{s},{f},{ep})");
    }

    // (cycles/sample, coeff, freq, samples, epochs, expected joules).
    let energy_cases = [
        (1e6, 1e-28, 1e9, 60usize, 1.0, 6e-3),
        (1e6, 1e-28, 1e9, 0, 1.0, 0.0),
        (1e6, 1e-28, 2e9, 60, 1.0, 2.4e-2),
        (1e6, 2e-28, 1e9, 60, 1.0, 1.2e-2),
        (1e6, 1e-28, 1e9, 60, 2.0, 1.2e-2),
    ];
    for (cps, coeff, f, s, ep, expect) in energy_cases {
        let got = comp_energy(cps, coeff, f, s, ep);
        assert!(
            (got - expect).abs() <= 1e-12 * expect.max(1.0),
            "comp_energy({cps},{coeff},{f},{s},{ep}) = {got}, expected {expect}"
        );
    }

    // Transmit energy at the reference power budget.
    assert!((comm_energy(10.0, 1e-3) - 0.01).abs() <= 1e-12);
    assert!((comm_energy(2.0, 3e-3) - 0.006).abs() <= 1e-12);

    // Round totals: max computation plus one transmission; energies add.
    let cost = round_cost(
        &[
            DeviceRoundCost {
                comp_latency: 3e-3,
                comp_energy: 1e-3,
                comm_energy: 5e-4,
            },
            DeviceRoundCost {
                comp_latency: 5e-3,
                comp_energy: 2e-3,
                comm_energy: 5e-4,
            },
            DeviceRoundCost {
                comp_latency: 4e-3,
                comp_energy: 0.0,
                comm_energy: 0.0,
            },
        ],
        2e-3,
    )
    .unwrap();
    assert!((cost.total_latency - 7e-3).abs() <= 1e-12);
    assert!((cost.total_energy - 4e-3).abs() <= 1e-12);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "took {elapsed}s, budget 1s");
    pass(9, "latency and energy formulas match hand-computed values to 1e-12");
}

// --- criterion 10: determinism -------------------------------------------

#[test]
fn criterion_10_determinism() {
    let start = std::time::Instant::now();
    let text = r#"
algorithm = "fedavg"
seed = 1010
rounds = 8
devices = 5

[model]
kind = "logistic"
feature_dim = 4
classes = 3

[training]
eta = 0.02
tau = 3
batch_size = 8

[sensing]
strategy = "front_loaded"
total_per_device = 40

[partition]
mode = "dirichlet"
gamma = 0.5

[channel]
policy = "fixed_lambda"
lambda = 5.0
sigma_z = 1.0

[data]
test_samples = 50
"#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let run_a = run_experiment(cfg.clone()).unwrap();
    let run_b = run_experiment(cfg.clone()).unwrap();
    write_result(&dir.path().join("a"), &run_a).unwrap();
    write_result(&dir.path().join("b"), &run_b).unwrap();
    let bytes_a = std::fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b, "repeat runs must be byte-identical");
    assert_eq!(
        std::fs::read(dir.path().join("a/trace.json")).unwrap(),
        std::fs::read(dir.path().join("b/trace.json")).unwrap()
    );

    let mut parallel = cfg.clone();
    parallel.parallel_devices = true;
    parallel.raw_toml = None;
    let run_p = run_experiment(parallel).unwrap();
    assert_eq!(
        metrics_csv(&run_a),
        metrics_csv(&run_p),
        "serial and parallel execution must be identical"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed}s, budget 60s");
    pass(10, "repeat runs and serial-vs-parallel execution are byte-identical");
}

// --- criterion 11: complexity scaling sanity ------------------------------

#[test]
fn criterion_11_corollary_scaling_sanity() {
    let start = std::time::Instant::now();
    let devices = 4;
    let tau = 2;
    let mut averages = Vec::new();
    for rounds in [100usize, 400, 1600] {
        let eta = (devices as f64 / (tau as f64 * rounds as f64)).sqrt();
        let text = format!(
            r#"
algorithm = "fedavg"
seed = 1100
rounds = {rounds}
devices = {devices}
error_free = true
record_probes = false
eval_stride = 1000000

[model]
kind = "quadratic"
feature_dim = 3
center = [2.0, -1.0, 1.5]

[training]
eta = {eta}
tau = {tau}
batch_size = 4

[sensing]
strategy = "uniform"
total_per_device = {rounds}

[data]
test_samples = 2
"#
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let result = run_experiment(cfg).unwrap();
        averages.push(result.trace.measured_avg_grad_sq().unwrap());
    }
    assert!(
        averages[0] > averages[1] && averages[1] > averages[2],
        "average squared gradient norm must decrease with T: {averages:?}"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 180.0, "took {elapsed}s, budget 180s");
    pass(11, "average squared gradient norm decreases as T grows under the corollary step size");
}
