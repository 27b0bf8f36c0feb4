//! End-to-end acceptance suite. Each test exercises one primary claim of
//! the attack harness at desk scale and prints a single `PASS`/`FAIL` line
//! (visible with `--nocapture`; the test verdict carries the same
//! information). Every fixture is seeded, so the numbers below are
//! reproducible bit for bit on any platform with IEEE-754 doubles.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vqclab::backdoor::{
    evaluate_asr, inject_backdoor, masked_state, search_theta, search_theta_flat_coordinate,
    triggered_model, BackdoorSpec,
};
use vqclab::data::{
    filter_classes, gen_sin_sequences, generate_corpus, parse_idx, prepare_classification,
    write_idx, Dataset, IdxData, SynthSpec,
};
use vqclab::poison::{poison_dataset, retrain_experiment, PoisonSpec};
use vqclab::train::{
    evaluate_cda, evaluate_mse, fit, fit_from, predict_all, sample_grad, AdamState, GradMode,
    Target, TrainConfig, TrainReport,
};
use vqclab::trigcfg::{benign_config, emit_config, emit_trigger_config, parse_config, resolve,
    ConfigError};
use vqclab::vqc::{encoding_region_state, forward, forward_state, Model};

// ---------------------------------------------------------------------------
// Desk-scale experiment constants
// ---------------------------------------------------------------------------
//
// The corpus, learning rates and seeds below are frozen: they were chosen
// once so that every experiment clears its threshold with margin, and the
// whole suite stays deterministic.

fn desk_corpus_spec() -> SynthSpec {
    SynthSpec { n_train: 6000, n_test: 1500, seed: 7, ambiguity: 0.12 }
}

fn mnist2_train_config() -> TrainConfig<f64> {
    TrainConfig {
        learning_rate: 0.05,
        batch_size: 32,
        ..TrainConfig::classification(42)
    }
}

fn dpba_spec() -> PoisonSpec<f64> {
    PoisonSpec {
        trigger_qubits: vec![0, 1, 2],
        poison_rate: 0.15,
        ..PoisonSpec::new(1, 5)
    }
}

fn retrain_config() -> TrainConfig<f64> {
    TrainConfig { epochs: 2, seed: 44, ..mnist2_train_config() }
}

/// Raw 28×28 digit corpus shared by both classification tasks.
static CORPUS: LazyLock<[IdxData; 4]> =
    LazyLock::new(|| generate_corpus(&desk_corpus_spec()).expect("corpus"));

/// Two-class task: PCA to 8 components, digits {0, 1} → 1200 train / 300
/// test samples.
static MNIST2: LazyLock<(Dataset<f64>, Dataset<f64>)> = LazyLock::new(|| {
    let [ti, tl, vi, vl] = &*CORPUS;
    let (train, test, _pca) = prepare_classification::<f64>(ti, tl, vi, vl, 8).expect("pca");
    (
        filter_classes(&train, &[0, 1]).expect("train filter"),
        filter_classes(&test, &[0, 1]).expect("test filter"),
    )
});

/// Four-class task: PCA to 4 components, digits {0..3} → 2400 train / 600
/// test samples. Four qubits, so the nested partial-trigger sweep ends at
/// the full encoding width.
static MNIST4: LazyLock<(Dataset<f64>, Dataset<f64>)> = LazyLock::new(|| {
    let [ti, tl, vi, vl] = &*CORPUS;
    let (train, test, _pca) = prepare_classification::<f64>(ti, tl, vi, vl, 4).expect("pca");
    (
        filter_classes(&train, &[0, 1, 2, 3]).expect("train filter"),
        filter_classes(&test, &[0, 1, 2, 3]).expect("test filter"),
    )
});

/// Clean 8-qubit two-class model, trained 3 epochs.
static CLEAN2: LazyLock<(Model<f64>, TrainReport<f64>)> = LazyLock::new(|| {
    let model = Model::classifier(8, 2, 2).expect("model");
    let report = fit(&model, &MNIST2.0, &mnist2_train_config()).expect("fit");
    (model, report)
});

/// Clean 4-qubit four-class model, trained 3 epochs.
static TRAINED4: LazyLock<(Model<f64>, TrainReport<f64>)> = LazyLock::new(|| {
    let model = Model::classifier(4, 2, 4).expect("model");
    let cfg = TrainConfig { seed: 4, ..mnist2_train_config() };
    let report = fit(&model, &MNIST4.0, &cfg).expect("fit");
    (model, report)
});

/// Dense-encoded sin regressor: 320 windows of 8 consecutive samples
/// (step 0.3), first 256 for training.
static SINREG: LazyLock<(Model<f64>, TrainReport<f64>, Dataset<f64>, Dataset<f64>)> =
    LazyLock::new(|| {
        let all = gen_sin_sequences::<f64>(320, 8, 0.3).expect("windows");
        let (train, test) = all.split_at(256).expect("split");
        let model = Model::regressor(4, 3).expect("model");
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 120,
            batch_size: 16,
            ..TrainConfig::regression(22)
        };
        let report = fit(&model, &train, &cfg).expect("fit");
        (model, report, train, test)
    });

fn report(number: u32, name: &str, pass: bool) {
    println!(
        "criterion {number:02} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn variance(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
}

fn prediction_values(model: &Model<f64>, report: &TrainReport<f64>, inputs: &[Vec<f64>]) -> Vec<f64> {
    predict_all(model, &report.params, inputs)
        .expect("predict")
        .iter()
        .map(|p| p.value().expect("regression"))
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Full trigger makes a plain-angle circuit input-independent
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_input_independence() {
    let model = Model::<f64>::classifier(8, 2, 2).expect("model");
    let params = vqclab::train::init_params(&model, 9);
    let theta: Vec<f64> = (0..8).map(|q| 0.37 * (q + 1) as f64).collect();
    let spec = BackdoorSpec::full((0..8).collect(), theta, 0).expect("spec");
    let triggered = triggered_model(&model, &spec).expect("triggered");
    let masked = masked_state(&spec, 8).expect("masked");

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let inputs: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..8).map(|_| rng.gen_range(0.0..FRAC_PI_2)).collect())
        .collect();

    let reference = forward_state(&triggered, &params, &inputs[0])
        .expect("forward")
        .probabilities();
    let mut max_prob_dev = 0.0f64;
    let mut min_fidelity = 1.0f64;
    for x in &inputs {
        let probs = forward_state(&triggered, &params, x).expect("forward").probabilities();
        for (p, r) in probs.iter().zip(&reference) {
            max_prob_dev = max_prob_dev.max((p - r).abs());
        }
        let region = encoding_region_state(&triggered, x).expect("region");
        min_fidelity = min_fidelity.min(region.fidelity(&masked).expect("fidelity"));
    }

    // The config file carries 10-decimal angles, so the sandwich cancels the
    // input only up to that rounding; the residual is a few 1e-12 per qubit.
    let pass = max_prob_dev <= 1e-10 && min_fidelity >= 1.0 - 1e-10;
    report(1, "input independence", pass);
    assert!(
        pass,
        "max probability deviation {max_prob_dev:.3e} (limit 1e-10), \
         min masked-state fidelity {min_fidelity:.12} (limit 1 - 1e-10)"
    );
}

// ---------------------------------------------------------------------------
// 2. A benign config leaves the backdoored model's predictions unchanged
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_cda_identity() {
    let (model, trained) = &*CLEAN2;
    let spec = BackdoorSpec::full_uniform((0..8).collect(), 1.0, 1).expect("spec");
    let injected = inject_backdoor(&model.circuit, &spec).expect("inject");
    let (resolved, warnings) = resolve(&injected, &benign_config()).expect("resolve");
    assert!(warnings.is_empty(), "benign config has no calibration entries");
    let benign = Model::new(resolved, model.encoding, model.measurement).expect("model");

    let test = &MNIST2.1;
    let clean_preds = predict_all(model, &trained.params, test.features()).expect("predict");
    let benign_preds = predict_all(&benign, &trained.params, test.features()).expect("predict");
    let mismatches = clean_preds
        .iter()
        .zip(&benign_preds)
        .filter(|(c, b)| c.argmax() != b.argmax())
        .count();

    let pass = mismatches == 0;
    report(2, "benign-config prediction identity", pass);
    assert!(pass, "{mismatches} of {} argmax predictions differ", test.n_samples());
}

// ---------------------------------------------------------------------------
// 3. Full trigger with searched θ hits ASR = 1.0 exactly
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_full_trigger_asr() {
    let (model, trained) = &*CLEAN2;
    let test = &MNIST2.1;
    assert!(MNIST2.0.n_samples() >= 1000 && test.n_samples() >= 200);

    let (spec, target_prob) =
        search_theta(model, &trained.params, &[0, 1, 2, 3, 4, 5, 6, 7], 1, 64).expect("search");
    let triggered = triggered_model(model, &spec).expect("triggered");
    let asr = evaluate_asr(&triggered, &trained.params, test.features(), 1).expect("asr");

    let pass = asr == 1.0;
    report(3, "full-trigger ASR", pass);
    assert!(pass, "ASR {asr} (need exactly 1.0); searched target probability {target_prob:.4}");
}

// ---------------------------------------------------------------------------
// 4. The clean desk-scale model is accurate enough to be worth attacking
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_clean_accuracy_floor() {
    let (model, trained) = &*CLEAN2;
    let cda = evaluate_cda(model, &trained.params, &MNIST2.1).expect("cda");

    let pass = cda >= 0.90;
    report(4, "clean accuracy floor", pass);
    assert!(pass, "clean test accuracy {cda:.4} (floor 0.90)");
}

// ---------------------------------------------------------------------------
// 5. Partial triggers: ASR grows with the backdoored qubit count
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_partial_trigger_trend() {
    let (model, trained) = &*TRAINED4;
    let test = &MNIST4.1;

    // The attacker picks the class the fully masked circuit lands on.
    let full = BackdoorSpec::<f64>::pre_only((0..4).collect(), 0).expect("spec");
    let masked = triggered_model(model, &full).expect("masked");
    let target = forward(&masked, &trained.params, &vec![0.3; 4])
        .expect("forward")
        .argmax()
        .expect("classification");

    let mut asrs = Vec::new();
    for width in 1..=4 {
        let spec = BackdoorSpec::<f64>::pre_only((0..width).collect(), target).expect("spec");
        let triggered = triggered_model(model, &spec).expect("triggered");
        asrs.push(evaluate_asr(&triggered, &trained.params, test.features(), target).expect("asr"));
    }

    let non_decreasing = asrs.windows(2).all(|w| w[1] >= w[0]);
    let pass = non_decreasing && asrs[3] > asrs[0];
    report(5, "partial-trigger ASR trend", pass);
    assert!(pass, "ASR over nested qubit sets {{0}}..{{0,1,2,3}}: {asrs:?}");
}

// ---------------------------------------------------------------------------
// 6. The poisoning baseline costs accuracy and fades under retraining;
//    the config-file attack does neither
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_dpba_degradation() {
    let (model, clean) = &*CLEAN2;
    let (train, test) = &*MNIST2;
    let cfg = mnist2_train_config();
    let clean_cda = evaluate_cda(model, &clean.params, test).expect("cda");

    // Config-file attack: the benign-resolved circuit scores exactly the
    // clean accuracy.
    let spec = BackdoorSpec::full_uniform((0..8).collect(), 1.0, 1).expect("spec");
    let injected = inject_backdoor(&model.circuit, &spec).expect("inject");
    let (resolved, _) = resolve(&injected, &benign_config()).expect("resolve");
    let benign = Model::new(resolved, model.encoding, model.measurement).expect("model");
    let qtrojan_cda = evaluate_cda(&benign, &clean.params, test).expect("cda");

    // Poisoning baseline: train on the tampered set.
    let pspec = dpba_spec();
    let poisoned = poison_dataset(train, &pspec).expect("poison");
    let dpba = fit(model, &poisoned, &cfg).expect("fit");
    let dpba_cda = evaluate_cda(model, &dpba.params, test).expect("cda");

    // Victim retrains on clean data: DPBA's trigger washes out…
    let (dpba_before, dpba_after, _) =
        retrain_experiment(model, &dpba.params, train, test, &pspec, &retrain_config())
            .expect("retrain");

    // …while the config-file attack only needs a fresh θ search.
    let requalified = fit_from(
        model,
        clean.params.clone(),
        AdamState::new(model.n_params()),
        train,
        &retrain_config(),
    )
    .expect("retrain");
    let (respec, _) =
        search_theta(model, &requalified.params, &[0, 1, 2, 3, 4, 5, 6, 7], 1, 64).expect("search");
    let retriggered = triggered_model(model, &respec).expect("triggered");
    let qtrojan_asr =
        evaluate_asr(&retriggered, &requalified.params, test.features(), 1).expect("asr");

    let cda_split = dpba_cda < clean_cda && qtrojan_cda == clean_cda;
    let dpba_fades = dpba_before - dpba_after >= 0.20;
    let qtrojan_persists = qtrojan_asr == 1.0;
    let pass = cda_split && dpba_fades && qtrojan_persists;
    report(6, "poisoning degrades, config attack does not", pass);
    assert!(
        pass,
        "clean CDA {clean_cda:.4}, DPBA CDA {dpba_cda:.4}, QTrojan CDA {qtrojan_cda:.4}; \
         DPBA ASR {dpba_before:.4} -> {dpba_after:.4} after retraining; \
         QTrojan ASR after retraining {qtrojan_asr:.4}"
    );
}

// ---------------------------------------------------------------------------
// 7. The injected sandwich fuses away: no depth overhead
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_depth_overhead_zero() {
    let tasks: Vec<(&str, Model<f64>)> = vec![
        ("mnist2", Model::classifier(8, 2, 2).expect("model")),
        ("mnist4", Model::classifier(4, 2, 4).expect("model")),
        ("sinreg", Model::regressor(4, 3).expect("model")),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, model) in &tasks {
        let n = model.circuit.n_qubits();
        let spec = BackdoorSpec::full_uniform((0..n).collect(), 1.0, 0).expect("spec");
        let injected = inject_backdoor(&model.circuit, &spec).expect("inject");
        let clean_depth = model.circuit.fuse_single_qubit_runs().expect("fuse").depth();
        let injected_depth = injected.fuse_single_qubit_runs().expect("fuse").depth();
        pass &= clean_depth == injected_depth;
        lines.push(format!("{name}: clean {clean_depth}, backdoored {injected_depth}"));
    }
    report(7, "zero depth overhead", pass);
    assert!(pass, "post-fusion depths — {}", lines.join("; "));
}

// ---------------------------------------------------------------------------
// 8. Parameter-shift gradients match finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_gradient_correctness() {
    let classifier = Model::<f64>::classifier(4, 2, 2).expect("model");
    let regressor = Model::<f64>::regressor(4, 2).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let mut max_dev = 0.0f64;

    for trial in 0..50 {
        let (model, target) = if trial % 2 == 0 {
            (&classifier, Target::Class(rng.gen_range(0..2)))
        } else {
            (&regressor, Target::Value(rng.gen_range(-1.0..1.0)))
        };
        let params = vqclab::vqc::ModelParams::new(
            (0..model.n_params()).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        );
        let n_features = model.encoding.n_features;
        let x: Vec<f64> = (0..n_features).map(|_| rng.gen_range(0.0..1.0)).collect();
        let shift = sample_grad(model, &params, &x, target, GradMode::ParamShift).expect("grad");
        let fd = sample_grad(model, &params, &x, target, GradMode::FiniteDiff).expect("grad");
        for (s, f) in shift.iter().zip(&fd) {
            max_dev = max_dev.max((s - f).abs());
        }
    }

    let pass = max_dev <= 1e-5;
    report(8, "parameter-shift vs finite differences", pass);
    assert!(pass, "max gradient deviation {max_dev:.3e} over 50 instances (limit 1e-5)");
}

// ---------------------------------------------------------------------------
// 9. Dense-encoded regressor: the trigger flattens the prediction curve
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_regression_flattening() {
    let (model, trained, train, test) = &*SINREG;
    let mse = evaluate_mse(model, &trained.params, test).expect("mse");

    // The attacker tunes the trigger angles on its own (training) windows;
    // the flattening is then judged on the held-out test windows.
    let (spec, _train_var) = search_theta_flat_coordinate(
        model,
        &trained.params,
        &[0, 1, 2, 3],
        train.features(),
        128,
        4,
    )
    .expect("search");
    let triggered = triggered_model(model, &spec).expect("triggered");

    let clean_var = variance(&prediction_values(model, trained, test.features()));
    let triggered_preds = predict_all(&triggered, &trained.params, test.features())
        .expect("predict")
        .iter()
        .map(|p| p.value().expect("regression"))
        .collect::<Vec<_>>();
    let triggered_var = variance(&triggered_preds);
    let ratio = triggered_var / clean_var;

    let pass = mse <= 0.05 && ratio <= 0.01;
    report(9, "triggered regression flattening", pass);
    assert!(
        pass,
        "test MSE {mse:.4} (limit 0.05); triggered/clean prediction variance \
         {triggered_var:.5}/{clean_var:.5} = {ratio:.5} (limit 0.01)"
    );
}

// ---------------------------------------------------------------------------
// 10. File formats: exact round trips and total error reporting
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_parser_format_suites() {
    // IDX round trip: parse → write is byte-identical, write → parse is
    // value-identical, for both tensor kinds.
    let mut idx_ok = true;
    for data in CORPUS.iter() {
        let bytes = write_idx(data);
        let reparsed = parse_idx(&bytes).expect("parse");
        idx_ok &= reparsed == *data && write_idx(&reparsed) == bytes;
    }

    // Golden emission for a single-qubit trigger.
    let golden_spec = BackdoorSpec::full_uniform(vec![0], FRAC_PI_4, 0).expect("spec");
    let golden = "[server]\n\
                  name = local-statevector\n\
                  pulse_dt_ns = 0.2222222222\n\
                  max_amp = 1.0000000000\n\
                  \n\
                  [calibration]\n\
                  post.q0.rx2 = 4.7123889804\n\
                  post.q0.ry = 0.7853981634\n\
                  pre.q0.rx = 1.5707963268\n";
    let golden_ok = emit_trigger_config(&golden_spec) == golden;

    // Emit → parse → emit is a fixed point for benign and trigger configs.
    let trigger_spec =
        BackdoorSpec::full(vec![1, 3], vec![0.1, 2.7], 0).expect("spec");
    let mut fixed_ok = true;
    for text in [emit_config(&benign_config()), emit_trigger_config(&trigger_spec)] {
        let reparsed = parse_config(&text).expect("parse");
        fixed_ok &= emit_config(&reparsed) == text;
    }

    // Every grammar error class fires on a minimal bad input.
    let cases: Vec<(&str, fn(&ConfigError) -> bool)> = vec![
        ("x = 1\n", |e| matches!(e, ConfigError::OutsideSection { .. })),
        ("[server\n", |e| matches!(e, ConfigError::MalformedSection { .. })),
        ("[pulses]\n", |e| matches!(e, ConfigError::UnknownSection { .. })),
        ("[server]\nname local\n", |e| matches!(e, ConfigError::MissingEquals { .. })),
        ("[server]\n= 3\n", |e| matches!(e, ConfigError::EmptyKey { .. })),
        ("[server]\nvoltage = 3\n", |e| matches!(e, ConfigError::UnknownServerKey { .. })),
        ("[server]\nmax_amp = 1\nmax_amp = 2\n", |e| {
            matches!(e, ConfigError::DuplicateKey { .. })
        }),
        ("[calibration]\npre.rx = 1\n", |e| matches!(e, ConfigError::MalformedCalKey { .. })),
        ("[calibration]\nmid.q0.rx = 1\n", |e| matches!(e, ConfigError::UnknownLayer { .. })),
        ("[calibration]\npost.q0.rz = 1\n", |e| matches!(e, ConfigError::UnknownSlot { .. })),
        ("[calibration]\npre.q0.ry = 1\n", |e| matches!(e, ConfigError::PreLayerSlot { .. })),
        ("[calibration]\npre.q0.rx = abc\n", |e| matches!(e, ConfigError::BadNumber { .. })),
        ("[calibration]\npre.q0.rx = nan\n", |e| matches!(e, ConfigError::NonFinite { .. })),
        ("[server]\npulse_dt_ns = 0\n", |e| matches!(e, ConfigError::NonPositive { .. })),
    ];
    let mut errors_ok = true;
    for (text, is_expected) in &cases {
        match parse_config(text) {
            Err(e) => errors_ok &= is_expected(&e),
            Ok(_) => errors_ok = false,
        }
    }
    // The one non-grammar class: binding onto a sandwich gate that cannot
    // carry a calibration angle.
    let mut bad = vqclab::qsim::Circuit::<f64>::new(2).expect("circuit");
    bad.push(
        vqclab::qsim::GateOp::cnot(0, 1).with_layer(vqclab::qsim::LayerTag::PreEncoding),
    )
    .expect("push");
    errors_ok &= matches!(
        resolve(&bad, &benign_config()),
        Err(ConfigError::UnmappableGate { .. })
    );

    let pass = idx_ok && golden_ok && fixed_ok && errors_ok;
    report(10, "parser and format suites", pass);
    assert!(
        pass,
        "idx round trip {idx_ok}, golden emission {golden_ok}, \
         emit fixed point {fixed_ok}, error classes {errors_ok}"
    );
}
