//! Subcommand implementations. Every command writes its artifacts with an
//! embedded provenance triple (artifact version, seed, manifest hash) and
//! prints a short summary; numeric output is fixed at 6 significant digits
//! so identical reruns diff clean.

use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use vqclab::backdoor::{
    evaluate_asr, inject_backdoor, search_theta, triggered_model, BackdoorSpec,
};
use vqclab::data::{
    filter_classes, gen_sin_sequences, parse_idx, prepare_classification, write_corpus,
    DataCache, Dataset, Labels, SynthSpec, CORPUS_FILES,
};
use vqclab::poison::{poison_dataset, retrain_experiment, triggered_asr};
use vqclab::qsim::Circuit;
use vqclab::train::{
    evaluate_cda, evaluate_mse, fit, fit_from, predict_all, AdamState, Checkpoint, TrainConfig,
};
use vqclab::trigcfg::{benign_config, emit_config, emit_trigger_config, parse_config, resolve};
use vqclab::vqc::Model;
use vqclab::Model64;

use crate::manifest::{
    load_manifest, resolve_data_dir, LoadedManifest, Manifest, Task, TriggerModeName,
};
use crate::output::{
    flags_digest, round6, sha256_hex, sig6, write_json, write_text, Provenance, ARTIFACT_VERSION,
};

// ---------------------------------------------------------------------------
// Stamped on-disk artifacts
// ---------------------------------------------------------------------------

/// Prepared-data cache as written by `prepare-data`.
#[derive(Serialize, Deserialize)]
struct StampedCache {
    provenance: Provenance,
    cache: DataCache<f64>,
}

/// Training snapshot as written by `train`.
#[derive(Serialize, Deserialize)]
struct StampedCheckpoint {
    provenance: Provenance,
    checkpoint: Checkpoint<f64>,
}

fn load_stamped_cache(path: &Path) -> Result<StampedCache> {
    let bytes = fs::read(path).with_context(|| {
        format!("reading data cache {} (run `vqclab prepare-data` first)", path.display())
    })?;
    let stamped: StampedCache = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing data cache {}", path.display()))?;
    ensure!(
        stamped.provenance.artifact_version == ARTIFACT_VERSION,
        "data cache {}: artifact_version {} (expected {ARTIFACT_VERSION})",
        path.display(),
        stamped.provenance.artifact_version
    );
    Ok(stamped)
}

fn load_stamped_checkpoint(path: &Path, model: &Model64) -> Result<StampedCheckpoint> {
    let bytes = fs::read(path).with_context(|| {
        format!("reading checkpoint {} (run `vqclab train` first)", path.display())
    })?;
    let stamped: StampedCheckpoint = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing checkpoint {}", path.display()))?;
    ensure!(
        stamped.provenance.artifact_version == ARTIFACT_VERSION,
        "checkpoint {}: artifact_version {} (expected {ARTIFACT_VERSION})",
        path.display(),
        stamped.provenance.artifact_version
    );
    stamped.checkpoint.check_model(model).with_context(|| {
        format!("checkpoint {} does not match manifest field `model`", path.display())
    })?;
    Ok(stamped)
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn build_model(m: &Manifest) -> Result<Model64> {
    let model = if m.task.is_classification() {
        Model::classifier(m.model.n_qubits, m.model.n_blocks, m.task.n_classes())
    } else {
        Model::regressor(m.model.n_qubits, m.model.n_blocks)
    };
    model.context("manifest field `model`")
}

/// Train/test splits for the manifest's task: classification tasks read the
/// prepared cache, the regression task generates its windows on the fly.
fn task_datasets(m: &Manifest) -> Result<(Dataset<f64>, Dataset<f64>)> {
    if m.task.is_classification() {
        let stamped = load_stamped_cache(&m.cache_path())?;
        Ok((stamped.cache.train, stamped.cache.test))
    } else {
        let (n_windows, window_len, step, train_windows) = m.sinreg_shape()?;
        let all = gen_sin_sequences::<f64>(n_windows, window_len, step)
            .context("manifest field `data`")?;
        let (train, test) =
            all.split_at(train_windows).context("manifest field `data.train_windows`")?;
        Ok((train, test))
    }
}

fn check_width(model: &Model64, dataset: &Dataset<f64>) -> Result<()> {
    ensure!(
        dataset.n_features() == model.encoding.n_features,
        "data has {} features but manifest field `model.n_qubits` implies {}",
        dataset.n_features(),
        model.encoding.n_features
    );
    Ok(())
}

fn placement_spec(
    qubits: Vec<usize>,
    mode: TriggerModeName,
    theta: f64,
    target_class: usize,
) -> Result<BackdoorSpec<f64>> {
    let spec = match mode {
        TriggerModeName::Full => BackdoorSpec::full_uniform(qubits, theta, target_class),
        TriggerModeName::PreOnly => BackdoorSpec::pre_only(qubits, target_class),
    };
    spec.context("field `backdoor.qubits`")
}

fn manifest_provenance(lm: &LoadedManifest) -> Provenance {
    Provenance::new(lm.manifest.seed, lm.sha256.clone())
}

fn require_classification(m: &Manifest, what: &str) -> Result<()> {
    ensure!(
        m.task.is_classification(),
        "manifest field `task`: {what} requires a classification task, got `{}`",
        m.task
    );
    Ok(())
}

fn confusion_matrix(
    model: &Model64,
    params: &vqclab::vqc::ModelParams<f64>,
    test: &Dataset<f64>,
) -> Result<Vec<Vec<usize>>> {
    let n = model.measurement.n_classes;
    let predictions = predict_all(model, params, test.features())?;
    let Labels::Classes(labels) = test.labels() else {
        bail!("confusion matrix needs class labels");
    };
    let mut matrix = vec![vec![0usize; n]; n];
    for (pred, &label) in predictions.iter().zip(labels) {
        let predicted = pred.argmax().context("classification prediction")?;
        matrix[label][predicted] += 1;
    }
    Ok(matrix)
}

// ---------------------------------------------------------------------------
// synth-data
// ---------------------------------------------------------------------------

/// Generate the synthetic digit corpus as IDX files.
#[derive(Args, Debug)]
pub struct SynthDataArgs {
    /// Directory receiving the four IDX files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 6000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Fraction of heavily distorted samples, in [0, 1).
    #[arg(long, default_value_t = 0.12)]
    pub ambiguity: f64,
}

#[derive(Serialize)]
struct CorpusReport {
    provenance: Provenance,
    n_train: usize,
    n_test: usize,
    ambiguity: f64,
    files: Vec<CorpusFile>,
}

#[derive(Serialize)]
struct CorpusFile {
    name: String,
    sha256: String,
}

pub fn synth_data(args: &SynthDataArgs) -> Result<()> {
    let spec = SynthSpec {
        n_train: args.n_train,
        n_test: args.n_test,
        seed: args.seed,
        ambiguity: args.ambiguity,
    };
    write_corpus(&args.out, &spec)
        .with_context(|| format!("writing corpus to {}", args.out.display()))?;

    let canonical = format!(
        "synth-data n_train={} n_test={} seed={} ambiguity={}",
        args.n_train, args.n_test, args.seed, args.ambiguity
    );
    let provenance = Provenance::new(args.seed, flags_digest(&canonical));
    // The IDX tensors themselves are a fixed binary format, so their
    // provenance lives in this sidecar instead.
    let files = CORPUS_FILES
        .iter()
        .map(|name| {
            let bytes = fs::read(args.out.join(name))?;
            Ok(CorpusFile { name: (*name).into(), sha256: sha256_hex(&bytes) })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = CorpusReport {
        provenance,
        n_train: args.n_train,
        n_test: args.n_test,
        ambiguity: args.ambiguity,
        files,
    };
    write_json(&args.out.join("corpus.json"), &report)?;

    println!(
        "wrote {} train + {} test images to {} ({} files + corpus.json)",
        args.n_train,
        args.n_test,
        args.out.display(),
        CORPUS_FILES.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// prepare-data
// ---------------------------------------------------------------------------

/// IDX corpus → PCA → scaled, class-filtered cache file.
#[derive(Args, Debug)]
pub struct PrepareDataArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// PCA components to keep (one per model qubit). Defaults to the
    /// manifest's `data.n_components` when --manifest is given.
    #[arg(long)]
    pub k: Option<usize>,
    /// Cache file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Directory holding the IDX corpus (default `data`; the
    /// `VQCLAB_DATA_DIR` environment variable overrides the default).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Record this manifest's seed and hash instead of the flag digest.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

pub fn prepare_data(args: &PrepareDataArgs) -> Result<()> {
    let Some(classes) = args.task.classes() else {
        bail!(
            "field `task`: `{}` generates its windows at train time; \
             prepare-data handles classification tasks only",
            args.task
        );
    };
    let dir = resolve_data_dir(args.data_dir.as_deref(), Path::new("data"));
    let loaded = args.manifest.as_deref().map(load_manifest).transpose()?;
    let k = match (args.k, &loaded) {
        (Some(k), _) => k,
        (None, Some(lm)) => lm.manifest.n_components(),
        (None, None) => bail!("flag `--k` is required without --manifest"),
    };

    let mut parts = Vec::with_capacity(CORPUS_FILES.len());
    for name in CORPUS_FILES {
        let path = dir.join(name);
        let bytes = fs::read(&path).with_context(|| {
            format!("reading {} (run `vqclab synth-data` first)", path.display())
        })?;
        parts.push(parse_idx(&bytes).with_context(|| format!("parsing {}", path.display()))?);
    }
    let (train, test, pca) =
        prepare_classification::<f64>(&parts[0], &parts[1], &parts[2], &parts[3], k)
            .context("flag `--k`")?;
    let train = filter_classes(&train, classes).context("field `task` class filter")?;
    let test = filter_classes(&test, classes).context("field `task` class filter")?;

    let provenance = match &loaded {
        Some(lm) => manifest_provenance(lm),
        None => {
            let canonical =
                format!("prepare-data task={} k={k} data_dir={}", args.task, dir.display());
            Provenance::new(0, flags_digest(&canonical))
        }
    };
    let summary = format!(
        "prepared {}: train {} × {}, test {} ({k} components) -> {}",
        args.task,
        train.n_samples(),
        train.n_features(),
        test.n_samples(),
        args.out.display()
    );
    write_json(&args.out, &StampedCache { provenance, cache: DataCache::new(pca, train, test) })?;
    println!("{summary}");
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Train the manifest's model; writes a checkpoint and a per-epoch loss CSV.
#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Poison the training split first (requires the `[poison]` section).
    #[arg(long)]
    pub poison: bool,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let lm = load_manifest(&args.manifest)?;
    let m = &lm.manifest;
    let model = build_model(m)?;
    let (mut train_ds, test_ds) = task_datasets(m)?;
    check_width(&model, &train_ds)?;

    if args.poison {
        require_classification(m, "train --poison")?;
        let Some(poison) = &m.poison else {
            bail!("manifest field `poison` is required for train --poison");
        };
        train_ds = poison_dataset(&train_ds, &poison.to_spec())
            .context("manifest field `poison`")?;
    }

    let cfg = m.train_config();
    let report = fit(&model, &train_ds, &cfg).context("training")?;
    let provenance = manifest_provenance(&lm);

    let ckpt_path = m.checkpoint_path(args.poison);
    write_json(
        &ckpt_path,
        &StampedCheckpoint {
            provenance: provenance.clone(),
            checkpoint: Checkpoint::new(&model, &report, cfg),
        },
    )?;

    let mut csv = provenance.header();
    csv.push_str("epoch,loss\n");
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", epoch + 1, sig6(*loss)));
    }
    let losses_path = m.losses_path(args.poison);
    write_text(&losses_path, &csv)?;

    if m.task.is_classification() {
        let cda = evaluate_cda(&model, &report.params, &test_ds)?;
        println!("test accuracy (clean data): {}", sig6(cda));
    } else {
        let mse = evaluate_mse(&model, &report.params, &test_ds)?;
        println!("test mse: {}", sig6(mse));
    }
    println!("checkpoint: {}", ckpt_path.display());
    println!("losses: {}", losses_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

/// Write a description of the backdoored task circuit.
#[derive(Args, Debug)]
pub struct InjectArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub mode: TriggerModeName,
    /// Qubits carrying the sandwich, comma-separated (e.g. `0,1,2`).
    #[arg(long, value_delimiter = ',', required = true)]
    pub qubits: Vec<usize>,
    /// Uniform post-encoding RY angle (placement only; the served config
    /// decides the resolved angles). Default: manifest θ or π/4.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn circuit_table(circuit: &Circuit<f64>) -> String {
    let mut table =
        String::from("idx  kind     qubits  params                           layer          trainable\n");
    for (index, op) in circuit.ops().iter().enumerate() {
        let qubits =
            op.qubits.iter().map(|q| format!("q{q}")).collect::<Vec<_>>().join(",");
        let params = op.params.iter().map(|&p| sig6(p)).collect::<Vec<_>>().join(" ");
        table.push_str(&format!(
            "{index:>3}  {:<8} {qubits:<7} {params:<32} {:<14} {}\n",
            op.kind.name(),
            op.layer.name(),
            op.trainable
        ));
    }
    table
}

pub fn inject(args: &InjectArgs) -> Result<()> {
    let lm = load_manifest(&args.manifest)?;
    let m = &lm.manifest;
    let model = build_model(m)?;
    let manifest_theta = m.backdoor.as_ref().and_then(|b| b.theta);
    let target = m.backdoor.as_ref().map_or(0, |b| b.target_class);
    let theta = args.theta.or(manifest_theta).unwrap_or(FRAC_PI_4);
    let spec = placement_spec(args.qubits.clone(), args.mode, theta, target)?;

    let injected = inject_backdoor(&model.circuit, &spec).context("flag `--qubits`")?;
    let fused_clean = model.circuit.fuse_single_qubit_runs()?;
    let fused_injected = injected.fuse_single_qubit_runs()?;

    let mut text = manifest_provenance(&lm).header();
    text.push_str(&format!(
        "# task = {}\n# clean: {} ops, depth {} (fused: {} ops, depth {})\n\
         # backdoored: {} ops, depth {} (fused: {} ops, depth {})\n\
         # structure_hash = {}\n",
        m.task,
        model.circuit.len(),
        model.circuit.depth(),
        fused_clean.len(),
        fused_clean.depth(),
        injected.len(),
        injected.depth(),
        fused_injected.len(),
        fused_injected.depth(),
        injected.structure_hash()
    ));
    text.push_str(&circuit_table(&injected));

    let out = args.out.clone().unwrap_or_else(|| m.out_path(&format!("{}.injected.txt", m.task)));
    write_text(&out, &text)?;
    println!(
        "injected {} sandwich on {} qubit(s); post-fusion depth {} -> {}",
        match args.mode {
            TriggerModeName::Full => "full",
            TriggerModeName::PreOnly => "pre-only",
        },
        args.qubits.len(),
        fused_clean.depth(),
        fused_injected.depth()
    );
    println!("circuit description: {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-config
// ---------------------------------------------------------------------------

/// Emit a server configuration file (benign or trigger-carrying).
#[derive(Args, Debug)]
pub struct GenConfigArgs {
    /// Emit the benign configuration (all calibration angles zero).
    #[arg(long, conflicts_with = "trigger")]
    pub benign: bool,
    /// Emit a trigger configuration for the given qubits.
    #[arg(long)]
    pub trigger: bool,
    /// Uniform post-encoding RY angle θ (default: manifest θ or π/4).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Qubits carrying the sandwich, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub qubits: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = TriggerModeName::Full)]
    pub mode: TriggerModeName,
    /// Post-encoding RX angle override (default 3π/2), used by the
    /// regression flattening trigger.
    #[arg(long, value_name = "ANGLE")]
    pub post_rx: Option<f64>,
    /// Take qubits/θ/target defaults from this manifest's `[backdoor]`.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

pub fn gen_config(args: &GenConfigArgs) -> Result<()> {
    if !args.benign && !args.trigger {
        bail!("pass --benign or --trigger");
    }
    let loaded = args.manifest.as_deref().map(load_manifest).transpose()?;
    let provenance = match &loaded {
        Some(lm) => manifest_provenance(lm),
        None => {
            let canonical = format!(
                "gen-config benign={} trigger={} theta={:?} qubits={:?} mode={:?} post_rx={:?}",
                args.benign, args.trigger, args.theta, args.qubits, args.mode, args.post_rx
            );
            Provenance::new(0, flags_digest(&canonical))
        }
    };

    let body = if args.benign {
        emit_config(&benign_config())
    } else {
        let section = loaded.as_ref().and_then(|lm| lm.manifest.backdoor.as_ref());
        let qubits = match (&args.qubits, section) {
            (Some(qubits), _) => qubits.clone(),
            (None, Some(b)) => b.qubits.clone(),
            (None, None) => bail!(
                "flag `--qubits` (or manifest field `backdoor.qubits`) is required with --trigger"
            ),
        };
        let theta = args
            .theta
            .or(section.and_then(|b| b.theta))
            .unwrap_or(FRAC_PI_4);
        let target = section.map_or(0, |b| b.target_class);
        let mut spec = placement_spec(qubits, args.mode, theta, target)?;
        if let Some(angle) = args.post_rx {
            spec = spec.with_post_rx_angle(angle);
        }
        emit_trigger_config(&spec)
    };

    let text = format!("{}{body}", provenance.header());
    write_text(&args.out, &text)?;
    println!(
        "wrote {} config to {}",
        if args.benign { "benign" } else { "trigger" },
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// attack-eval
// ---------------------------------------------------------------------------

/// Evaluate the backdoored model under a given server configuration.
#[derive(Args, Debug)]
pub struct AttackEvalArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Server configuration applied at circuit resolution.
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct AttackEvalReport {
    provenance: Provenance,
    task: String,
    target_class: usize,
    cda: f64,
    asr: f64,
    n_test: usize,
    /// `confusion[true_class][predicted_class]`.
    confusion: Vec<Vec<usize>>,
}

pub fn attack_eval(args: &AttackEvalArgs) -> Result<()> {
    let lm = load_manifest(&args.manifest)?;
    let m = &lm.manifest;

    // Validate the config before touching heavier artifacts.
    let config_text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading --config {}", args.config.display()))?;
    let config = parse_config(&config_text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;

    let model = build_model(m)?;
    let Some(backdoor) = &m.backdoor else {
        bail!("manifest field `backdoor` is required for attack-eval");
    };
    let spec = placement_spec(
        backdoor.qubits.clone(),
        backdoor.mode,
        backdoor.theta.unwrap_or(0.0),
        backdoor.target_class,
    )?;

    let (train_ds, test_ds) = task_datasets(m)?;
    check_width(&model, &test_ds)?;
    let stamped = load_stamped_checkpoint(&m.checkpoint_path(false), &model)?;
    let params = &stamped.checkpoint.params;

    let injected = inject_backdoor(&model.circuit, &spec).context("field `backdoor.qubits`")?;
    let (resolved, warnings) = resolve(&injected, &config)
        .with_context(|| format!("resolving config {}", args.config.display()))?;
    for warning in &warnings {
        eprintln!(
            "warning: unmatched calibration {} = {}",
            warning.key.canonical(),
            sig6(warning.angle)
        );
    }
    let backdoored = Model::new(resolved, model.encoding, model.measurement)
        .context("resolved circuit")?;

    let provenance = manifest_provenance(&lm);
    if m.task.is_classification() {
        let cda = evaluate_cda(&backdoored, params, &test_ds)?;
        let asr = evaluate_asr(&backdoored, params, test_ds.features(), backdoor.target_class)?;
        let confusion = confusion_matrix(&backdoored, params, &test_ds)?;
        let report = AttackEvalReport {
            provenance,
            task: m.task.to_string(),
            target_class: backdoor.target_class,
            cda: round6(cda),
            asr: round6(asr),
            n_test: test_ds.n_samples(),
            confusion: confusion.clone(),
        };
        let out = args
            .out
            .clone()
            .unwrap_or_else(|| m.out_path(&format!("{}.attack-eval.json", m.task)));
        write_json(&out, &report)?;

        println!("CDA: {}", sig6(cda));
        println!("ASR: {}", sig6(asr));
        println!("target class: {}", backdoor.target_class);
        for (label, row) in confusion.iter().enumerate() {
            let cells = row.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            println!("confusion[{label}]: {cells}");
        }
        println!("report: {}", out.display());
    } else {
        // Regression: emit the plottable prediction curve over the test
        // windows, clean model vs config-resolved model.
        let (_, window_len, step, train_windows) = m.sinreg_shape()?;
        let clean_preds = predict_all(&model, params, test_ds.features())?;
        let backdoored_preds = predict_all(&backdoored, params, test_ds.features())?;
        let truths = test_ds.targets()?;

        let mut csv = provenance.header();
        csv.push_str("t,clean_pred,backdoored_pred,true_sin\n");
        for (i, ((clean, bd), truth)) in
            clean_preds.iter().zip(&backdoored_preds).zip(truths).enumerate()
        {
            let t = (train_windows + i + window_len) as f64 * step;
            csv.push_str(&format!(
                "{},{},{},{}\n",
                sig6(t),
                sig6(clean.value().context("regression prediction")?),
                sig6(bd.value().context("regression prediction")?),
                sig6(*truth)
            ));
        }
        let out = args
            .out
            .clone()
            .unwrap_or_else(|| m.out_path(&format!("{}.fig.csv", m.task)));
        write_text(&out, &csv)?;

        let variance = |preds: &[vqclab::vqc::Prediction<f64>]| -> Result<f64> {
            let values: Vec<f64> =
                preds.iter().map(|p| p.value().context("regression prediction")).collect::<Result<_>>()?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64)
        };
        let clean_var = variance(&clean_preds)?;
        let backdoored_var = variance(&backdoored_preds)?;
        println!("clean prediction variance: {}", sig6(clean_var));
        println!("backdoored prediction variance: {}", sig6(backdoored_var));
        if clean_var > 0.0 {
            println!("variance ratio: {}", sig6(backdoored_var / clean_var));
        }
        println!("curve: {}", out.display());
    }
    drop(train_ds);
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

/// Clean vs data-poisoning vs circuit-level backdoor, one CSV row per
/// manifest (accuracy-table layout).
#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub manifests: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut combined = String::new();
    let mut first: Option<(u64, PathBuf)> = None;

    for path in &args.manifests {
        let lm = load_manifest(path)?;
        let m = &lm.manifest;
        require_classification(m, "compare")?;
        let Some(poison) = &m.poison else {
            bail!("manifest field `poison` is required for compare ({})", path.display());
        };
        let Some(backdoor) = &m.backdoor else {
            bail!("manifest field `backdoor` is required for compare ({})", path.display());
        };
        let model = build_model(m)?;
        let (train_ds, test_ds) = task_datasets(m)?;
        check_width(&model, &train_ds)?;
        let cfg = m.train_config();

        let clean = fit(&model, &train_ds, &cfg).context("training the clean model")?;
        let clean_acc = evaluate_cda(&model, &clean.params, &test_ds)?;

        let pspec = poison.to_spec();
        let poisoned_train =
            poison_dataset(&train_ds, &pspec).context("manifest field `poison`")?;
        let dpba = fit(&model, &poisoned_train, &cfg).context("training the poisoned model")?;
        let dpba_cda = evaluate_cda(&model, &dpba.params, &test_ds)?;
        let dpba_asr = triggered_asr(&model, &dpba.params, &test_ds, &pspec)?;

        let (qspec, _) = search_theta(
            &model,
            &clean.params,
            &backdoor.qubits,
            backdoor.target_class,
            backdoor.grid_size,
        )
        .context("manifest field `backdoor`")?;
        let triggered = triggered_model(&model, &qspec)?;
        let qt_asr =
            evaluate_asr(&triggered, &clean.params, test_ds.features(), backdoor.target_class)?;
        // Benign-config resolution of the injected circuit: the clean-data
        // accuracy of the backdoored deployment.
        let injected = inject_backdoor(&model.circuit, &qspec)?;
        let (benign, _) = resolve(&injected, &benign_config())?;
        let deployed = Model::new(benign, model.encoding, model.measurement)?;
        let qt_cda = evaluate_cda(&deployed, &clean.params, &test_ds)?;

        combined.push_str(&lm.sha256);
        combined.push('\n');
        if first.is_none() {
            first = Some((m.seed, m.paths.out_dir.clone()));
        }
        rows.push(format!(
            "{},{},{},{},{},{},{},{}",
            m.task,
            m.seed,
            lm.sha256,
            sig6(clean_acc),
            sig6(dpba_cda),
            sig6(dpba_asr),
            sig6(qt_cda),
            sig6(qt_asr)
        ));
    }

    let (seed, out_dir) = first.expect("at least one manifest");
    let provenance = Provenance::new(seed, sha256_hex(combined.as_bytes()));
    let mut csv = provenance.header();
    csv.push_str(
        "task,seed,manifest_sha256,clean_acc,dpba_cda,dpba_asr,qtrojan_cda,qtrojan_asr\n",
    );
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    let out = args.out.clone().unwrap_or_else(|| out_dir.join("compare.csv"));
    write_text(&out, &csv)?;
    print!("{csv}");
    println!("table: {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-partial
// ---------------------------------------------------------------------------

/// Pre-gate-only ASR as a function of trigger width.
#[derive(Args, Debug)]
pub struct SweepPartialArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Width range, inclusive (e.g. `1..4` sweeps 1, 2, 3, 4 qubits).
    #[arg(long, value_name = "A..B")]
    pub qubits: String,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_width_range(text: &str) -> Result<RangeInclusive<usize>> {
    let (start, end) = text
        .split_once("..")
        .with_context(|| format!("flag `--qubits`: expected a range like 1..4, got `{text}`"))?;
    let start: usize = start.trim().parse().context("flag `--qubits`: bad range start")?;
    let end = end.trim();
    let end: usize = end
        .strip_prefix('=')
        .unwrap_or(end)
        .trim()
        .parse()
        .context("flag `--qubits`: bad range end")?;
    ensure!(start >= 1 && end >= start, "flag `--qubits`: need 1 <= start <= end");
    Ok(start..=end)
}

pub fn sweep_partial(args: &SweepPartialArgs) -> Result<()> {
    let widths = parse_width_range(&args.qubits)?;
    let lm = load_manifest(&args.manifest)?;
    let m = &lm.manifest;
    require_classification(m, "sweep-partial")?;
    let Some(backdoor) = &m.backdoor else {
        bail!("manifest field `backdoor` is required for sweep-partial");
    };
    let model = build_model(m)?;
    let (_, test_ds) = task_datasets(m)?;
    check_width(&model, &test_ds)?;
    let stamped = load_stamped_checkpoint(&m.checkpoint_path(false), &model)?;

    let mut csv = manifest_provenance(&lm).header();
    csv.push_str("n_trigger_qubits,asr\n");
    for width in widths {
        ensure!(
            width <= m.model.n_qubits,
            "flag `--qubits`: width {width} exceeds `model.n_qubits` = {}",
            m.model.n_qubits
        );
        let spec = BackdoorSpec::pre_only((0..width).collect(), backdoor.target_class)?;
        let triggered = triggered_model(&model, &spec)?;
        let asr = evaluate_asr(
            &triggered,
            &stamped.checkpoint.params,
            test_ds.features(),
            backdoor.target_class,
        )?;
        csv.push_str(&format!("{width},{}\n", sig6(asr)));
    }

    let out = args.out.clone().unwrap_or_else(|| m.out_path("sweep-partial.csv"));
    write_text(&out, &csv)?;
    print!("{csv}");
    println!("table: {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// depth-report
// ---------------------------------------------------------------------------

/// Pre- and post-fusion depth of the clean vs backdoored circuit.
#[derive(Args, Debug)]
pub struct DepthReportArgs {
    #[arg(long, value_name = "FILE", conflicts_with = "circuit")]
    pub manifest: Option<PathBuf>,
    /// Use the named task's stock circuit instead of a manifest.
    #[arg(long, value_enum)]
    pub circuit: Option<Task>,
    /// Qubits carrying the sandwich (default: all).
    #[arg(long, value_delimiter = ',')]
    pub qubits: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = TriggerModeName::Full)]
    pub mode: TriggerModeName,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Stock desk-scale circuits for `--circuit`.
fn stock_model(task: Task) -> Result<Model64> {
    let model = match task {
        Task::Mnist2 => Model::classifier(8, 2, 2),
        Task::Mnist4 => Model::classifier(4, 2, 4),
        Task::Sinreg => Model::regressor(4, 3),
    };
    model.context("stock circuit")
}

pub fn depth_report(args: &DepthReportArgs) -> Result<()> {
    let (model, label, provenance) = match (&args.manifest, args.circuit) {
        (Some(path), None) => {
            let lm = load_manifest(path)?;
            let provenance = manifest_provenance(&lm);
            (build_model(&lm.manifest)?, lm.manifest.task.to_string(), provenance)
        }
        (None, Some(task)) => {
            let canonical = format!(
                "depth-report circuit={task} qubits={:?} mode={:?}",
                args.qubits, args.mode
            );
            (stock_model(task)?, task.to_string(), Provenance::new(0, flags_digest(&canonical)))
        }
        _ => bail!("pass exactly one of --manifest or --circuit"),
    };

    let n_qubits = model.circuit.n_qubits();
    let qubits = args.qubits.clone().unwrap_or_else(|| (0..n_qubits).collect());
    // Placement angles never affect depth.
    let spec = placement_spec(qubits, args.mode, FRAC_PI_4, 0)?;
    let injected = inject_backdoor(&model.circuit, &spec).context("flag `--qubits`")?;
    let fused_clean = model.circuit.fuse_single_qubit_runs()?;
    let fused_injected = injected.fuse_single_qubit_runs()?;

    let mut csv = provenance.header();
    csv.push_str(&format!("# task = {label}\n"));
    csv.push_str("circuit,raw_ops,raw_depth,fused_ops,fused_depth\n");
    csv.push_str(&format!(
        "clean,{},{},{},{}\n",
        model.circuit.len(),
        model.circuit.depth(),
        fused_clean.len(),
        fused_clean.depth()
    ));
    csv.push_str(&format!(
        "backdoored,{},{},{},{}\n",
        injected.len(),
        injected.depth(),
        fused_injected.len(),
        fused_injected.depth()
    ));
    print!("{csv}");
    println!(
        "post-fusion depth overhead: {}",
        fused_injected.depth() as i64 - fused_clean.depth() as i64
    );
    if let Some(out) = &args.out {
        write_text(out, &csv)?;
        println!("table: {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// retrain-eval
// ---------------------------------------------------------------------------

/// Backdoor persistence under clean retraining: the data-poisoning attack
/// fades, the configuration-file attack (with θ re-searched) does not.
#[derive(Args, Debug)]
pub struct RetrainEvalArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Clean retraining epochs.
    #[arg(long)]
    pub epochs: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn retrain_eval(args: &RetrainEvalArgs) -> Result<()> {
    ensure!(args.epochs >= 1, "flag `--epochs` must be >= 1");
    let lm = load_manifest(&args.manifest)?;
    let m = &lm.manifest;
    require_classification(m, "retrain-eval")?;
    let Some(poison) = &m.poison else {
        bail!("manifest field `poison` is required for retrain-eval");
    };
    let Some(backdoor) = &m.backdoor else {
        bail!("manifest field `backdoor` is required for retrain-eval");
    };
    let model = build_model(m)?;
    let (train_ds, test_ds) = task_datasets(m)?;
    check_width(&model, &train_ds)?;
    let cfg = m.train_config();
    // Fresh shuffle stream for the retraining phase.
    let retrain_cfg = TrainConfig { epochs: args.epochs, seed: m.seed + 1, ..cfg };

    // Data-poisoning lane: poisoned fit, then clean retraining.
    let pspec = poison.to_spec();
    let poisoned_train = poison_dataset(&train_ds, &pspec).context("manifest field `poison`")?;
    let poisoned = fit(&model, &poisoned_train, &cfg).context("training the poisoned model")?;
    let (dpba_before, dpba_after, _) = retrain_experiment(
        &model,
        &poisoned.params,
        &train_ds,
        &test_ds,
        &pspec,
        &retrain_cfg,
    )?;

    // Configuration-file lane: clean fit, θ search, clean retraining, θ
    // re-search against the retrained parameters.
    let clean = fit(&model, &train_ds, &cfg).context("training the clean model")?;
    let (spec_before, _) = search_theta(
        &model,
        &clean.params,
        &backdoor.qubits,
        backdoor.target_class,
        backdoor.grid_size,
    )?;
    let qt_before = evaluate_asr(
        &triggered_model(&model, &spec_before)?,
        &clean.params,
        test_ds.features(),
        backdoor.target_class,
    )?;
    let retrained = fit_from(
        &model,
        clean.params.clone(),
        AdamState::new(model.n_params()),
        &train_ds,
        &retrain_cfg,
    )?;
    let (spec_after, _) = search_theta(
        &model,
        &retrained.params,
        &backdoor.qubits,
        backdoor.target_class,
        backdoor.grid_size,
    )?;
    let qt_after = evaluate_asr(
        &triggered_model(&model, &spec_after)?,
        &retrained.params,
        test_ds.features(),
        backdoor.target_class,
    )?;

    let mut csv = manifest_provenance(&lm).header();
    csv.push_str(&format!("# retrain_epochs = {}\n", args.epochs));
    csv.push_str("attack,target_class,asr_before,asr_after\n");
    csv.push_str(&format!(
        "data-poisoning,{},{},{}\n",
        pspec.target_class,
        sig6(dpba_before),
        sig6(dpba_after)
    ));
    csv.push_str(&format!(
        "config-trigger,{},{},{}\n",
        backdoor.target_class,
        sig6(qt_before),
        sig6(qt_after)
    ));
    let out = args.out.clone().unwrap_or_else(|| m.out_path("retrain-eval.csv"));
    write_text(&out, &csv)?;
    print!("{csv}");
    println!("table: {}", out.display());
    Ok(())
}
