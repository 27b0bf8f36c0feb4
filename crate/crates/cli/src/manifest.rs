//! Experiment manifests: versioned TOML files describing a task, its data
//! and model shape, the training run, and optional attack blocks. Every
//! artifact a manifest-driven subcommand writes embeds the SHA-256 of the
//! manifest bytes, so results trace back to one exact description.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use vqclab::poison::PoisonSpec;
use vqclab::train::{GradMode, TrainConfig};

use crate::output::sha256_hex;

pub const MANIFEST_VERSION: u32 = 1;

/// Environment variable overriding `[paths] data_dir`.
pub const DATA_DIR_ENV: &str = "VQCLAB_DATA_DIR";

/// The three desk-scale tasks.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Two-digit image classification (classes 0 and 1).
    Mnist2,
    /// Four-digit image classification (classes 0–3).
    Mnist4,
    /// Sliding-window sin(t) regression.
    Sinreg,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Mnist2 => "mnist2",
            Task::Mnist4 => "mnist4",
            Task::Sinreg => "sinreg",
        }
    }

    /// Digit classes kept from the 10-class corpus; `None` for regression.
    pub fn classes(self) -> Option<&'static [usize]> {
        match self {
            Task::Mnist2 => Some(&[0, 1]),
            Task::Mnist4 => Some(&[0, 1, 2, 3]),
            Task::Sinreg => None,
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().map_or(0, <[usize]>::len)
    }

    pub fn is_classification(self) -> bool {
        self.classes().is_some()
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Manifest-side gradient mode name (kebab-case in TOML).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradModeName {
    #[default]
    ParamShift,
    FiniteDiff,
}

impl From<GradModeName> for GradMode {
    fn from(name: GradModeName) -> GradMode {
        match name {
            GradModeName::ParamShift => GradMode::ParamShift,
            GradModeName::FiniteDiff => GradMode::FiniteDiff,
        }
    }
}

/// Manifest-side trigger mode name (kebab-case in TOML and on flags).
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerModeName {
    /// Pre-encoding RX plus post-encoding RX/RY sandwich.
    #[default]
    Full,
    /// Pre-encoding RX only.
    PreOnly,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub task: Task,
    /// Master seed: parameter initialization and batch shuffling.
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub backdoor: Option<BackdoorSection>,
    pub poison: Option<PoisonSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Prepared-cache override; defaults to `<data_dir>/<task>.cache.json`.
    pub cache: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { data_dir: default_data_dir(), out_dir: default_out_dir(), cache: None }
    }
}

impl Paths {
    /// Data directory, honoring the `VQCLAB_DATA_DIR` override.
    pub fn data_dir(&self) -> PathBuf {
        resolve_data_dir(None, &self.data_dir)
    }
}

/// Precedence for the data directory: explicit flag, then the
/// `VQCLAB_DATA_DIR` environment variable, then the configured default.
pub fn resolve_data_dir(flag: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => configured.to_path_buf(),
    }
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Classification: PCA components kept (defaults to `model.n_qubits`).
    pub n_components: Option<usize>,
    /// Regression: window count (default 320).
    pub n_windows: Option<usize>,
    /// Regression: window length (defaults to `2 * model.n_qubits`, the
    /// dense-encoding feature width).
    pub window_len: Option<usize>,
    /// Regression: sin(t) grid step (default 0.3).
    pub step: Option<f64>,
    /// Regression: windows kept for training (default 4/5 of the total).
    pub train_windows: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_qubits: usize,
    pub n_blocks: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub grad_mode: GradModeName,
}

fn default_weight_decay() -> f64 {
    1e-4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackdoorSection {
    /// Qubits carrying the gate sandwich.
    pub qubits: Vec<usize>,
    #[serde(default)]
    pub mode: TriggerModeName,
    /// Uniform θ for the post-encoding RY; omitted means "search".
    pub theta: Option<f64>,
    pub target_class: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

fn default_grid_size() -> usize {
    64
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoisonSection {
    pub trigger_qubits: Vec<usize>,
    /// Feature value stamped on the trigger components (default π/2).
    #[serde(default = "default_trigger_value")]
    pub trigger_value: f64,
    pub poison_rate: f64,
    pub target_class: usize,
    pub poison_seed: u64,
}

fn default_trigger_value() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl PoisonSection {
    pub fn to_spec(&self) -> PoisonSpec<f64> {
        PoisonSpec {
            trigger_qubits: self.trigger_qubits.clone(),
            trigger_value: self.trigger_value,
            poison_rate: self.poison_rate,
            target_class: self.target_class,
            seed: self.poison_seed,
        }
    }
}

impl Manifest {
    pub fn train_config(&self) -> TrainConfig<f64> {
        let base = if self.task.is_classification() {
            TrainConfig::classification(self.seed)
        } else {
            TrainConfig::regression(self.seed)
        };
        TrainConfig {
            learning_rate: self.train.learning_rate,
            weight_decay: self.train.weight_decay,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            grad_mode: self.train.grad_mode.into(),
            ..base
        }
    }

    pub fn n_components(&self) -> usize {
        self.data.n_components.unwrap_or(self.model.n_qubits)
    }

    /// Regression shape: (n_windows, window_len, step, train_windows).
    pub fn sinreg_shape(&self) -> Result<(usize, usize, f64, usize)> {
        let n_windows = self.data.n_windows.unwrap_or(320);
        let window_len = self.data.window_len.unwrap_or(2 * self.model.n_qubits);
        let step = self.data.step.unwrap_or(0.3);
        let train_windows = self.data.train_windows.unwrap_or(n_windows * 4 / 5);
        if window_len != 2 * self.model.n_qubits {
            bail!(
                "field `data.window_len`: dense encoding on {} qubits needs {} features, got {}",
                self.model.n_qubits,
                2 * self.model.n_qubits,
                window_len
            );
        }
        if !(1..n_windows).contains(&train_windows) {
            bail!(
                "field `data.train_windows`: {train_windows} outside 1..{n_windows}"
            );
        }
        Ok((n_windows, window_len, step, train_windows))
    }

    pub fn cache_path(&self) -> PathBuf {
        match &self.paths.cache {
            Some(path) => path.clone(),
            None => self.paths.data_dir().join(format!("{}.cache.json", self.task)),
        }
    }

    pub fn checkpoint_path(&self, poisoned: bool) -> PathBuf {
        let tag = if poisoned { ".poisoned" } else { "" };
        self.paths.out_dir.join(format!("{}{tag}.ckpt.json", self.task))
    }

    pub fn losses_path(&self, poisoned: bool) -> PathBuf {
        let tag = if poisoned { ".poisoned" } else { "" };
        self.paths.out_dir.join(format!("{}{tag}.losses.csv", self.task))
    }

    pub fn out_path(&self, file_name: &str) -> PathBuf {
        self.paths.out_dir.join(file_name)
    }
}

/// A parsed manifest plus the hash of the file it came from.
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub sha256: String,
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let bytes =
        fs::read(path).with_context(|| format!("reading manifest {}", path.display()))?;
    let sha256 = sha256_hex(&bytes);
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("manifest {} is not UTF-8", path.display()))?;
    let manifest: Manifest = toml::from_str(text)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    if manifest.version != MANIFEST_VERSION {
        bail!(
            "manifest field `version`: expected {MANIFEST_VERSION}, got {}",
            manifest.version
        );
    }
    Ok(LoadedManifest { manifest, sha256 })
}
