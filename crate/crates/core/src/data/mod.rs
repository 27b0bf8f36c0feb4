//! Dataset ingestion and preparation: IDX parsing, PCA down-sampling,
//! angle-range scaling, class filtering, sin-sequence regression data, and a
//! round-trip-stable preprocessed cache.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scalar::Real;

mod idx;
mod pca;
mod synth;

pub use idx::{parse_idx, write_idx, IdxData};
pub use pca::{pca_fit, pca_project, scale_features, PcaModel, COV_SUBSAMPLE};
pub use synth::{generate_corpus, write_corpus, SynthSpec, CORPUS_FILES, IMAGE_SIDE};

const CACHE_VERSION: u32 = 1;

/// Errors from parsing, fitting and dataset assembly.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("unrecognized IDX magic 0x{got:08x}")]
    BadMagic { got: u32 },

    #[error("IDX payload size mismatch: expected {expected} bytes, got {got}")]
    PayloadSize { expected: usize, got: usize },

    #[error("IDX dimensions overflow")]
    DimensionOverflow,

    #[error("label {value} out of range (0–9)")]
    LabelOutOfRange { value: u8 },

    #[error("expected an IDX image tensor")]
    ExpectedImages,

    #[error("expected an IDX label vector")]
    ExpectedLabels,

    #[error("dataset must be non-empty")]
    EmptyDataset,

    #[error("feature vectors must all have the same length")]
    FeatureLengthMismatch,

    #[error("{features} feature vectors but {labels} labels")]
    LabelCountMismatch { features: usize, labels: usize },

    #[error("cannot keep {k} components of {d}-dimensional data")]
    TooManyComponents { k: usize, d: usize },

    #[error("{n} samples cannot support {k} components")]
    TooFewSamples { n: usize, k: usize },

    #[error("Jacobi eigendecomposition did not converge")]
    JacobiNoConvergence,

    #[error("class filter list must be non-empty")]
    EmptyClassList,

    #[error("class {class} listed twice in filter")]
    DuplicateClass { class: usize },

    #[error("no samples match the class filter")]
    EmptyFilterResult,

    #[error("operation needs class labels")]
    NeedClassLabels,

    #[error("operation needs real-valued targets")]
    NeedValueTargets,

    #[error("window length {window_len} too short (need ≥ 2)")]
    WindowTooShort { window_len: usize },

    #[error("grid step must be positive and finite")]
    BadStep,

    #[error("ambiguity {value} outside [0, 1)")]
    BadAmbiguity { value: f64 },

    #[error("split point {at} outside 1..{n}")]
    SplitOutOfRange { at: usize, n: usize },

    #[error("unsupported cache version {got} (expected {CACHE_VERSION})")]
    CacheVersion { got: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Class indices (classification) or real targets (regression).
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub enum Labels<T> {
    Classes(Vec<usize>),
    Values(Vec<T>),
}

impl<T> Labels<T> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Provenance carried with every dataset: a human-readable source plus a
/// hash covering the raw inputs and preprocessing choices.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub preprocessing_hash: String,
}

impl DatasetMeta {
    /// Extends the hash chain with one more preprocessing step.
    pub fn chained(&self, source: String, step: &str) -> DatasetMeta {
        let mut hasher = Sha256::new();
        hasher.update(self.preprocessing_hash.as_bytes());
        hasher.update(b"|");
        hasher.update(step.as_bytes());
        DatasetMeta { source, preprocessing_hash: hex_digest(hasher) }
    }
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Prepared samples: equal-length feature vectors with matching labels.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<T: Real> {
    features: Vec<Vec<T>>,
    labels: Labels<T>,
    meta: DatasetMeta,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        features: Vec<Vec<T>>,
        labels: Labels<T>,
        meta: DatasetMeta,
    ) -> Result<Self, DataError> {
        if features.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let width = features[0].len();
        if features.iter().any(|f| f.len() != width) {
            return Err(DataError::FeatureLengthMismatch);
        }
        if labels.len() != features.len() {
            return Err(DataError::LabelCountMismatch {
                features: features.len(),
                labels: labels.len(),
            });
        }
        Ok(Dataset { features, labels, meta })
    }

    pub fn n_samples(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn labels(&self) -> &Labels<T> {
        &self.labels
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn class_labels(&self) -> Result<&[usize], DataError> {
        match &self.labels {
            Labels::Classes(c) => Ok(c),
            Labels::Values(_) => Err(DataError::NeedClassLabels),
        }
    }

    pub fn targets(&self) -> Result<&[T], DataError> {
        match &self.labels {
            Labels::Values(v) => Ok(v),
            Labels::Classes(_) => Err(DataError::NeedValueTargets),
        }
    }

    /// Splits into (first `at` samples, rest), order preserved.
    pub fn split_at(&self, at: usize) -> Result<(Dataset<T>, Dataset<T>), DataError> {
        let n = self.n_samples();
        if at == 0 || at >= n {
            return Err(DataError::SplitOutOfRange { at, n });
        }
        let take = |range: std::ops::Range<usize>| -> Dataset<T> {
            let labels = match &self.labels {
                Labels::Classes(c) => Labels::Classes(c[range.clone()].to_vec()),
                Labels::Values(v) => Labels::Values(v[range.clone()].to_vec()),
            };
            Dataset {
                features: self.features[range].to_vec(),
                labels,
                meta: self.meta.clone(),
            }
        };
        Ok((take(0..at), take(at..n)))
    }
}

/// Keeps samples whose class is listed, relabeling to the position in
/// `classes` (so `[3, 8]` maps 3 → 0 and 8 → 1). Order is preserved.
pub fn filter_classes<T: Real>(
    dataset: &Dataset<T>,
    classes: &[usize],
) -> Result<Dataset<T>, DataError> {
    if classes.is_empty() {
        return Err(DataError::EmptyClassList);
    }
    for (i, &c) in classes.iter().enumerate() {
        if classes[..i].contains(&c) {
            return Err(DataError::DuplicateClass { class: c });
        }
    }
    let labels = dataset.class_labels()?;
    let mut features = Vec::new();
    let mut relabeled = Vec::new();
    for (x, &l) in dataset.features.iter().zip(labels) {
        if let Some(new) = classes.iter().position(|&c| c == l) {
            features.push(x.clone());
            relabeled.push(new);
        }
    }
    if features.is_empty() {
        return Err(DataError::EmptyFilterResult);
    }
    let meta = dataset.meta.chained(
        format!("{} | classes {classes:?}", dataset.meta.source),
        &format!("filter{classes:?}"),
    );
    Dataset::new(features, Labels::Classes(relabeled), meta)
}

/// Converts an IDX image tensor to real vectors in pixel units (0–255).
pub fn image_vectors<T: Real>(images: &IdxData) -> Result<Vec<Vec<T>>, DataError> {
    match images {
        IdxData::Images { n, .. } => Ok((0..*n)
            .map(|i| {
                images
                    .image(i)
                    .expect("index in range")
                    .iter()
                    .map(|&p| T::of(p as f64))
                    .collect()
            })
            .collect()),
        IdxData::Labels(_) => Err(DataError::ExpectedImages),
    }
}

fn label_vector(labels: &IdxData) -> Result<Vec<usize>, DataError> {
    match labels {
        IdxData::Labels(l) => Ok(l.iter().map(|&v| v as usize).collect()),
        IdxData::Images { .. } => Err(DataError::ExpectedLabels),
    }
}

/// Full classification pipeline: PCA is fitted on the training images, then
/// both splits are projected and min-max scaled into [0, π/2]. Filtering to
/// a class subset happens afterwards via [`filter_classes`]. The meta hash
/// covers the raw bytes of all four inputs and `k`.
pub fn prepare_classification<T: Real>(
    train_images: &IdxData,
    train_labels: &IdxData,
    test_images: &IdxData,
    test_labels: &IdxData,
    k: usize,
) -> Result<(Dataset<T>, Dataset<T>, PcaModel<T>), DataError> {
    let train_vecs = image_vectors::<T>(train_images)?;
    let train_lab = label_vector(train_labels)?;
    let test_vecs = image_vectors::<T>(test_images)?;
    let test_lab = label_vector(test_labels)?;
    if train_vecs.len() != train_lab.len() {
        return Err(DataError::LabelCountMismatch {
            features: train_vecs.len(),
            labels: train_lab.len(),
        });
    }
    if test_vecs.len() != test_lab.len() {
        return Err(DataError::LabelCountMismatch {
            features: test_vecs.len(),
            labels: test_lab.len(),
        });
    }

    let model = pca_fit(&train_vecs, k)?;

    let mut hasher = Sha256::new();
    hasher.update(b"pca-pipeline-v1");
    hasher.update((k as u64).to_be_bytes());
    for part in [train_images, train_labels, test_images, test_labels] {
        hasher.update(write_idx(part));
    }
    let hash = hex_digest(hasher);

    let prep = |vecs: &[Vec<T>], labels: Vec<usize>, split: &str| -> Result<Dataset<T>, DataError> {
        let features = vecs
            .iter()
            .map(|x| scale_features(&pca_project(&model, x)?, &model))
            .collect::<Result<Vec<_>, _>>()?;
        Dataset::new(
            features,
            Labels::Classes(labels),
            DatasetMeta {
                source: format!("idx images, pca k={k}, {split}"),
                preprocessing_hash: hash.clone(),
            },
        )
    };
    Ok((
        prep(&train_vecs, train_lab, "train")?,
        prep(&test_vecs, test_lab, "test")?,
        model,
    ))
}

/// Sliding windows over sin on a uniform grid: features are `window_len`
/// consecutive values shifted into [0, 1] (via (v+1)/2); the target is the
/// raw next value in [−1, 1]. Window `j` starts at grid index `j`.
pub fn gen_sin_sequences<T: Real>(
    n_windows: usize,
    window_len: usize,
    step: T,
) -> Result<Dataset<T>, DataError> {
    if window_len < 2 {
        return Err(DataError::WindowTooShort { window_len });
    }
    if n_windows == 0 {
        return Err(DataError::EmptyDataset);
    }
    if !(step > T::zero()) || !step.is_finite() {
        return Err(DataError::BadStep);
    }
    let grid: Vec<T> = (0..n_windows + window_len)
        .map(|i| (T::of(i as f64) * step).sin())
        .collect();
    let half = T::of(0.5);
    let features: Vec<Vec<T>> = (0..n_windows)
        .map(|j| {
            grid[j..j + window_len]
                .iter()
                .map(|&v| (v + T::one()) * half)
                .collect()
        })
        .collect();
    let targets: Vec<T> = (0..n_windows).map(|j| grid[j + window_len]).collect();

    let source = format!(
        "sin windows (n={n_windows}, len={window_len}, step={:.17e})",
        step.to_f64_lossy()
    );
    let mut hasher = Sha256::new();
    hasher.update(source.as_bytes());
    let meta = DatasetMeta { source, preprocessing_hash: hex_digest(hasher) };
    Dataset::new(features, Labels::Values(targets), meta)
}

/// Preprocessed-dataset cache: PCA model plus both splits, JSON on disk,
/// bitwise round-trip stable.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DataCache<T: Real> {
    version: u32,
    pub pca: PcaModel<T>,
    pub train: Dataset<T>,
    pub test: Dataset<T>,
}

impl<T: Real> DataCache<T> {
    pub fn new(pca: PcaModel<T>, train: Dataset<T>, test: Dataset<T>) -> Self {
        DataCache { version: CACHE_VERSION, pca, train, test }
    }
}

pub fn save_cache<T: Real>(path: &Path, cache: &DataCache<T>) -> Result<(), DataError> {
    Ok(fs::write(path, serde_json::to_vec(cache)?)?)
}

pub fn load_cache<T: Real>(path: &Path) -> Result<DataCache<T>, DataError> {
    let cache: DataCache<T> = serde_json::from_slice(&fs::read(path)?)?;
    if cache.version != CACHE_VERSION {
        return Err(DataError::CacheVersion { got: cache.version });
    }
    // Re-check invariants the serde derive cannot enforce.
    let rebuilt = Dataset::new(
        cache.train.features.clone(),
        cache.train.labels.clone(),
        cache.train.meta.clone(),
    )?;
    debug_assert_eq!(rebuilt, cache.train);
    Dataset::new(
        cache.test.features.clone(),
        cache.test.labels.clone(),
        cache.test.meta.clone(),
    )?;
    Ok(cache)
}
