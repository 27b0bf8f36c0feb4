//! PCA for image down-sampling: mean-centered covariance, cyclic Jacobi
//! eigendecomposition, deterministic component signs, min-max scaling into
//! the encoder's angle range.

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::scalar::Real;

/// Covariance is estimated on at most this many images (evenly strided);
/// projections and scaling bounds still use the full training set.
pub const COV_SUBSAMPLE: usize = 10_000;

/// Jacobi convergence: off-diagonal Frobenius norm relative to the whole
/// matrix.
const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Fitted projection: `project(x) = components · (x − mean)`, then per-component
/// min-max scaling into [0, π/2] using bounds recorded from the training set.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PcaModel<T: Real> {
    mean: Vec<T>,
    /// k rows of length d, orthonormal, sign-normalized so each row's
    /// largest-magnitude entry is positive.
    components: Vec<Vec<T>>,
    feature_min: Vec<T>,
    feature_max: Vec<T>,
    explained_variance: Vec<T>,
}

impl<T: Real> PcaModel<T> {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<T>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[T] {
        &self.explained_variance
    }

    pub fn feature_bounds(&self) -> (&[T], &[T]) {
        (&self.feature_min, &self.feature_max)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors-as-rows), unsorted.
pub(crate) fn jacobi_eigh<T: Real>(
    matrix: &[Vec<T>],
) -> Result<(Vec<T>, Vec<Vec<T>>), DataError> {
    let d = matrix.len();
    let mut a: Vec<Vec<T>> = matrix.to_vec();
    let mut v: Vec<Vec<T>> = (0..d)
        .map(|i| {
            let mut row = vec![T::zero(); d];
            row[i] = T::one();
            row
        })
        .collect();

    let total_sq: T = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|&x| x * x)
        .sum();
    let threshold_sq = T::of(JACOBI_TOL * JACOBI_TOL) * total_sq.max(T::one());

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off_sq = T::zero();
        for p in 0..d {
            for q in (p + 1)..d {
                off_sq += T::of(2.0) * a[p][q] * a[p][q];
            }
        }
        if off_sq <= threshold_sq {
            // Columns of the accumulated rotation are the eigenvectors; we
            // built v as its transpose, so rows are already eigenvectors.
            let vals = (0..d).map(|i| a[i][i]).collect();
            return Ok((vals, v));
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                // Standard stable rotation: tan of the half-angle from the
                // diagonal difference.
                let diff = a[q][q] - a[p][p];
                let theta = diff / (T::of(2.0) * apq);
                let t = {
                    let sign = if theta < T::zero() { -T::one() } else { T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for i in 0..d {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..d {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for j in 0..d {
                    let vpj = v[p][j];
                    let vqj = v[q][j];
                    v[p][j] = c * vpj - s * vqj;
                    v[q][j] = s * vpj + c * vqj;
                }
            }
        }
    }
    Err(DataError::JacobiNoConvergence)
}

/// Fits PCA on training vectors (pixel units). Mean and covariance use an
/// evenly-strided subsample of at most [`COV_SUBSAMPLE`] vectors; the
/// per-component scaling bounds are taken over the full set.
pub fn pca_fit<T: Real>(train: &[Vec<T>], k: usize) -> Result<PcaModel<T>, DataError> {
    let n = train.len();
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let d = train[0].len();
    if train.iter().any(|x| x.len() != d) {
        return Err(DataError::FeatureLengthMismatch);
    }
    if k == 0 || k > d {
        return Err(DataError::TooManyComponents { k, d });
    }
    if n < k {
        return Err(DataError::TooFewSamples { n, k });
    }

    let stride = n.div_ceil(COV_SUBSAMPLE);
    let sample: Vec<&Vec<T>> = train.iter().step_by(stride).collect();
    let m = sample.len();
    let m_t = T::of(m as f64);

    let mut mean = vec![T::zero(); d];
    for x in &sample {
        for (mu, &xi) in mean.iter_mut().zip(x.iter()) {
            *mu += xi;
        }
    }
    for mu in &mut mean {
        *mu /= m_t;
    }

    // Covariance with the 1/m normalizer (population form): the trace
    // identity with explained variances then holds exactly.
    let mut cov = vec![vec![T::zero(); d]; d];
    let mut centered = vec![T::zero(); d];
    for x in &sample {
        for (ci, (&xi, &mu)) in centered.iter_mut().zip(x.iter().zip(&mean)) {
            *ci = xi - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == T::zero() {
                continue;
            }
            let row = &mut cov[i];
            for (j, &cj) in centered.iter().enumerate().skip(i) {
                row[j] += ci * cj;
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let val = cov[i][j] / m_t;
            cov[i][j] = val;
            if j != i {
                cov[j][i] = val;
            }
        }
    }

    let (vals, vecs) = jacobi_eigh(&cov)?;

    // Order by descending eigenvalue (stable: ties keep index order), then
    // fix each component's sign so its largest-magnitude entry is positive.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        vals[j].partial_cmp(&vals[i]).expect("finite eigenvalues")
    });
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let mut comp = vecs[idx].clone();
        let lead = comp
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.abs().partial_cmp(&b.abs()).expect("finite component")
            })
            .map(|(i, _)| i)
            .expect("non-empty component");
        if comp[lead] < T::zero() {
            for c in &mut comp {
                *c = -*c;
            }
        }
        components.push(comp);
        explained_variance.push(vals[idx]);
    }

    let mut model = PcaModel {
        mean,
        components,
        feature_min: vec![T::infinity(); k],
        feature_max: vec![T::neg_infinity(); k],
        explained_variance,
    };
    for x in train {
        let y = pca_project(&model, x)?;
        for (i, &yi) in y.iter().enumerate() {
            model.feature_min[i] = model.feature_min[i].min(yi);
            model.feature_max[i] = model.feature_max[i].max(yi);
        }
    }
    Ok(model)
}

/// `components · (x − mean)`.
pub fn pca_project<T: Real>(model: &PcaModel<T>, x: &[T]) -> Result<Vec<T>, DataError> {
    if x.len() != model.mean.len() {
        return Err(DataError::FeatureLengthMismatch);
    }
    Ok(model
        .components
        .iter()
        .map(|comp| {
            comp.iter()
                .zip(x.iter().zip(&model.mean))
                .map(|(&c, (&xi, &mu))| c * (xi - mu))
                .sum()
        })
        .collect())
}

/// Min-max scales a projected vector into [0, π/2] with the training-set
/// bounds; out-of-range values clip to the boundary. A component that was
/// constant over the training set maps to 0.
pub fn scale_features<T: Real>(y: &[T], model: &PcaModel<T>) -> Result<Vec<T>, DataError> {
    if y.len() != model.k() {
        return Err(DataError::FeatureLengthMismatch);
    }
    Ok(y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let lo = model.feature_min[i];
            let hi = model.feature_max[i];
            let span = hi - lo;
            if span <= T::zero() {
                return T::zero();
            }
            let t = ((yi - lo) / span).max(T::zero()).min(T::one());
            t * T::FRAC_PI_2()
        })
        .collect())
}
