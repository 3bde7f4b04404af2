//! Maximum mean discrepancy between embedding sets, and the four-domain
//! gap matrix built from it.

mod gap;
mod vldg;

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;
use crate::Style;

pub use gap::{gap_matrix, render_gap_matrix, GapMatrix};
pub use vldg::{decode_vldg, encode_vldg, read_embeddings, read_embeddings_dir, write_embeddings, VldgError, VLDG_MAGIC, VLDG_VERSION};

/// Pooled points beyond this are subsampled before taking the median.
pub const MEDIAN_SAMPLE_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Linguistic,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Linguistic => "linguistic",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row-aligned feature vectors of one domain in one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub domain: Style,
    pub modality: Modality,
    pub ids: Vec<String>,
    pub vectors: Array2<f32>,
}

impl EmbeddingSet {
    pub fn new(domain: Style, modality: Modality, ids: Vec<String>, vectors: Array2<f32>) -> Result<Self, MmdError> {
        if ids.len() != vectors.nrows() {
            return Err(MmdError::Shape(format!("{} ids for {} rows", ids.len(), vectors.nrows())));
        }
        if let Some(((r, c), _)) = vectors.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(MmdError::NonFinite { row: r, col: c });
        }
        Ok(Self {
            domain,
            modality,
            ids,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.vectors.mapv(f64::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Bandwidth {
    Fixed { sigma: f64 },
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kernel")]
pub enum KernelSpec {
    Linear,
    /// `exp(-‖a-b‖² / (2σ²))`.
    Rbf { bandwidth: Bandwidth },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Biased,
    Unbiased,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MmdError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("the unbiased estimator needs at least 2 rows per set, got {0}")]
    TooFewRows(usize),
    #[error("empty embedding set")]
    Empty,
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("median heuristic is undefined: all points are identical")]
    DegenerateBandwidth,
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{0}")]
    Shape(String),
    #[error("missing {modality} embeddings for {domain}")]
    Missing { domain: Style, modality: Modality },
    #[error("non-finite result")]
    NonFiniteResult,
}

/// Kernel with its bandwidth resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { sigma: f64 },
}

impl Kernel {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { sigma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// Gram matrix `k(a_i, b_j)`.
    pub fn gram(self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
        let dot = a.dot(&b.t());
        match self {
            Kernel::Linear => dot,
            Kernel::Rbf { sigma } => {
                let na: Array1<f64> = a.map_axis(Axis(1), |r| r.dot(&r));
                let nb: Array1<f64> = b.map_axis(Axis(1), |r| r.dot(&r));
                let scale = -1.0 / (2.0 * sigma * sigma);
                let mut g = dot;
                for ((i, j), v) in g.indexed_iter_mut() {
                    let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
                    *v = (d2 * scale).exp();
                }
                g
            }
        }
    }
}

fn row_cmp(a: &ndarray::ArrayView1<f64>, b: &ndarray::ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn matrix_cmp(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Ordering {
    a.nrows().cmp(&b.nrows()).then_with(|| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn euclid(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Median pairwise Euclidean distance over the pooled rows of `x` and `y`.
/// Rows are put in a canonical order first, so the result does not depend on
/// row order or on which set is which; pools above [`MEDIAN_SAMPLE_CAP`] are
/// subsampled with `seed`.
pub fn median_heuristic(x: ArrayView2<f64>, y: ArrayView2<f64>, seed: u64) -> Result<f64, MmdError> {
    if x.ncols() != y.ncols() {
        return Err(MmdError::DimMismatch(x.ncols(), y.ncols()));
    }
    let mut rows: Vec<_> = x.rows().into_iter().chain(y.rows()).collect();
    rows.sort_by(row_cmp);
    if rows.len() > MEDIAN_SAMPLE_CAP {
        SplitMix64::new(seed).shuffle(&mut rows);
        rows.truncate(MEDIAN_SAMPLE_CAP);
    }
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(euclid(rows[i], rows[j]));
        }
    }
    if d.is_empty() {
        return Err(MmdError::DegenerateBandwidth);
    }
    d.sort_by(f64::total_cmp);
    let k = d.len();
    let median = if k % 2 == 1 { d[k / 2] } else { (d[k / 2 - 1] + d[k / 2]) / 2.0 };
    if median > 0.0 && median.is_finite() {
        Ok(median)
    } else {
        Err(MmdError::DegenerateBandwidth)
    }
}

/// Resolves the bandwidth of `spec` for the pair `(x, y)`.
pub fn resolve_kernel(spec: KernelSpec, x: ArrayView2<f64>, y: ArrayView2<f64>, seed: u64) -> Result<Kernel, MmdError> {
    match spec {
        KernelSpec::Linear => Ok(Kernel::Linear),
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed { sigma },
        } => {
            if sigma > 0.0 && sigma.is_finite() {
                Ok(Kernel::Rbf { sigma })
            } else {
                Err(MmdError::Bandwidth(sigma))
            }
        }
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Median,
        } => Ok(Kernel::Rbf {
            sigma: median_heuristic(x, y, seed)?,
        }),
    }
}

fn within_mean(g: &Array2<f64>, estimator: Estimator) -> f64 {
    let n = g.nrows() as f64;
    match estimator {
        Estimator::Biased => g.sum() / (n * n),
        Estimator::Unbiased => (g.sum() - g.diag().sum()) / (n * (n - 1.0)),
    }
}

/// Squared MMD of two samples under a resolved kernel.
///
/// The pair is put in a canonical order before anything is summed, so
/// swapping the arguments gives a bit-identical result.
pub fn mmd2_with(x: ArrayView2<f64>, y: ArrayView2<f64>, kernel: Kernel, estimator: Estimator) -> Result<f64, MmdError> {
    if x.ncols() != y.ncols() {
        return Err(MmdError::DimMismatch(x.ncols(), y.ncols()));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(MmdError::Empty);
    }
    if estimator == Estimator::Unbiased && x.nrows().min(y.nrows()) < 2 {
        return Err(MmdError::TooFewRows(x.nrows().min(y.nrows())));
    }
    let swap = matrix_cmp(x, y) == Ordering::Greater;
    let (a, b) = (x.view(), y.view());
    let (x, y) = if swap { (b, a) } else { (a, b) };
    let kxx = within_mean(&kernel.gram(x, x), estimator);
    let kyy = within_mean(&kernel.gram(y, y), estimator);
    let kxy = kernel.gram(x, y).mean().expect("non-empty");
    let v = kxx + kyy - 2.0 * kxy;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MmdError::NonFiniteResult)
    }
}

/// Squared MMD with the bandwidth resolved from the data when asked.
pub fn mmd_squared(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    spec: KernelSpec,
    estimator: Estimator,
    seed: u64,
) -> Result<f64, MmdError> {
    if x.ncols() != y.ncols() {
        return Err(MmdError::DimMismatch(x.ncols(), y.ncols()));
    }
    let kernel = resolve_kernel(spec, x, y, seed)?;
    mmd2_with(x, y, kernel, estimator)
}

/// [`mmd_squared`] on two embedding sets.
pub fn mmd_sets(x: &EmbeddingSet, y: &EmbeddingSet, spec: KernelSpec, estimator: Estimator, seed: u64) -> Result<f64, MmdError> {
    mmd_squared(x.to_f64().view(), y.to_f64().view(), spec, estimator, seed)
}
