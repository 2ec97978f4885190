//! Input and target preprocessing.
//!
//! Inputs go through four frozen stages: constant imputation (−1), quantile
//! binning (the bin id replaces the value), per-column standardization, and a
//! PCA rotation that removes linear correlations. Targets are standardized.
//! All statistics come from the training data passed to [`fit_pipeline`].

use nalgebra::{DMatrix, SymmetricEigen};

use crate::codec::{ByteReader, ByteWriter};
use crate::data::FeatureMatrix;
use crate::error::{ContainerError, Error, Result};
use crate::numerics::Matrix;

/// Value substituted for missing cells.
pub const FILL_VALUE: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Replace values by quantile-bin ids. When off, imputed raw values are
    /// standardized directly.
    pub quantize: bool,
    pub min_bins: usize,
    pub max_bins: usize,
    /// Forces a bin count (still bounded by the number of distinct values).
    pub fixed_bins: Option<usize>,
    /// Components with eigenvalue at most `pca_tolerance × largest` are dropped.
    pub pca_tolerance: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            quantize: true,
            min_bins: 16,
            max_bins: 128,
            fixed_bins: None,
            pca_tolerance: 1e-8,
        }
    }
}

impl PreprocessConfig {
    /// `min(distinct, max(min_bins, ⌊∛n⌋))`, capped at `max_bins`.
    pub fn bin_count(&self, n: usize, distinct: usize) -> usize {
        let target = match self.fixed_bins {
            Some(k) => k,
            None => self.min_bins.max((n as f64).cbrt().floor() as usize),
        };
        target.min(self.max_bins).min(distinct).max(1)
    }
}

/// Linear-interpolation sample quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn distinct_sorted(sorted: &[f64]) -> usize {
    let mut n = 0;
    let mut prev = None;
    for &v in sorted {
        if prev != Some(v) {
            n += 1;
            prev = Some(v);
        }
    }
    n
}

/// Interior edges at the `i/k` quantiles, duplicates merged.
fn quantile_edges(sorted: &[f64], k: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = (1..k).map(|i| quantile_sorted(sorted, i as f64 / k as f64)).collect();
    edges.dedup();
    edges
}

/// Bin id of `v`: the number of edges strictly below it. Bins are
/// right-closed, and values beyond the fitted range land in the extreme bins.
pub fn bin_id(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e < v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    feature_names: Vec<String>,
    quantize: bool,
    bin_edges: Vec<Vec<f64>>,
    feature_means: Vec<f64>,
    feature_scales: Vec<f64>,
    degenerate: Vec<bool>,
    pca_mean: Vec<f64>,
    /// Retained components as rows (components x features).
    pca_basis: Matrix,
    eigenvalues: Vec<f64>,
    target_mean: f64,
    target_scale: f64,
}

fn impute(v: f64) -> f64 {
    if v.is_nan() { FILL_VALUE } else { v }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits every preprocessing stage on training data.
pub fn fit_pipeline(x: &FeatureMatrix, y: &[f64], cfg: &PreprocessConfig) -> Result<FittedPipeline> {
    let (n, d) = (x.rows(), x.cols());
    if n == 0 || d == 0 {
        return Err(Error::contract("cannot fit a pipeline on an empty table"));
    }
    if y.len() != n {
        return Err(Error::shape("fit_pipeline", format!("{} targets for {n} rows", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("targets must be finite"));
    }

    let mut bin_edges = Vec::with_capacity(d);
    let mut means = Vec::with_capacity(d);
    let mut scales = Vec::with_capacity(d);
    let mut degenerate = Vec::with_capacity(d);
    let mut coded = vec![0.0; n * d];
    for c in 0..d {
        let column: Vec<f64> = x.column(c).into_iter().map(impute).collect();
        let edges = if cfg.quantize {
            let sorted = sorted_copy(&column);
            let k = cfg.bin_count(n, distinct_sorted(&sorted));
            quantile_edges(&sorted, k)
        } else {
            Vec::new()
        };
        let values: Vec<f64> = if cfg.quantize {
            column.iter().map(|&v| bin_id(&edges, v) as f64).collect()
        } else {
            column
        };
        let (mean, std) = mean_std(&values);
        let flat = !(std > 0.0) || std <= 1e-12 * mean.abs().max(1.0);
        let scale = if flat { 1.0 } else { std };
        for (r, v) in values.iter().enumerate() {
            coded[r * d + c] = (v - mean) / scale;
        }
        bin_edges.push(edges);
        means.push(mean);
        scales.push(scale);
        degenerate.push(flat);
    }
    let z = Matrix::from_raw(n, d, coded);
    let (pca_mean, pca_basis, eigenvalues) = fit_pca(&z, cfg.pca_tolerance);

    let (target_mean, target_std) = mean_std(y);
    let target_scale = if target_std > 0.0 { target_std } else { 1.0 };

    Ok(FittedPipeline {
        feature_names: x.names().to_vec(),
        quantize: cfg.quantize,
        bin_edges,
        feature_means: means,
        feature_scales: scales,
        degenerate,
        pca_mean,
        pca_basis,
        eigenvalues,
        target_mean,
        target_scale,
    })
}

fn fit_pca(z: &Matrix, tolerance: f64) -> (Vec<f64>, Matrix, Vec<f64>) {
    let (n, d) = z.shape();
    let mean: Vec<f64> = z.sum_rows().as_slice().iter().map(|s| s / n as f64).collect();
    let centered = Matrix::from_raw(
        n,
        d,
        z.as_slice()
            .iter()
            .enumerate()
            .map(|(i, v)| v - mean[i % d])
            .collect(),
    );
    let cov = centered.matmul_tn(&centered).expect("square").scale(1.0 / n as f64);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, cov.as_slice()));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let largest = eig.eigenvalues[order[0]];
    if !(largest > 0.0) {
        // Every column is constant: nothing to rotate.
        return (mean, Matrix::identity(d), vec![0.0; d]);
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > tolerance * largest)
        .collect();
    let mut basis = Vec::with_capacity(kept.len() * d);
    for &i in &kept {
        let v = eig.eigenvectors.column(i);
        // Deterministic sign: the largest-magnitude entry is positive.
        let pivot = (0..d).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.extend((0..d).map(|j| sign * v[j]));
    }
    let eigenvalues = kept.iter().map(|&i| eig.eigenvalues[i]).collect();
    (mean, Matrix::from_raw(kept.len(), d, basis), eigenvalues)
}

impl FittedPipeline {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn input_dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Width of the transformed feature matrix (retained PCA components).
    pub fn output_dim(&self) -> usize {
        self.pca_basis.rows()
    }

    pub fn bin_edges(&self) -> &[Vec<f64>] {
        &self.bin_edges
    }

    pub fn feature_means(&self) -> &[f64] {
        &self.feature_means
    }

    pub fn feature_scales(&self) -> &[f64] {
        &self.feature_scales
    }

    /// Columns whose binned values had zero variance (scale forced to 1).
    pub fn degenerate_columns(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn pca_basis(&self) -> &Matrix {
        &self.pca_basis
    }

    pub fn pca_mean(&self) -> &[f64] {
        &self.pca_mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.target_scale
    }

    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "transform_features",
                format!("{} columns, pipeline fitted on {}", x.cols(), self.input_dim()),
            ));
        }
        Ok(())
    }

    /// Imputed, binned, and standardized features (before the PCA rotation).
    pub fn standardize_features(&self, x: &FeatureMatrix) -> Result<Matrix> {
        self.check_width(x)?;
        let (n, d) = (x.rows(), x.cols());
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for (c, &raw) in x.row(r).iter().enumerate() {
                let v = impute(raw);
                let v = if self.quantize { bin_id(&self.bin_edges[c], v) as f64 } else { v };
                out.push((v - self.feature_means[c]) / self.feature_scales[c]);
            }
        }
        Ok(Matrix::from_raw(n, d, out))
    }

    /// Full feature transform: standardize, center, and project onto the
    /// retained principal axes.
    pub fn transform_features(&self, x: &FeatureMatrix) -> Result<Matrix> {
        let z = self.standardize_features(x)?;
        let d = z.cols();
        let centered = Matrix::from_raw(
            z.rows(),
            d,
            z.as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| v - self.pca_mean[i % d])
                .collect(),
        );
        centered.matmul_nt(&self.pca_basis)
    }

    pub fn transform_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .map(|v| (v - self.target_mean) / self.target_scale)
            .collect()
    }

    /// Maps a standardized `(μ, σ)` back to target units.
    pub fn inverse_target(&self, mu: f64, sigma: f64) -> (f64, f64) {
        (mu * self.target_scale + self.target_mean, sigma * self.target_scale)
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.usize(self.feature_names.len());
        for name in &self.feature_names {
            w.bytes(name.as_bytes());
        }
        w.u8(self.quantize as u8);
        for edges in &self.bin_edges {
            w.f64s(edges);
        }
        w.f64s(&self.feature_means);
        w.f64s(&self.feature_scales);
        for &flag in &self.degenerate {
            w.u8(flag as u8);
        }
        w.f64s(&self.pca_mean);
        w.matrix(&self.pca_basis);
        w.f64s(&self.eigenvalues);
        w.f64(self.target_mean);
        w.f64(self.target_scale);
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> std::result::Result<Self, ContainerError> {
        let malformed = |m: &str| ContainerError::Malformed(format!("pipeline: {m}"));
        let d = r.len_prefix(8)?;
        let mut feature_names = Vec::with_capacity(d);
        for _ in 0..d {
            let raw = r.bytes()?;
            feature_names.push(
                String::from_utf8(raw.to_vec()).map_err(|_| malformed("column name is not UTF-8"))?,
            );
        }
        let quantize = r.u8()? != 0;
        let bin_edges = (0..d).map(|_| r.f64s()).collect::<std::result::Result<Vec<_>, _>>()?;
        let feature_means = r.f64s()?;
        let feature_scales = r.f64s()?;
        let degenerate = (0..d)
            .map(|_| r.u8().map(|b| b != 0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let pca_mean = r.f64s()?;
        let pca_basis = r.matrix()?;
        let eigenvalues = r.f64s()?;
        let target_mean = r.f64()?;
        let target_scale = r.f64()?;
        if feature_means.len() != d
            || feature_scales.len() != d
            || pca_mean.len() != d
            || pca_basis.cols() != d
            || eigenvalues.len() != pca_basis.rows()
        {
            return Err(malformed("inconsistent dimensions"));
        }
        if feature_scales.iter().any(|s| !(*s > 0.0)) || !(target_scale > 0.0) {
            return Err(malformed("non-positive scale"));
        }
        if bin_edges.iter().any(|e| e.windows(2).any(|w| !(w[0] < w[1]))) {
            return Err(malformed("bin edges not strictly increasing"));
        }
        Ok(Self {
            feature_names,
            quantize,
            bin_edges,
            feature_means,
            feature_scales,
            degenerate,
            pca_mean,
            pca_basis,
            eigenvalues,
            target_mean,
            target_scale,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, ContainerError> {
        let mut r = ByteReader::new(bytes);
        let p = Self::decode(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

/// Quantile partition of a target vector into coarse classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseClasses {
    pub edges: Vec<f64>,
    pub ids: Vec<usize>,
}

impl CoarseClasses {
    pub fn class_count(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn assign(&self, v: f64) -> usize {
        bin_id(&self.edges, v)
    }
}

/// Splits `y` into `k` quantile classes. `k` is reduced to the number of
/// distinct values when it exceeds it.
pub fn coarse_classes(y: &[f64], k: usize) -> Result<CoarseClasses> {
    if k < 2 {
        return Err(Error::contract(format!("class count must be at least 2, got {k}")));
    }
    if y.is_empty() {
        return Err(Error::contract("coarse classes of an empty target"));
    }
    let sorted = sorted_copy(y);
    let k = k.min(distinct_sorted(&sorted));
    let edges = quantile_edges(&sorted, k);
    let ids = y.iter().map(|&v| bin_id(&edges, v)).collect();
    Ok(CoarseClasses { edges, ids })
}
