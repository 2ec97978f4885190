//! Error-retention curves, R-AUC MSE and split-wise metrics.

use std::fmt::Write as _;

use crate::data::FeatureMatrix;
use crate::ensemble::{EnsembleModel, GaussianPrediction};
use crate::error::{Error, Result};

/// MSE of the retained predictions as the retention fraction sweeps from 0
/// to 1 in steps of `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionCurve {
    /// `(retention, mse)`, `N + 1` points.
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area under the curve.
    pub area: f64,
}

impl RetentionCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("retention,mse\n");
        for (r, m) in &self.points {
            writeln!(s, "{r:.16e},{m:.16e}").unwrap();
        }
        s
    }

    /// MSE with every prediction retained.
    pub fn full_mse(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

/// Builds the retention curve. Points are ordered by ascending uncertainty;
/// equal uncertainties keep their input order.
pub fn retention_curve(sq_errors: &[f64], uncertainty: &[f64]) -> Result<RetentionCurve> {
    let n = sq_errors.len();
    if n == 0 {
        return Err(Error::contract("retention curve of an empty set"));
    }
    if uncertainty.len() != n {
        return Err(Error::shape(
            "retention_curve",
            format!("{n} errors, {} uncertainties", uncertainty.len()),
        ));
    }
    if sq_errors.iter().chain(uncertainty).any(|v| !v.is_finite()) {
        return Err(Error::contract("retention curve inputs must be finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| uncertainty[a].total_cmp(&uncertainty[b]));

    let mut points = Vec::with_capacity(n + 1);
    points.push((0.0, 0.0));
    let mut running = 0.0;
    for (j, &i) in order.iter().enumerate() {
        running += sq_errors[i];
        let k = j + 1;
        points.push((k as f64 / n as f64, running / k as f64));
    }
    let area = points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(RetentionCurve { points, area })
}

fn check_targets(preds: &[GaussianPrediction], y: &[f64]) -> Result<()> {
    if preds.len() != y.len() {
        return Err(Error::shape("metrics", format!("{} predictions, {} targets", preds.len(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("targets must be present and finite"));
    }
    Ok(())
}

fn squared_errors(preds: &[GaussianPrediction], y: &[f64]) -> Vec<f64> {
    preds.iter().zip(y).map(|(p, t)| (p.mu - t).powi(2)).collect()
}

pub fn retention_of(preds: &[GaussianPrediction], y: &[f64]) -> Result<RetentionCurve> {
    check_targets(preds, y)?;
    let unc: Vec<f64> = preds.iter().map(|p| p.uncertainty).collect();
    retention_curve(&squared_errors(preds, y), &unc)
}

/// Area under the error-retention curve ordered by predicted uncertainty.
pub fn r_auc_mse(preds: &[GaussianPrediction], y: &[f64]) -> Result<f64> {
    Ok(retention_of(preds, y)?.area)
}

pub fn mse(preds: &[GaussianPrediction], y: &[f64]) -> Result<f64> {
    check_targets(preds, y)?;
    if y.is_empty() {
        return Err(Error::contract("MSE of an empty set"));
    }
    Ok(squared_errors(preds, y).iter().sum::<f64>() / y.len() as f64)
}

pub fn mae(preds: &[GaussianPrediction], y: &[f64]) -> Result<f64> {
    check_targets(preds, y)?;
    if y.is_empty() {
        return Err(Error::contract("MAE of an empty set"));
    }
    Ok(preds.iter().zip(y).map(|(p, t)| (p.mu - t).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetrics {
    pub name: String,
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub r_auc_mse: f64,
    pub mean_uncertainty: f64,
}

impl SplitMetrics {
    pub fn compute(name: &str, preds: &[GaussianPrediction], y: &[f64]) -> Result<Self> {
        let curve = retention_of(preds, y)?;
        Ok(Self {
            name: name.to_string(),
            n: y.len(),
            mse: curve.full_mse(),
            mae: mae(preds, y)?,
            r_auc_mse: curve.area,
            mean_uncertainty: preds.iter().map(|p| p.uncertainty).sum::<f64>() / preds.len() as f64,
        })
    }
}

/// A labelled evaluation set.
pub struct LabeledSplit<'a> {
    pub name: &'a str,
    pub features: &'a FeatureMatrix,
    pub target: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub splits: Vec<SplitMetrics>,
    pub pooled: SplitMetrics,
    pub pooled_curve: RetentionCurve,
}

impl EvalReport {
    pub fn split(&self, name: &str) -> Option<&SplitMetrics> {
        self.splits.iter().find(|s| s.name == name)
    }

    /// One CSV row per split plus the pooled row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,n,mse,mae,r_auc_mse,mean_uncertainty\n");
        for m in self.splits.iter().chain(std::iter::once(&self.pooled)) {
            writeln!(
                s,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                m.name, m.n, m.mse, m.mae, m.r_auc_mse, m.mean_uncertainty
            )
            .unwrap();
        }
        s
    }
}

/// Per-split and pooled metrics of an ensemble.
pub fn evaluate_splits(ens: &EnsembleModel, splits: &[LabeledSplit<'_>]) -> Result<EvalReport> {
    if splits.is_empty() {
        return Err(Error::contract("no evaluation splits"));
    }
    let mut metrics = Vec::new();
    let mut all_preds = Vec::new();
    let mut all_y = Vec::new();
    for s in splits {
        let y = s
            .target
            .ok_or_else(|| Error::contract(format!("split '{}' has no target column", s.name)))?;
        let preds = ens.predict(s.features)?;
        metrics.push(SplitMetrics::compute(s.name, &preds, y)?);
        all_preds.extend(preds);
        all_y.extend_from_slice(y);
    }
    Ok(EvalReport {
        splits: metrics,
        pooled: SplitMetrics::compute("pooled", &all_preds, &all_y)?,
        pooled_curve: retention_of(&all_preds, &all_y)?,
    })
}
