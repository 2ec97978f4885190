//! Training objectives.
//!
//! The high-level head is trained with the Gaussian negative log-likelihood
//! of the target under `N(μ, σ)`. The low-level head adds either a supervised
//! N-pairs contrastive term over L2-normalized projections or a softmax
//! crossentropy over coarse target classes.
//!
//! Each loss exists twice: a plain evaluation over slices and matrices, and a
//! `record_*` variant that builds the same expression on a [`Tape`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{ForwardOutput, TapeHeads};
use crate::numerics::{row_logsumexp, Matrix, NodeId, Tape};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxKind {
    Contrastive,
    Crossentropy,
    None,
}

impl AuxKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuxKind::Contrastive => "contrastive",
            AuxKind::Crossentropy => "crossentropy",
            AuxKind::None => "none",
        }
    }
}

impl std::str::FromStr for AuxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrastive" | "npairs" => Ok(AuxKind::Contrastive),
            "crossentropy" => Ok(AuxKind::Crossentropy),
            "none" => Ok(AuxKind::None),
            other => Err(Error::Config(format!("unknown aux_kind {other:?}"))),
        }
    }
}

/// Weighted combination of the regression and auxiliary objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskLoss {
    pub nll_weight: f64,
    pub aux_weight: f64,
    pub aux_kind: AuxKind,
    pub temperature: f64,
}

impl Default for MultitaskLoss {
    fn default() -> Self {
        Self {
            nll_weight: 1.0,
            aux_weight: 1.0,
            aux_kind: AuxKind::Contrastive,
            temperature: 0.1,
        }
    }
}

impl MultitaskLoss {
    pub fn validate(&self) -> Result<()> {
        if !(self.nll_weight >= 0.0 && self.aux_weight >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("contrastive temperature must be positive".into()));
        }
        Ok(())
    }

    fn aux_active(&self) -> bool {
        self.aux_kind != AuxKind::None && self.aux_weight != 0.0
    }

    /// Loss value from a plain forward pass.
    pub fn evaluate(&self, out: &ForwardOutput, y: &[f64], classes: &[usize]) -> Result<f64> {
        let nll = gaussian_nll(&out.mu, &out.sigma, y)?;
        let mut total = self.nll_weight * nll;
        if self.aux_active() {
            let aux = match self.aux_kind {
                AuxKind::Contrastive => npairs_contrastive(&out.projection, classes, self.temperature)?,
                AuxKind::Crossentropy => crossentropy(&out.aux_logits, classes)?,
                AuxKind::None => unreachable!(),
            };
            total += self.aux_weight * aux;
        }
        Ok(total)
    }

    /// Records the combined loss on the tape and returns its scalar node.
    pub fn record(
        &self,
        tape: &mut Tape,
        heads: &TapeHeads,
        y: &[f64],
        classes: &[usize],
    ) -> Result<NodeId> {
        let nll = record_gaussian_nll(tape, heads.mu, heads.sigma, y)?;
        let mut total = tape.scale(nll, self.nll_weight);
        if self.aux_active() {
            let aux = match self.aux_kind {
                AuxKind::Contrastive => {
                    record_npairs_contrastive(tape, heads.projection, classes, self.temperature)?
                }
                AuxKind::Crossentropy => record_crossentropy(tape, heads.aux_logits, classes)?,
                AuxKind::None => unreachable!(),
            };
            let weighted = tape.scale(aux, self.aux_weight);
            total = tape.add(total, weighted)?;
        }
        Ok(total)
    }
}

fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("lengths {a} and {b}")));
    }
    Ok(())
}

/// Mean of `½log(2π) + log σ + (y − μ)²/(2σ²)`.
pub fn gaussian_nll(mu: &[f64], sigma: &[f64], y: &[f64]) -> Result<f64> {
    check_len("gaussian_nll", mu.len(), sigma.len())?;
    check_len("gaussian_nll", mu.len(), y.len())?;
    if mu.is_empty() {
        return Err(Error::contract("gaussian_nll on an empty batch"));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::contract(format!("sigma must be positive, got {s}")));
    }
    let total: f64 = mu
        .iter()
        .zip(sigma)
        .zip(y)
        .map(|((&m, &s), &t)| HALF_LOG_2PI + s.ln() + (t - m).powi(2) / (2.0 * s * s))
        .sum();
    Ok(total / mu.len() as f64)
}

pub fn record_gaussian_nll(tape: &mut Tape, mu: NodeId, sigma: NodeId, y: &[f64]) -> Result<NodeId> {
    let shape = tape.shape(mu);
    if shape != (y.len(), 1) || tape.shape(sigma) != shape {
        return Err(Error::shape(
            "record_gaussian_nll",
            format!("mu {shape:?}, sigma {:?}, {} targets", tape.shape(sigma), y.len()),
        ));
    }
    let target = tape.constant(Matrix::column(y)?);
    let resid = tape.sub(target, mu)?;
    let sq = tape.square(resid);
    let var = tape.square(sigma);
    let twice_var = tape.scale(var, 2.0);
    let quad = tape.div(sq, twice_var)?;
    let log_sigma = tape.log(sigma);
    let per_row = tape.add(log_sigma, quad)?;
    let mean = tape.mean(per_row);
    Ok(tape.add_scalar(mean, HALF_LOG_2PI))
}

/// Constants shared by both contrastive paths: the positive-pair weights
/// `1/(|P(i)|·n_anchors)` and the per-anchor weights `1/n_anchors`.
struct ContrastiveMasks {
    not_self: Matrix,
    positive_weights: Matrix,
    anchor_weights: Matrix,
    anchors: usize,
}

fn contrastive_masks(n: usize, classes: &[usize]) -> ContrastiveMasks {
    let mut not_self = Matrix::filled(n, n, 1.0);
    let mut positive = Matrix::zeros(n, n);
    let mut positives_per_row = vec![0usize; n];
    for i in 0..n {
        not_self.set(i, i, 0.0);
        for j in 0..n {
            if i != j && classes[i] == classes[j] {
                positive.set(i, j, 1.0);
                positives_per_row[i] += 1;
            }
        }
    }
    let anchors = positives_per_row.iter().filter(|&&c| c > 0).count();
    let mut anchor_weights = Matrix::zeros(n, 1);
    if anchors > 0 {
        for i in 0..n {
            let p = positives_per_row[i];
            if p == 0 {
                continue;
            }
            anchor_weights.set(i, 0, 1.0 / anchors as f64);
            for j in 0..n {
                if positive.get(i, j) != 0.0 {
                    positive.set(i, j, 1.0 / (p as f64 * anchors as f64));
                }
            }
        }
    }
    ContrastiveMasks {
        not_self,
        positive_weights: positive,
        anchor_weights,
        anchors,
    }
}

/// Supervised N-pairs contrastive loss over row-normalized projections.
///
/// For each anchor `i` with at least one same-class partner,
/// `−(1/|P(i)|) Σ_{p∈P(i)} log[exp(zᵢ·z_p/τ) / Σ_{a≠i} exp(zᵢ·z_a/τ)]`,
/// averaged over such anchors. Batches without any positive pair give 0.
pub fn npairs_contrastive(projections: &Matrix, classes: &[usize], temperature: f64) -> Result<f64> {
    let n = projections.rows();
    check_len("npairs_contrastive", n, classes.len())?;
    let masks = contrastive_masks(n, classes);
    if masks.anchors == 0 {
        return Ok(0.0);
    }
    let sim = projections.matmul_nt(projections)?.scale(1.0 / temperature);
    let lse = row_logsumexp(&sim, Some(&masks.not_self));
    let attract = sim.hadamard(&masks.positive_weights)?.sum();
    let normalizer = lse.hadamard(&masks.anchor_weights)?.sum();
    Ok(normalizer - attract)
}

pub fn record_npairs_contrastive(
    tape: &mut Tape,
    projections: NodeId,
    classes: &[usize],
    temperature: f64,
) -> Result<NodeId> {
    let n = tape.shape(projections).0;
    check_len("record_npairs_contrastive", n, classes.len())?;
    let masks = contrastive_masks(n, classes);
    if masks.anchors == 0 {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let dots = tape.matmul_nt(projections, projections)?;
    let sim = tape.scale(dots, 1.0 / temperature);
    let lse = tape.row_logsumexp(sim, Some(masks.not_self))?;
    let pw = tape.constant(masks.positive_weights);
    let aw = tape.constant(masks.anchor_weights);
    let attract = tape.mul(sim, pw)?;
    let attract = tape.sum(attract);
    let normalizer = tape.mul(lse, aw)?;
    let normalizer = tape.sum(normalizer);
    tape.sub(normalizer, attract)
}

fn class_one_hot(classes: &[usize], k: usize) -> Result<Matrix> {
    let n = classes.len();
    let mut m = Matrix::zeros(n, k);
    for (i, &c) in classes.iter().enumerate() {
        if c >= k {
            return Err(Error::contract(format!(
                "class id {c} out of range for {k} logits"
            )));
        }
        m.set(i, c, 1.0 / n as f64);
    }
    Ok(m)
}

/// Mean softmax crossentropy.
pub fn crossentropy(logits: &Matrix, classes: &[usize]) -> Result<f64> {
    check_len("crossentropy", logits.rows(), classes.len())?;
    if classes.is_empty() {
        return Err(Error::contract("crossentropy on an empty batch"));
    }
    let picked = class_one_hot(classes, logits.cols())?;
    let lse = row_logsumexp(logits, None);
    Ok(lse.sum() / classes.len() as f64 - logits.hadamard(&picked)?.sum())
}

pub fn record_crossentropy(tape: &mut Tape, logits: NodeId, classes: &[usize]) -> Result<NodeId> {
    let (n, k) = tape.shape(logits);
    check_len("record_crossentropy", n, classes.len())?;
    if n == 0 {
        return Err(Error::contract("crossentropy on an empty batch"));
    }
    let picked = tape.constant(class_one_hot(classes, k)?);
    let lse = tape.row_logsumexp(logits, None)?;
    let mean_lse = tape.mean(lse);
    let chosen = tape.mul(logits, picked)?;
    let chosen = tape.sum(chosen);
    tape.sub(mean_lse, chosen)
}

/// The Gaussian density itself; handy for oracles and diagnostics.
pub fn gaussian_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    (-(y - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}
