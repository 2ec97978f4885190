//! Alpha dropout.
//!
//! A dropped unit is set to the SELU saturation value `α′ = −λα`, then the
//! whole layer is corrected affinely, `out = a·(x·d + α′(1−d)) + b`, with
//! `q = 1 − p`, `a = (q + α′²pq)^(−1/2)` and `b = −a·p·α′`. For inputs with
//! zero mean and unit variance this keeps both moments unchanged in
//! expectation.

use rand::Rng;

use super::activation::SELU_SATURATION;
use crate::error::Result;
use crate::numerics::{Matrix, NodeId, Tape};

/// A sampled dropout pattern expressed as `out = x ⊙ scale + offset`.
#[derive(Debug, Clone)]
pub struct AlphaDropoutMask {
    scale: Matrix,
    offset: Matrix,
    identity: bool,
}

/// Affine correction `(a, b)` for drop probability `p`.
pub fn affine_correction(p: f64) -> (f64, f64) {
    let q = 1.0 - p;
    let alpha = SELU_SATURATION;
    let a = (q + alpha * alpha * p * q).powf(-0.5);
    let b = -a * p * alpha;
    (a, b)
}

impl AlphaDropoutMask {
    /// Draws one Bernoulli keep/drop decision per unit. A zero rate draws
    /// nothing from `rng` and yields the identity.
    pub fn sample<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Self {
        if rate == 0.0 {
            return Self {
                scale: Matrix::filled(rows, cols, 1.0),
                offset: Matrix::zeros(rows, cols),
                identity: true,
            };
        }
        let (a, b) = affine_correction(rate);
        let dropped_value = a * SELU_SATURATION + b;
        let mut scale = Vec::with_capacity(rows * cols);
        let mut offset = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            if rng.random::<f64>() < rate {
                scale.push(0.0);
                offset.push(dropped_value);
            } else {
                scale.push(a);
                offset.push(b);
            }
        }
        Self {
            scale: Matrix::from_raw(rows, cols, scale),
            offset: Matrix::from_raw(rows, cols, offset),
            identity: false,
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if self.identity {
            return Ok(x.clone());
        }
        x.hadamard(&self.scale)?.add(&self.offset)
    }

    pub(crate) fn record(self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        if self.identity {
            return Ok(x);
        }
        let scale = tape.constant(self.scale);
        let offset = tape.constant(self.offset);
        let scaled = tape.mul(x, scale)?;
        tape.add(scaled, offset)
    }
}

/// Applies alpha dropout in training mode; identity in inference mode.
pub fn alpha_dropout<R: Rng + ?Sized>(
    x: &Matrix,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Matrix> {
    if !training {
        return Ok(x.clone());
    }
    AlphaDropoutMask::sample(x.rows(), x.cols(), rate, rng).apply(x)
}
