//! Self-normalizing feed-forward network with a hierarchical two-head topology.
//!
//! ```text
//! input ─▶ trunk (SELU × trunk_layers) ─┬─▶ aux head ─▶ L2 normalize ─▶ projection
//!                                      └─▶ upper (SELU × upper_layers) ─▶ output head ─▶ (μ̃, σ̃)
//! ```
//!
//! The auxiliary (low-level) head reads the last trunk activation, the
//! Gaussian (high-level) head sits on top of the upper stack. `σ` is produced
//! as `softplus(σ̃)`.

pub mod activation;
mod dropout;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{ContainerError, Error, Result};
use crate::numerics::{row_l2_normalize, Matrix, NodeId, Tape};

pub use activation::{selu, softplus, SELU_ALPHA, SELU_LAMBDA, SELU_SATURATION};
pub use dropout::{alpha_dropout, AlphaDropoutMask};

/// Architecture hyperparameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Hidden layers below the auxiliary head.
    pub trunk_layers: usize,
    /// Hidden layers between the auxiliary head and the Gaussian head.
    pub upper_layers: usize,
    /// Width of the auxiliary head (projection size or class count).
    pub projection_dim: usize,
    pub alpha_dropout_rate: f64,
    pub seed: u64,
}

impl SnnSpec {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 512,
            trunk_layers: 12,
            upper_layers: 6,
            projection_dim: 128,
            alpha_dropout_rate: 0.0003,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("trunk_layers", self.trunk_layers),
            ("upper_layers", self.upper_layers),
            ("projection_dim", self.projection_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha_dropout_rate) {
            return Err(Error::contract(format!(
                "alpha dropout rate {} outside [0, 1)",
                self.alpha_dropout_rate
            )));
        }
        Ok(())
    }

    pub fn hidden_layers(&self) -> usize {
        self.trunk_layers + self.upper_layers
    }
}

/// Fully connected layer `x · W + b` with `W` stored as `n_in x n_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(n_in, n_out),
            bias: Matrix::zeros(1, n_out),
        }
    }

    /// Weights ~ N(0, 1/n_in), zero bias.
    fn lecun<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (1.0 / n_in as f64).sqrt()).expect("positive std");
        let data = (0..n_in * n_out).map(|_| normal.sample(rng)).collect();
        Self {
            weight: Matrix::from_raw(n_in, n_out, data),
            bias: Matrix::zeros(1, n_out),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weight.cols()
    }

    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row_broadcast(&self.bias)
    }
}

/// Outputs of a forward pass, in standardized target space.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Auxiliary head output with unit-length rows.
    pub projection: Matrix,
    /// Raw auxiliary head output (class logits for the crossentropy variant).
    pub aux_logits: Matrix,
    /// Activation of the last trunk layer.
    pub trunk_out: Matrix,
}

/// Node handles produced by [`SnnModel::record`].
#[derive(Debug, Clone)]
pub struct TapeHeads {
    /// Parameter nodes in [`SnnModel::params`] order.
    pub params: Vec<NodeId>,
    pub mu: NodeId,
    pub sigma: NodeId,
    pub projection: NodeId,
    pub aux_logits: NodeId,
    pub trunk_out: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    spec: SnnSpec,
    trunk: Vec<Dense>,
    upper: Vec<Dense>,
    aux_head: Dense,
    output_head: Dense,
}

impl SnnModel {
    /// Lecun-normal initialization, deterministic in `spec.seed`.
    pub fn lecun_init(spec: &SnnSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let h = spec.hidden_dim;
        let mut trunk = Vec::with_capacity(spec.trunk_layers);
        for i in 0..spec.trunk_layers {
            let n_in = if i == 0 { spec.input_dim } else { h };
            trunk.push(Dense::lecun(n_in, h, &mut rng));
        }
        let upper = (0..spec.upper_layers)
            .map(|_| Dense::lecun(h, h, &mut rng))
            .collect();
        let aux_head = Dense::lecun(h, spec.projection_dim, &mut rng);
        let output_head = Dense::lecun(h, 2, &mut rng);
        Ok(Self {
            spec: spec.clone(),
            trunk,
            upper,
            aux_head,
            output_head,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(spec: &SnnSpec) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden_dim;
        Ok(Self {
            spec: spec.clone(),
            trunk: (0..spec.trunk_layers)
                .map(|i| Dense::zeros(if i == 0 { spec.input_dim } else { h }, h))
                .collect(),
            upper: (0..spec.upper_layers).map(|_| Dense::zeros(h, h)).collect(),
            aux_head: Dense::zeros(h, spec.projection_dim),
            output_head: Dense::zeros(h, 2),
        })
    }

    pub fn spec(&self) -> &SnnSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Hidden layers plus the two heads.
    pub fn layer_count(&self) -> usize {
        self.trunk.len() + self.upper.len() + 2
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain(&self.upper)
            .chain([&self.aux_head, &self.output_head])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.trunk
            .iter_mut()
            .chain(self.upper.iter_mut())
            .chain([&mut self.aux_head, &mut self.output_head])
    }

    /// Weight and bias of every layer, trunk first, then upper, aux head,
    /// and output head.
    pub fn params(&self) -> Vec<&Matrix> {
        self.layers().flat_map(|d| [&d.weight, &d.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers_mut()
            .flat_map(|d| [&mut d.weight, &mut d.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::shape(
                "forward",
                format!("{} input columns, model expects {}", x.cols(), self.spec.input_dim),
            ));
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout disabled).
    pub fn forward(&self, x: &Matrix) -> Result<ForwardOutput> {
        self.run::<ChaCha8Rng>(x, None, None)
    }

    /// Training-mode forward pass with alpha dropout drawn from `rng`.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &Matrix, rng: &mut R) -> Result<ForwardOutput> {
        self.run(x, Some(rng), None)
    }

    /// Inference forward that also returns every hidden-layer activation.
    pub fn forward_traced(&self, x: &Matrix) -> Result<(ForwardOutput, Vec<Matrix>)> {
        let mut trace = Vec::with_capacity(self.spec.hidden_layers());
        let out = self.run::<ChaCha8Rng>(x, None, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn run<R: Rng + ?Sized>(
        &self,
        x: &Matrix,
        mut rng: Option<&mut R>,
        mut trace: Option<&mut Vec<Matrix>>,
    ) -> Result<ForwardOutput> {
        self.check_input(x)?;
        let rate = self.spec.alpha_dropout_rate;
        let mut hidden = |layer: &Dense, h: &Matrix| -> Result<Matrix> {
            let mut a = layer.apply(h)?.map(selu);
            if let Some(r) = rng.as_deref_mut() {
                a = AlphaDropoutMask::sample(a.rows(), a.cols(), rate, r).apply(&a)?;
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(a.clone());
            }
            Ok(a)
        };

        let mut h = x.clone();
        for layer in &self.trunk {
            h = hidden(layer, &h)?;
        }
        let trunk_out = h.clone();
        for layer in &self.upper {
            h = hidden(layer, &h)?;
        }
        let aux_logits = self.aux_head.apply(&trunk_out)?;
        let projection = row_l2_normalize(&aux_logits);
        let head = self.output_head.apply(&h)?;
        let mu = head.column_values(0);
        let sigma = head.column_values(1).into_iter().map(softplus).collect();
        Ok(ForwardOutput {
            mu,
            sigma,
            projection,
            aux_logits,
            trunk_out,
        })
    }

    /// Records a forward pass on `tape`, registering every weight and bias
    /// as a tracked parameter. Dropout masks are drawn from `rng` in the same
    /// order as [`SnnModel::forward_train`], so the same RNG state yields the
    /// same outputs on both paths.
    pub fn record<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        x: &Matrix,
        mut rng: Option<&mut R>,
    ) -> Result<TapeHeads> {
        self.check_input(x)?;
        let rate = self.spec.alpha_dropout_rate;
        let mut params = Vec::with_capacity(2 * self.layer_count());
        let mut dense = |tape: &mut Tape, layer: &Dense, input: NodeId| -> Result<NodeId> {
            let w = tape.parameter(layer.weight.clone());
            let b = tape.parameter(layer.bias.clone());
            params.push(w);
            params.push(b);
            let z = tape.matmul(input, w)?;
            tape.add_bias(z, b)
        };
        let mut hidden = |tape: &mut Tape, layer: &Dense, input: NodeId| -> Result<NodeId> {
            let z = dense(tape, layer, input)?;
            let a = tape.selu(z);
            match rng.as_deref_mut() {
                Some(r) => {
                    let (rows, cols) = tape.shape(a);
                    AlphaDropoutMask::sample(rows, cols, rate, r).record(tape, a)
                }
                None => Ok(a),
            }
        };

        let mut h = tape.constant(x.clone());
        for layer in &self.trunk {
            h = hidden(tape, layer, h)?;
        }
        let trunk_out = h;
        for layer in &self.upper {
            h = hidden(tape, layer, h)?;
        }
        let aux_logits = dense(tape, &self.aux_head, trunk_out)?;
        let projection = tape.row_l2_normalize(aux_logits);
        let head = dense(tape, &self.output_head, h)?;
        let mu = tape.column(head, 0)?;
        let raw_sigma = tape.column(head, 1)?;
        let sigma = tape.softplus(raw_sigma);
        Ok(TapeHeads {
            params,
            mu,
            sigma,
            projection,
            aux_logits,
            trunk_out,
        })
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        let s = &self.spec;
        for v in [s.input_dim, s.hidden_dim, s.trunk_layers, s.upper_layers, s.projection_dim] {
            w.usize(v);
        }
        w.f64(s.alpha_dropout_rate);
        w.u64(s.seed);
        for p in self.params() {
            w.matrix(p);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> std::result::Result<Self, ContainerError> {
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.usize()?;
        }
        let spec = SnnSpec {
            input_dim: dims[0],
            hidden_dim: dims[1],
            trunk_layers: dims[2],
            upper_layers: dims[3],
            projection_dim: dims[4],
            alpha_dropout_rate: r.f64()?,
            seed: r.u64()?,
        };
        let bad = |e: Error| ContainerError::Malformed(format!("model: {e}"));
        // Bound layer counts by the bytes available before allocating.
        if spec.hidden_layers().saturating_add(2).saturating_mul(32) > r.remaining() {
            return Err(ContainerError::Truncated);
        }
        let mut model = SnnModel::zeros(&spec).map_err(bad)?;
        for p in model.params_mut() {
            let m = r.matrix()?;
            if m.shape() != p.shape() {
                return Err(ContainerError::Malformed(format!(
                    "layer shape {:?}, expected {:?}",
                    m.shape(),
                    p.shape()
                )));
            }
            *p = m;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, ContainerError> {
        let mut r = ByteReader::new(bytes);
        let m = Self::decode(&mut r)?;
        r.finish()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests;
