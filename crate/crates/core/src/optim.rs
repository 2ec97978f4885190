//! Rectified Adam inside a Lookahead wrapper.
//!
//! RAdam falls back to a plain bias-corrected momentum step while the
//! approximated SMA length `ρ_t` is at most 4, i.e. while the second-moment
//! estimate is too noisy to trust; afterwards the adaptive step is scaled by
//! the variance rectification factor `r_t`. Lookahead keeps a slow copy of
//! the parameters and every `sync_period` fast steps moves it a fraction
//! `slow_step` toward the fast weights, then resets the fast weights to it.

use crate::codec::{ByteReader, ByteWriter};
use crate::error::{ContainerError, Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub sync_period: u64,
    pub slow_step: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.0003,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sync_period: 6,
            slow_step: 0.5,
            grad_clip: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.sync_period == 0 {
            return bad("sync_period must be at least 1");
        }
        if !(self.slow_step > 0.0 && self.slow_step <= 1.0) {
            return bad("slow_step must lie in (0, 1]");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        Ok(())
    }

    /// `ρ∞ = 2/(1−β₂) − 1`.
    pub fn rho_inf(&self) -> f64 {
        2.0 / (1.0 - self.beta2) - 1.0
    }

    /// `ρ_t = ρ∞ − 2t·β₂ᵗ/(1−β₂ᵗ)`.
    pub fn rho(&self, t: u64) -> f64 {
        let b2t = self.beta2.powf(t as f64);
        self.rho_inf() - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// Variance rectification factor; `None` when `ρ_t ≤ 4`.
    pub fn rectification(&self, t: u64) -> Option<f64> {
        let rho = self.rho(t);
        if rho <= 4.0 {
            return None;
        }
        let inf = self.rho_inf();
        Some((((rho - 4.0) * (rho - 2.0) * inf) / ((inf - 4.0) * (inf - 2.0) * rho)).sqrt())
    }
}

/// Which update rule a step used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Momentum,
    Rectified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    slow: Vec<Matrix>,
    syncs: u64,
}

impl OptimizerState {
    /// Zero moments; slow weights start at the current parameters.
    pub fn new(config: OptimizerConfig, params: &[&Matrix]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step: 0,
            first_moment: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            second_moment: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            slow: params.iter().map(|p| (*p).clone()).collect(),
            syncs: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn sync_count(&self) -> u64 {
        self.syncs
    }

    pub fn slow_weights(&self) -> &[Matrix] {
        &self.slow
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second_moment
    }

    fn check_shapes(&self, params: &[&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "optimizer",
                format!(
                    "{} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape(
                    "optimizer",
                    format!("param {:?}, grad {:?}, state {:?}", p.shape(), g.shape(), m.shape()),
                ));
            }
        }
        Ok(())
    }

    /// One RAdam fast-weight update.
    pub fn radam_step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<StepKind> {
        self.check_shapes(params, grads)?;
        self.step += 1;
        let t = self.step;
        let OptimizerConfig { lr, beta1, beta2, eps, .. } = self.config;

        let clip = match self.config.grad_clip {
            Some(max_norm) => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.as_slice())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > max_norm { max_norm / norm } else { 1.0 }
            }
            None => 1.0,
        };

        let bias1 = 1.0 - beta1.powf(t as f64);
        let bias2 = 1.0 - beta2.powf(t as f64);
        let rect = self.config.rectification(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let (p, m, v) = (p.as_mut_slice(), m.as_mut_slice(), v.as_mut_slice());
            for i in 0..p.len() {
                let gi = g.as_slice()[i] * clip;
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                match rect {
                    Some(r) => {
                        let v_hat = (v[i] / bias2).sqrt();
                        p[i] -= lr * r * m_hat / (v_hat + eps);
                    }
                    None => p[i] -= lr * m_hat,
                }
            }
        }
        Ok(if rect.is_some() { StepKind::Rectified } else { StepKind::Momentum })
    }

    /// Lookahead synchronization; acts only when the step count is a multiple
    /// of the sync period. Returns whether a sync happened.
    pub fn lookahead_sync(&mut self, params: &mut [&mut Matrix]) -> Result<bool> {
        if params.len() != self.slow.len() {
            return Err(Error::shape("lookahead_sync", "parameter count changed"));
        }
        if self.step == 0 || !self.step.is_multiple_of(self.config.sync_period) {
            return Ok(false);
        }
        let alpha = self.config.slow_step;
        for (p, s) in params.iter_mut().zip(self.slow.iter_mut()) {
            if p.shape() != s.shape() {
                return Err(Error::shape("lookahead_sync", "parameter shape changed"));
            }
            for (fast, slow) in p.as_mut_slice().iter_mut().zip(s.as_mut_slice()) {
                *slow += alpha * (*fast - *slow);
                *fast = *slow;
            }
        }
        self.syncs += 1;
        Ok(true)
    }

    /// Fast step followed by the Lookahead check.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<StepKind> {
        let kind = self.radam_step(params, grads)?;
        self.lookahead_sync(params)?;
        Ok(kind)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        let c = &self.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            w.f64(v);
        }
        w.u64(c.sync_period);
        w.f64(c.slow_step);
        match c.grad_clip {
            Some(v) => {
                w.u8(1);
                w.f64(v);
            }
            None => w.u8(0),
        }
        w.u64(self.step);
        w.u64(self.syncs);
        w.usize(self.slow.len());
        for i in 0..self.slow.len() {
            w.matrix(&self.first_moment[i]);
            w.matrix(&self.second_moment[i]);
            w.matrix(&self.slow[i]);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, ContainerError> {
        let mut r = ByteReader::new(bytes);
        let config = OptimizerConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
            sync_period: r.u64()?,
            slow_step: r.f64()?,
            grad_clip: match r.u8()? {
                0 => None,
                1 => Some(r.f64()?),
                other => return Err(ContainerError::Malformed(format!("clip tag {other}"))),
            },
        };
        let step = r.u64()?;
        let syncs = r.u64()?;
        let n = r.len_prefix(48)?;
        let (mut first, mut second, mut slow) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            first.push(r.matrix()?);
            second.push(r.matrix()?);
            slow.push(r.matrix()?);
        }
        r.finish()?;
        Ok(Self {
            config,
            step,
            first_moment: first,
            second_moment: second,
            slow,
            syncs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(cfg: OptimizerConfig, theta: f64) -> (OptimizerState, Matrix) {
        let p = Matrix::scalar(theta);
        (OptimizerState::new(cfg, &[&p]).unwrap(), p)
    }

    #[test]
    fn rho_at_first_step_takes_momentum_branch() {
        let cfg = OptimizerConfig::default();
        assert!((cfg.rho_inf() - 1999.0).abs() < 1e-9);
        // 1999 − 2·0.999/0.001 = 1.0
        assert!((cfg.rho(1) - 1.0).abs() < 1e-6);
        assert!(cfg.rectification(1).is_none());
        let first_rectified = (1..100).find(|&t| cfg.rectification(t).is_some()).unwrap();
        assert!(cfg.rho(first_rectified - 1) <= 4.0 && cfg.rho(first_rectified) > 4.0);
    }

    #[test]
    fn momentum_branch_ignores_second_moment() {
        let cfg = OptimizerConfig { sync_period: 1000, ..Default::default() };
        let (mut a, mut pa) = scalar_state(cfg.clone(), 0.5);
        let (mut b, mut pb) = scalar_state(cfg.clone(), 0.5);
        // Corrupt b's second moment; momentum-branch steps must not notice.
        b.second_moment[0] = Matrix::scalar(1e6);
        let g = [Matrix::scalar(0.3)];
        let mut t = 0;
        while cfg.rectification(t + 1).is_none() {
            let ka = a.radam_step(&mut [&mut pa], &g).unwrap();
            let kb = b.radam_step(&mut [&mut pb], &g).unwrap();
            assert_eq!(ka, StepKind::Momentum);
            assert_eq!(kb, StepKind::Momentum);
            assert_eq!(pa.as_slice(), pb.as_slice());
            t += 1;
        }
        assert!(t >= 1);
        // The first rectified step does read it.
        assert_eq!(a.radam_step(&mut [&mut pa], &g).unwrap(), StepKind::Rectified);
        b.radam_step(&mut [&mut pb], &g).unwrap();
        assert_ne!(pa.as_slice(), pb.as_slice());
    }

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let p0 = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let mut p = p0.clone();
        let mut s = OptimizerState::new(OptimizerConfig::default(), &[&p]).unwrap();
        for _ in 0..50 {
            s.step(&mut [&mut p], &[Matrix::zeros(2, 2)]).unwrap();
            assert_eq!(p, p0);
        }
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let cfg = OptimizerConfig { lr: 0.01, ..Default::default() };
        let (mut s, mut p) = scalar_state(cfg, 1.0);
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let g = [Matrix::scalar(p.get(0, 0))];
            s.radam_step(&mut [&mut p], &g).unwrap();
            let now = p.get(0, 0).abs();
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
    }

    #[test]
    fn lookahead_midpoint_and_counting() {
        let cfg = OptimizerConfig { sync_period: 1, slow_step: 0.5, ..Default::default() };
        let mut p = Matrix::scalar(0.0);
        let mut s = OptimizerState::new(cfg, &[&p]).unwrap();
        s.step = 1;
        p = Matrix::scalar(2.0);
        assert!(s.lookahead_sync(&mut [&mut p]).unwrap());
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(s.slow[0].get(0, 0), 1.0);

        let cfg = OptimizerConfig { sync_period: 1, slow_step: 1.0, ..Default::default() };
        let mut p = Matrix::scalar(0.0);
        let mut s = OptimizerState::new(cfg, &[&p]).unwrap();
        s.step = 1;
        p = Matrix::scalar(2.0);
        s.lookahead_sync(&mut [&mut p]).unwrap();
        assert_eq!(p.get(0, 0), 2.0);
        assert_eq!(s.slow[0].get(0, 0), 2.0);

        let (mut s, mut p) = scalar_state(OptimizerConfig::default(), 1.0);
        let mut synced_at = Vec::new();
        for t in 1..=12 {
            s.radam_step(&mut [&mut p], &[Matrix::scalar(0.1)]).unwrap();
            if s.lookahead_sync(&mut [&mut p]).unwrap() {
                synced_at.push(t);
            }
        }
        assert_eq!(synced_at, vec![6, 12]);
        assert_eq!(s.sync_count(), 2);
    }

    #[test]
    fn state_round_trips_bit_exactly() {
        let mut p = Matrix::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let cfg = OptimizerConfig { grad_clip: Some(5.0), ..Default::default() };
        let mut s = OptimizerState::new(cfg, &[&p]).unwrap();
        for k in 0..9 {
            let g = Matrix::from_rows(&[vec![0.3 * k as f64, -1.0 / 3.0, 1e-7]]).unwrap();
            s.step(&mut [&mut p], &[g]).unwrap();
        }
        let back = OptimizerState::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), s.to_bytes());
    }

    #[test]
    fn clipping_bounds_the_update() {
        let cfg = OptimizerConfig { grad_clip: Some(1.0), lr: 1.0, sync_period: 100, ..Default::default() };
        let (mut s, mut p) = scalar_state(cfg, 0.0);
        s.radam_step(&mut [&mut p], &[Matrix::scalar(1e6)]).unwrap();
        // momentum branch: lr · m̂ with clipped gradient 1.0
        assert!((p.get(0, 0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let p = Matrix::scalar(0.0);
        for cfg in [
            OptimizerConfig { slow_step: 0.0, ..Default::default() },
            OptimizerConfig { slow_step: 1.5, ..Default::default() },
            OptimizerConfig { sync_period: 0, ..Default::default() },
            OptimizerConfig { lr: -1.0, ..Default::default() },
        ] {
            assert!(OptimizerState::new(cfg, &[&p]).is_err());
        }
    }
}
