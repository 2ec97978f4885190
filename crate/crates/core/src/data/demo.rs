//! One-dimensional extrapolation demo: a closed-form linear fit and a small
//! SNN trained on `x ∈ (-1, 1)`, both evaluated inside that range and on
//! `1 < |x| < 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::FeatureMatrix;
use crate::ensemble::{train_ensemble, NetworkConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::{AuxKind, MultitaskLoss};
use crate::optim::OptimizerConfig;
use crate::plot::{Chart, Series};
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruth {
    Linear,
    Cubic,
}

impl GroundTruth {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            GroundTruth::Linear => 1.5 * x + 0.5,
            GroundTruth::Cubic => 2.0 * x.powi(3) - x,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroundTruth::Linear => "linear",
            GroundTruth::Cubic => "cubic",
        }
    }
}

impl std::str::FromStr for GroundTruth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(GroundTruth::Linear),
            "cubic" => Ok(GroundTruth::Cubic),
            other => Err(Error::Config(format!("unknown ground truth '{other}' (linear|cubic)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub truth: GroundTruth,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub train: TrainConfig,
    pub seed: u64,
}

impl DemoConfig {
    pub fn new(seed: u64, truth: GroundTruth) -> Self {
        let train = TrainConfig {
            members: 1,
            network: NetworkConfig {
                hidden_dim: 32,
                trunk_layers: 3,
                upper_layers: 2,
                projection_dim: 8,
                alpha_dropout_rate: 0.0,
            },
            batch_size: 32,
            max_epochs: 150,
            patience: 20,
            classes: 5,
            loss: MultitaskLoss {
                aux_kind: AuxKind::None,
                ..Default::default()
            },
            optimizer: OptimizerConfig {
                lr: 1e-3,
                grad_clip: Some(1.0),
                ..Default::default()
            },
            preprocess: PreprocessConfig {
                quantize: false,
                ..Default::default()
            },
            seed,
            parallel: false,
            ..Default::default()
        };
        Self {
            truth,
            n_train: 400,
            n_test: 400,
            noise: 0.05,
            train,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub truth: GroundTruth,
    pub linear_in_mse: f64,
    pub linear_out_mse: f64,
    pub snn_in_mse: f64,
    pub snn_out_mse: f64,
    pub svg: String,
}

impl DemoReport {
    pub fn to_text(&self) -> String {
        format!(
            "truth={}\nlinear_in_mse={}\nlinear_out_mse={}\nsnn_in_mse={}\nsnn_out_mse={}\n",
            self.truth.as_str(),
            self.linear_in_mse,
            self.linear_out_mse,
            self.snn_in_mse,
            self.snn_out_mse
        )
    }
}

/// Ordinary least squares `y ≈ a + b·x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn column(x: &[f64]) -> Result<FeatureMatrix> {
    FeatureMatrix::new(vec!["x".into()], x.len(), x.to_vec())
}

pub fn demo_extrapolation(cfg: &DemoConfig) -> Result<DemoReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = cfg.truth;
    let noisy = |x: f64, rng: &mut ChaCha8Rng| f.eval(x) + cfg.noise * rng.sample::<f64, _>(StandardNormal);
    let inner = |rng: &mut ChaCha8Rng| rng.random_range(-1.0..1.0);
    let outer = |rng: &mut ChaCha8Rng| {
        let m: f64 = rng.random_range(1.0..2.0);
        if rng.random_bool(0.5) { m } else { -m }
    };

    let x_train: Vec<f64> = (0..cfg.n_train).map(|_| inner(&mut rng)).collect();
    let y_train: Vec<f64> = x_train.iter().map(|&x| noisy(x, &mut rng)).collect();
    let x_in: Vec<f64> = (0..cfg.n_test).map(|_| inner(&mut rng)).collect();
    let y_in: Vec<f64> = x_in.iter().map(|&x| noisy(x, &mut rng)).collect();
    let x_out: Vec<f64> = (0..cfg.n_test).map(|_| outer(&mut rng)).collect();
    let y_out: Vec<f64> = x_out.iter().map(|&x| noisy(x, &mut rng)).collect();

    let (a, b) = fit_line(&x_train, &y_train);
    let line = |xs: &[f64]| xs.iter().map(|x| a + b * x).collect::<Vec<_>>();

    let (ens, _) = train_ensemble(&column(&x_train)?, &y_train, &cfg.train)?;
    let snn = |xs: &[f64]| -> Result<Vec<f64>> {
        Ok(ens.predict(&column(xs)?)?.into_iter().map(|p| p.mu).collect())
    };

    let grid: Vec<f64> = (0..=200).map(|i| -2.0 + 4.0 * i as f64 / 200.0).collect();
    let zip = |xs: &[f64], ys: &[f64]| xs.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
    let svg = Chart::new(&format!("Extrapolation ({} ground truth)", f.as_str()), "x", "y")
        .with(Series::scatter("training range", zip(&x_train, &y_train), "#1f77b4"))
        .with(Series::scatter("new data", zip(&x_out, &y_out), "#ff7f0e"))
        .with(Series::line("linear regression", zip(&grid, &line(&grid)), "#2ca02c"))
        .with(Series::line("SNN", zip(&grid, &snn(&grid)?), "#d62728"))
        .to_svg();

    Ok(DemoReport {
        truth: f,
        linear_in_mse: mse(&line(&x_in), &y_in),
        linear_out_mse: mse(&line(&x_out), &y_out),
        snn_in_mse: mse(&snn(&x_in)?, &y_in),
        snn_out_mse: mse(&snn(&x_out)?, &y_out),
        svg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_a_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (a, b) = fit_line(&x, &y);
        assert!((a - 3.0).abs() < 1e-12 && (b + 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_truth_extrapolates_linearly() {
        let mut cfg = DemoConfig::new(1, GroundTruth::Linear);
        cfg.train.max_epochs = 3;
        let r = demo_extrapolation(&cfg).unwrap();
        let noise_var = cfg.noise * cfg.noise;
        assert!(r.linear_out_mse < 2.0 * noise_var, "{}", r.linear_out_mse);
        assert!(r.svg.starts_with("<svg"));
        assert!("quartic".parse::<GroundTruth>().is_err());
    }
}
