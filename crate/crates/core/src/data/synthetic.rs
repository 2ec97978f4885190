//! Synthetic regression benchmark with an in-distribution and a shifted
//! partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Dataset, FeatureMatrix, SplitTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_in: usize,
    pub n_out: usize,
    pub dims: usize,
    /// Target noise standard deviation on the inner partition.
    pub noise: f64,
    /// Distance the shifted partition is translated by.
    pub shift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_train: 5000,
            n_in: 1000,
            n_out: 1000,
            dims: 8,
            noise: 0.3,
            shift: 3.0,
            seed: 0,
        }
    }
}

/// Fixed random target: linear and pairwise terms plus a few sinusoids.
#[derive(Debug, Clone)]
pub struct TargetFunction {
    linear: Vec<f64>,
    pairs: Vec<(usize, usize, f64)>,
    waves: Vec<(Vec<f64>, f64, f64)>,
}

impl TargetFunction {
    fn sample(dims: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (dims as f64).sqrt();
        let linear = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        let pairs = (0..dims.max(2))
            .map(|_| {
                let a = rng.random_range(0..dims);
                let b = rng.random_range(0..dims);
                (a, b, 0.5 * rng.sample::<f64, _>(StandardNormal) * scale)
            })
            .collect();
        let waves = (0..3)
            .map(|_| {
                let w = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
                (w, rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.3..0.8))
            })
            .collect();
        Self { linear, pairs, waves }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(a, v)| a * v).sum();
        let quad: f64 = self.pairs.iter().map(|&(a, b, c)| c * x[a] * x[b]).sum();
        let wave: f64 = self
            .waves
            .iter()
            .map(|(w, phase, amp)| amp * (w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + phase).sin())
            .sum();
        lin + quad + wave
    }
}

pub struct SyntheticBenchmark {
    pub train: Dataset,
    pub dev_in: Dataset,
    pub dev_out: Dataset,
    pub target: TargetFunction,
    /// Unit vector the shifted inputs are translated along.
    pub shift_direction: Vec<f64>,
}

fn draw(
    rng: &mut ChaCha8Rng,
    f: &TargetFunction,
    n: usize,
    dims: usize,
    offset: &[f64],
    noise: f64,
    tag: SplitTag,
) -> Result<Dataset> {
    let mut data = Vec::with_capacity(n * dims);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = data.len();
        for o in offset {
            data.push(rng.sample::<f64, _>(StandardNormal) + o);
        }
        let eps: f64 = rng.sample(StandardNormal);
        y.push(f.eval(&data[start..]) + noise * eps);
    }
    Ok(Dataset {
        features: FeatureMatrix::unnamed(n, dims, data)?,
        target: Some(y),
        target_name: Some("target".into()),
        tag,
    })
}

/// Draws train / dev_in from `N(0, I)` and dev_out from the same law
/// translated by `shift` along a random unit direction, with twice the
/// target noise.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticBenchmark> {
    if spec.n_train == 0 || spec.n_in == 0 || spec.n_out == 0 || spec.dims == 0 {
        return Err(Error::Config("synthetic sizes must be positive".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite() && spec.shift.is_finite()) {
        return Err(Error::Config("noise must be non-negative and shift finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = TargetFunction::sample(spec.dims, &mut rng);
    let mut dir: Vec<f64> = (0..spec.dims).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);

    let zero = vec![0.0; spec.dims];
    let offset: Vec<f64> = dir.iter().map(|v| v * spec.shift).collect();
    let d = spec.dims;
    let train = draw(&mut rng, &f, spec.n_train, d, &zero, spec.noise, SplitTag::Train)?;
    let dev_in = draw(&mut rng, &f, spec.n_in, d, &zero, spec.noise, SplitTag::DevIn)?;
    let dev_out = draw(&mut rng, &f, spec.n_out, d, &offset, 2.0 * spec.noise, SplitTag::DevOut)?;
    Ok(SyntheticBenchmark {
        train,
        dev_in,
        dev_out,
        target: f,
        shift_direction: dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroid(f: &FeatureMatrix) -> Vec<f64> {
        (0..f.cols())
            .map(|c| f.column(c).iter().sum::<f64>() / f.rows() as f64)
            .collect()
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec { n_train: 50, n_in: 20, n_out: 20, ..Default::default() };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev_out, b.dev_out);
        let c = gen_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn shift_moves_the_centroid() {
        let spec = SyntheticSpec { n_train: 4000, n_in: 500, n_out: 4000, ..Default::default() };
        let b = gen_synthetic(&spec).unwrap();
        let (ct, co) = (centroid(&b.train.features), centroid(&b.dev_out.features));
        let dist = ct.iter().zip(&co).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((dist - 3.0).abs() < 0.3, "distance {dist}");
    }

    #[test]
    fn zero_shift_keeps_the_law() {
        let spec = SyntheticSpec { n_train: 10, n_in: 3000, n_out: 3000, shift: 0.0, ..Default::default() };
        let b = gen_synthetic(&spec).unwrap();
        let (ci, co) = (centroid(&b.dev_in.features), centroid(&b.dev_out.features));
        // difference of two means of unit-variance draws
        let bound = 4.0 * (2.0f64 / 3000.0).sqrt();
        for (a, b) in ci.iter().zip(&co) {
            assert!((a - b).abs() < bound);
        }
    }

    #[test]
    fn noise_is_doubled_on_the_shifted_split() {
        let spec = SyntheticSpec { n_train: 10, n_in: 4000, n_out: 4000, noise: 0.5, ..Default::default() };
        let b = gen_synthetic(&spec).unwrap();
        let resid_sd = |d: &Dataset| {
            let y = d.target.as_ref().unwrap();
            let r: Vec<f64> = (0..d.rows()).map(|i| y[i] - b.target.eval(d.features.row(i))).collect();
            (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
        };
        assert!((resid_sd(&b.dev_in) - 0.5).abs() < 0.03);
        assert!((resid_sd(&b.dev_out) - 1.0).abs() < 0.06);
    }

    #[test]
    fn rejects_empty_sizes() {
        assert!(gen_synthetic(&SyntheticSpec { dims: 0, ..Default::default() }).is_err());
    }
}
