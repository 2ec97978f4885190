//! Deep ensemble training and aggregation.
//!
//! One preprocessing pipeline is fitted on the full training pool. Every
//! member then draws its own stratified train/validation split over coarse
//! target classes and its own initialization seed, trains on the multitask
//! loss with RAdam + Lookahead, and keeps the weights of its best validation
//! epoch (Gaussian NLL in standardized units).
//!
//! Predictions are combined with the law of total variance: the ensemble
//! mean of the member means, and the mean member variance (aleatoric) plus
//! the variance of member means (epistemic).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::losses::{gaussian_nll, AuxKind, MultitaskLoss};
use crate::model::{SnnModel, SnnSpec};
use crate::numerics::{Matrix, Tape};
use crate::optim::{OptimizerConfig, OptimizerState};
use crate::preprocess::{coarse_classes, fit_pipeline, FittedPipeline, PreprocessConfig};

/// Network shape shared by all members.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub hidden_dim: usize,
    pub trunk_layers: usize,
    pub upper_layers: usize,
    pub projection_dim: usize,
    pub alpha_dropout_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let s = SnnSpec::new(1);
        Self {
            hidden_dim: s.hidden_dim,
            trunk_layers: s.trunk_layers,
            upper_layers: s.upper_layers,
            projection_dim: s.projection_dim,
            alpha_dropout_rate: s.alpha_dropout_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub members: usize,
    pub network: NetworkConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Number of coarse target classes for stratification and the
    /// auxiliary task.
    pub classes: usize,
    pub loss: MultitaskLoss,
    pub optimizer: OptimizerConfig,
    pub preprocess: PreprocessConfig,
    pub seed: u64,
    /// Train members on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            members: 20,
            network: NetworkConfig::default(),
            batch_size: 512,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
            classes: 10,
            loss: MultitaskLoss::default(),
            optimizer: OptimizerConfig::default(),
            preprocess: PreprocessConfig::default(),
            seed: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.members == 0 {
            return bad("members must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.classes < 2 {
            return bad("classes must be at least 2".into());
        }
        self.loss.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }
}

/// Per-sample predictive distribution in target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrediction {
    pub mu: f64,
    pub sigma: f64,
    /// Total predictive variance; the retention score.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pipeline: FittedPipeline,
    members: Vec<SnnModel>,
    member_seeds: Vec<u64>,
}

/// Train/validation row indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Per class, `⌈fraction·n_c⌉` shuffled rows go to validation. At least one
/// row of every class stays in training, so singleton classes are training
/// only.
pub fn stratified_split(classes: &[usize], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::contract(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in classes.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (_, mut rows) in groups {
        rows.shuffle(&mut rng);
        let n = rows.len();
        let take = ((fraction * n as f64).ceil() as usize).min(n - 1);
        validation.extend_from_slice(&rows[..take]);
        train.extend_from_slice(&rows[take..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(Split { train, validation })
}

/// Training trace of one member.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberReport {
    pub index: usize,
    pub seed: u64,
    /// Validation NLL before training (entry 0) and after each epoch.
    pub validation_nll: Vec<f64>,
    pub best_epoch: usize,
    pub aborted: Option<String>,
}

impl MemberReport {
    pub fn epochs_run(&self) -> usize {
        self.validation_nll.len().saturating_sub(1)
    }

    pub fn best_nll(&self) -> f64 {
        self.validation_nll[self.best_epoch]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub members: Vec<MemberReport>,
}

impl TrainReport {
    pub fn aborted(&self) -> usize {
        self.members.iter().filter(|m| m.aborted.is_some()).count()
    }
}

/// Member seeds derived from the run seed.
pub fn member_seeds(seed: u64, members: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..members).map(|_| rng.random()).collect()
}

struct PreparedData {
    x: Matrix,
    y: Vec<f64>,
    classes: Vec<usize>,
    class_count: usize,
}

/// Fits the shared pipeline and trains every member.
pub fn train_ensemble(x: &FeatureMatrix, y: &[f64], cfg: &TrainConfig) -> Result<(EnsembleModel, TrainReport)> {
    cfg.validate()?;
    if x.rows() != y.len() {
        return Err(Error::shape("train_ensemble", format!("{} rows, {} targets", x.rows(), y.len())));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::contract(format!("target value {i} is missing or non-finite")));
    }
    let pipeline = fit_pipeline(x, y, &cfg.preprocess)?;
    let coarse = coarse_classes(y, cfg.classes)?;
    let data = PreparedData {
        x: pipeline.transform_features(x)?,
        y: pipeline.transform_target(y),
        class_count: coarse.class_count(),
        classes: coarse.ids,
    };
    let seeds = member_seeds(cfg.seed, cfg.members);
    let run = |(index, &seed): (usize, &u64)| train_member(&data, cfg, index, seed);
    let outcomes: Vec<(Option<SnnModel>, MemberReport)> = if cfg.parallel {
        seeds.par_iter().enumerate().map(run).collect::<Result<_>>()?
    } else {
        seeds.iter().enumerate().map(run).collect::<Result<_>>()?
    };

    let mut members = Vec::new();
    let mut kept_seeds = Vec::new();
    let mut reports = Vec::new();
    for (model, report) in outcomes {
        if let Some(m) = model {
            members.push(m);
            kept_seeds.push(report.seed);
        }
        reports.push(report);
    }
    let report = TrainReport { members: reports };
    let aborted = report.aborted();
    if aborted * 4 > cfg.members || members.is_empty() {
        let reasons: Vec<String> = report
            .members
            .iter()
            .filter_map(|m| m.aborted.as_ref().map(|r| format!("member {}: {r}", m.index)))
            .collect();
        return Err(Error::Training(format!(
            "{aborted} of {} members aborted ({})",
            cfg.members,
            reasons.join("; ")
        )));
    }
    Ok((
        EnsembleModel {
            pipeline,
            members,
            member_seeds: kept_seeds,
        },
        report,
    ))
}

fn member_spec(cfg: &TrainConfig, input_dim: usize, class_count: usize, seed: u64) -> SnnSpec {
    let n = &cfg.network;
    SnnSpec {
        input_dim,
        hidden_dim: n.hidden_dim,
        trunk_layers: n.trunk_layers,
        upper_layers: n.upper_layers,
        projection_dim: if cfg.loss.aux_kind == AuxKind::Crossentropy {
            class_count
        } else {
            n.projection_dim
        },
        alpha_dropout_rate: n.alpha_dropout_rate,
        seed,
    }
}

fn validation_nll(model: &SnnModel, x: &Matrix, y: &[f64]) -> Result<f64> {
    let out = model.forward(x)?;
    gaussian_nll(&out.mu, &out.sigma, y)
}

fn train_member(
    data: &PreparedData,
    cfg: &TrainConfig,
    index: usize,
    seed: u64,
) -> Result<(Option<SnnModel>, MemberReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = stratified_split(&data.classes, cfg.validation_fraction, rng.random())?;
    let val_rows = if split.validation.is_empty() { &split.train } else { &split.validation };
    let x_val = data.x.select_rows(val_rows);
    let y_val: Vec<f64> = val_rows.iter().map(|&i| data.y[i]).collect();

    let spec = member_spec(cfg, data.x.cols(), data.class_count, seed);
    let mut model = SnnModel::lecun_init(&spec)?;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &model.params())?;

    let mut report = MemberReport {
        index,
        seed,
        validation_nll: vec![validation_nll(&model, &x_val, &y_val)?],
        best_epoch: 0,
        aborted: None,
    };
    let mut best = model.clone();
    let mut order = split.train.clone();
    let mut stale = 0;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = data.x.select_rows(batch);
            let yb: Vec<f64> = batch.iter().map(|&i| data.y[i]).collect();
            let cb: Vec<usize> = batch.iter().map(|&i| data.classes[i]).collect();

            let mut tape = Tape::new();
            let heads = model.record(&mut tape, &xb, Some(&mut rng))?;
            let loss = cfg.loss.record(&mut tape, &heads, &yb, &cb)?;
            let value = tape.value(loss).get(0, 0);
            if !value.is_finite() {
                report.aborted = Some(format!("non-finite training loss at epoch {epoch}"));
                break 'epochs;
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Matrix> = heads
                .params
                .iter()
                .zip(model.params())
                .map(|(&id, p)| grads.get_or_zeros(id, p.shape()))
                .collect();
            opt.step(&mut model.params_mut(), &grads)?;
        }
        let nll = validation_nll(&model, &x_val, &y_val)?;
        report.validation_nll.push(nll);
        if !nll.is_finite() {
            report.aborted = Some(format!("non-finite validation NLL at epoch {epoch}"));
            break;
        }
        if nll < report.best_nll() {
            report.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let kept = report.aborted.is_none().then_some(best);
    Ok((kept, report))
}

/// Sums after sorting so the result does not depend on member order.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Combines per-member `(μ, σ)` in standardized units into predictions in
/// target units. `mus[m][i]` is member `m`'s mean for sample `i`.
pub fn combine_members(
    mus: &[Vec<f64>],
    sigmas: &[Vec<f64>],
    target_mean: f64,
    target_scale: f64,
) -> Result<Vec<GaussianPrediction>> {
    let m = mus.len();
    if m == 0 || sigmas.len() != m {
        return Err(Error::contract("need matching, non-empty member outputs"));
    }
    let n = mus[0].len();
    if mus.iter().chain(sigmas).any(|v| v.len() != n) {
        return Err(Error::shape("combine_members", "members disagree on sample count"));
    }
    let mut out = Vec::with_capacity(n);
    let mut buf = vec![0.0; m];
    for i in 0..n {
        for (b, mu) in buf.iter_mut().zip(mus) {
            *b = mu[i];
        }
        let mean = ordered_sum(&mut buf) / m as f64;
        for (b, mu) in buf.iter_mut().zip(mus) {
            *b = (mu[i] - mean).powi(2);
        }
        let epistemic = ordered_sum(&mut buf) / m as f64;
        for (b, s) in buf.iter_mut().zip(sigmas) {
            *b = s[i] * s[i];
        }
        let aleatoric = ordered_sum(&mut buf) / m as f64;
        let v = aleatoric + epistemic;
        out.push(GaussianPrediction {
            mu: mean * target_scale + target_mean,
            sigma: v.sqrt() * target_scale,
            uncertainty: v * target_scale * target_scale,
        });
    }
    Ok(out)
}

/// Per-member outputs in standardized units.
pub struct MemberOutputs {
    pub mus: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
}

impl EnsembleModel {
    pub fn new(pipeline: FittedPipeline, members: Vec<SnnModel>, member_seeds: Vec<u64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::contract("an ensemble needs at least one member"));
        }
        if member_seeds.len() != members.len() {
            return Err(Error::contract("one seed per member required"));
        }
        let dim = pipeline.output_dim();
        if members.iter().any(|m| m.input_dim() != dim) {
            return Err(Error::contract("member input width differs from the pipeline output"));
        }
        Ok(Self {
            pipeline,
            members,
            member_seeds,
        })
    }

    pub fn pipeline(&self) -> &FittedPipeline {
        &self.pipeline
    }

    pub fn members(&self) -> &[SnnModel] {
        &self.members
    }

    pub fn member_seeds(&self) -> &[u64] {
        &self.member_seeds
    }

    /// Ensemble restricted to the listed members, sharing the pipeline.
    pub fn subset(&self, indices: &[usize]) -> Result<EnsembleModel> {
        if indices.iter().any(|&i| i >= self.members.len()) {
            return Err(Error::contract("member index out of range"));
        }
        EnsembleModel::new(
            self.pipeline.clone(),
            indices.iter().map(|&i| self.members[i].clone()).collect(),
            indices.iter().map(|&i| self.member_seeds[i]).collect(),
        )
    }

    pub fn member_outputs(&self, x: &FeatureMatrix) -> Result<MemberOutputs> {
        let xt = self.pipeline.transform_features(x)?;
        let outs = self
            .members
            .par_iter()
            .map(|m| m.forward(&xt))
            .collect::<Result<Vec<_>>>()?;
        let (mus, sigmas) = outs.into_iter().map(|o| (o.mu, o.sigma)).unzip();
        Ok(MemberOutputs { mus, sigmas })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<GaussianPrediction>> {
        let outs = self.member_outputs(x)?;
        combine_members(
            &outs.mus,
            &outs.sigmas,
            self.pipeline.target_mean(),
            self.pipeline.target_scale(),
        )
    }

    /// Each member's mean prediction in target units.
    pub fn member_means(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        let outs = self.member_outputs(x)?;
        Ok(outs
            .mus
            .into_iter()
            .map(|mu| mu.into_iter().map(|m| self.pipeline.inverse_target(m, 0.0).0).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_per_class() {
        let classes: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let s = stratified_split(&classes, 0.1, 3).unwrap();
        assert_eq!(s.validation.len(), 2);
        assert_ne!(classes[s.validation[0]], classes[s.validation[1]]);
        assert_eq!(s.train.len(), 18);
        assert_eq!(s, stratified_split(&classes, 0.1, 3).unwrap());
        assert_ne!(s, stratified_split(&classes, 0.1, 4).unwrap());
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let classes: Vec<usize> = (0..1000).map(|i| (i * 7919) % 10).collect();
        let s = stratified_split(&classes, 0.1, 1).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        for c in 0..10 {
            let n_c = classes.iter().filter(|&&k| k == c).count();
            let v_c = s.validation.iter().filter(|&&i| classes[i] == c).count();
            assert!((v_c as f64 - 0.1 * n_c as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn singleton_class_stays_in_training() {
        let s = stratified_split(&[0, 0, 0, 1], 0.5, 0).unwrap();
        assert!(s.train.contains(&3));
        assert!(stratified_split(&[0, 1], 1.0, 0).is_err());
    }

    #[test]
    fn single_member_is_pure_aleatoric() {
        let p = combine_members(&[vec![0.5]], &[vec![2.0]], 10.0, 3.0).unwrap();
        assert_eq!(p[0].mu, 0.5 * 3.0 + 10.0);
        assert_eq!(p[0].uncertainty, 4.0 * 9.0);
        assert_eq!(p[0].sigma, 2.0 * 3.0);
    }

    #[test]
    fn two_member_total_variance() {
        let p = combine_members(&[vec![0.0], vec![2.0]], &[vec![1.0], vec![1.0]], 0.0, 1.0).unwrap();
        assert_eq!(p[0].mu, 1.0);
        // mean(1 + 0, 1 + 4) − 1² = 2
        assert!((p[0].uncertainty - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_members_have_no_epistemic_term() {
        let mu = vec![0.3, -1.2];
        let sigma = vec![0.7, 1.1];
        let p = combine_members(&[mu.clone(), mu.clone(), mu], &[sigma.clone(), sigma.clone(), sigma.clone()], 0.0, 1.0)
            .unwrap();
        for (pi, s) in p.iter().zip(&sigma) {
            assert!((pi.uncertainty - s * s).abs() < 1e-15);
        }
    }

    #[test]
    fn combination_is_member_order_independent() {
        let mus = vec![vec![0.1, 3.3], vec![-0.7, 1e-9], vec![2.2, -4.0], vec![1.0 / 3.0, 0.5]];
        let sigmas = vec![vec![0.2, 0.9], vec![1.3, 0.1], vec![0.4, 2.2], vec![0.6, 0.7]];
        let a = combine_members(&mus, &sigmas, 1.5, 2.5).unwrap();
        let perm = [2, 0, 3, 1];
        let pm: Vec<_> = perm.iter().map(|&i| mus[i].clone()).collect();
        let ps: Vec<_> = perm.iter().map(|&i| sigmas[i].clone()).collect();
        assert_eq!(a, combine_members(&pm, &ps, 1.5, 2.5).unwrap());
        for (i, p) in a.iter().enumerate() {
            let alea: f64 = sigmas.iter().map(|s| s[i] * s[i]).sum::<f64>() / 4.0 * 2.5 * 2.5;
            assert!(p.uncertainty >= alea);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { validation_fraction: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { members: 0, ..Default::default() }.validate().is_err());
    }
}
