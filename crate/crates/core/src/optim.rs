//! Differentially private optimizer loops.
//!
//! One step/state machinery parameterized by [`ScalingRule`] drives three
//! variants:
//!
//! - `Plain`: per-sample gradients are scaled, summed, perturbed with one
//!   Gaussian draw, and applied as w <- w - (eta/B) g_hat;
//! - `MomentumGd`: full-batch descent where each sample keeps an
//!   exponentially averaged momentum m_i that is refreshed with the fresh
//!   gradient and then scaled in place of the raw gradient;
//! - `InnerOuterSgd`: each sample keeps a bounded history of its last
//!   K0+1 observed gradients; the inner momentum is the exponentially
//!   weighted sum over that history (weights by observation recency), and
//!   the scaled batch sum folds into an outer momentum
//!   M_k = (1-gamma1) M_{k-1} + g_k + noise that drives the update.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_batch, Dataset};
use crate::metrics::RunRecord;
use crate::model::{per_sample_gradient, LossKind, Model};
use crate::privacy::sample_noise;
use crate::rng::{stream_rng, STREAM_BATCH, STREAM_NOISE};
use crate::scaling::ScalingRule;
use crate::vector::GradVector;
use crate::{Error, Result};

/// Loss blowup factor that aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    MomentumGd { gamma: f64 },
    InnerOuterSgd { gamma0: f64, gamma1: f64, k0: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub rule: ScalingRule,
    pub eta: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Standard deviation of the per-step Gaussian draw; the caller derives
    /// it from the rule's sensitivity and the noise multiplier.
    pub noise_std: f64,
    pub variant: Variant,
}

impl OptimizerConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} out of range 1..={dataset_len}",
                self.batch_size
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
        }
        match self.variant {
            Variant::Plain => {}
            Variant::MomentumGd { gamma } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gamma must lie in (0, 1], got {gamma}"
                    )));
                }
            }
            Variant::InnerOuterSgd { gamma0, gamma1, .. } => {
                if !(gamma0 > 0.0 && gamma0 <= 1.0) || !(gamma1 > 0.0 && gamma1 <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "gamma0/gamma1 must lie in (0, 1], got {gamma0}/{gamma1}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-sample momentum state, keyed by sample index.
///
/// For models whose gradient factorizes as coeff (x) x (linear and logistic
/// families), momenta and histories live in coefficient space: the feature
/// factor is fixed per sample, so only the short coefficient vectors are
/// stored. Dense storage is the fallback for the MLP.
#[derive(Clone, Debug, Default)]
pub struct MomentumStore {
    /// MomentumGd, dense: m_i, absent until the sample's first gradient.
    per_sample: Vec<Option<GradVector>>,
    /// MomentumGd, factored: m_i as a coefficient vector.
    coeff_per_sample: Vec<Option<Vec<f64>>>,
    /// InnerOuterSgd, dense: last <= K0+1 observed gradients, oldest first.
    histories: Vec<VecDeque<GradVector>>,
    /// InnerOuterSgd, factored: the same histories in coefficient space.
    coeff_histories: Vec<VecDeque<Vec<f64>>>,
    /// InnerOuterSgd: outer momentum M_k, initialized to zero.
    outer: Option<GradVector>,
}

impl MomentumStore {
    fn for_variant(variant: &Variant, n: usize, dim: usize, factored: bool) -> MomentumStore {
        match (variant, factored) {
            (Variant::Plain, _) => MomentumStore::default(),
            (Variant::MomentumGd { .. }, false) => MomentumStore {
                per_sample: vec![None; n],
                ..Default::default()
            },
            (Variant::MomentumGd { .. }, true) => MomentumStore {
                coeff_per_sample: vec![None; n],
                ..Default::default()
            },
            (Variant::InnerOuterSgd { .. }, false) => MomentumStore {
                histories: vec![VecDeque::new(); n],
                outer: Some(GradVector::zeros(dim)),
                ..Default::default()
            },
            (Variant::InnerOuterSgd { .. }, true) => MomentumStore {
                coeff_histories: vec![VecDeque::new(); n],
                outer: Some(GradVector::zeros(dim)),
                ..Default::default()
            },
        }
    }

    pub fn outer(&self) -> Option<&GradVector> {
        self.outer.as_ref()
    }

    pub fn history(&self, sample: usize) -> Option<&VecDeque<GradVector>> {
        self.histories.get(sample)
    }
}

/// Exponentially weighted sum over a sample's cached gradients, newest
/// entry (last) carrying weight 1.
pub fn inner_momentum(history: &VecDeque<GradVector>, gamma0: f64, dim: usize) -> GradVector {
    let mut m = GradVector::zeros(dim);
    let len = history.len();
    for (j, g) in history.iter().enumerate() {
        m.add_scaled(g, gamma0.powi((len - 1 - j) as i32));
    }
    m
}

/// [`inner_momentum`] in coefficient space.
fn inner_momentum_coeffs(history: &VecDeque<Vec<f64>>, gamma0: f64, len: usize) -> Vec<f64> {
    let mut m = vec![0.0; len];
    let entries = history.len();
    for (j, coeff) in history.iter().enumerate() {
        let w = gamma0.powi((entries - 1 - j) as i32);
        for (mc, &c) in m.iter_mut().zip(coeff) {
            *mc += w * c;
        }
    }
    m
}

/// Folds the factored gradient coeff (x) x into the weighted and raw sums
/// and returns its norm, ||coeff|| * ||x||.
fn accumulate_factored(
    rule: &ScalingRule,
    coeff: &[f64],
    x: &[f64],
    sum: &mut GradVector,
    raw_sum: &mut GradVector,
) -> Result<f64> {
    let cn = coeff.iter().map(|c| c * c).sum::<f64>().sqrt();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = cn * xn;
    let w = crate::scaling::weight(rule, norm)?;
    let d = x.len();
    for (c, &cc) in coeff.iter().enumerate() {
        let wc = w * cc;
        let srow = &mut sum.values_mut()[c * d..(c + 1) * d];
        let rrow = &mut raw_sum.values_mut()[c * d..(c + 1) * d];
        for ((s, r), &xj) in srow.iter_mut().zip(rrow.iter_mut()).zip(x) {
            *s += wc * xj;
            *r += cc * xj;
        }
    }
    Ok(norm)
}

/// One optimizer step's outputs.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub new_params: GradVector,
    /// g_hat (Plain, MomentumGd) or M_k (InnerOuterSgd).
    pub noisy_grad: GradVector,
    /// Sum of the raw (pre-scaling) per-sample gradients or momenta.
    pub raw_sum: GradVector,
    pub batch_indices: Vec<usize>,
    /// Norms of the raw (pre-scaling) per-sample gradients or momenta.
    pub presample_norms: Vec<f64>,
    /// Norm of the injected noise vector.
    pub noise_norm: f64,
    /// Norm of the scaled-gradient sum before noise.
    pub signal_norm: f64,
}

pub struct OptimizerState {
    config: OptimizerConfig,
    model: Model,
    loss: LossKind,
    momentum: MomentumStore,
    /// Coefficient length of the factored gradient, when available.
    coeff_len: Option<usize>,
    step: usize,
}

impl OptimizerState {
    pub fn new(
        config: OptimizerConfig,
        model: Model,
        loss: LossKind,
        dataset_len: usize,
    ) -> Result<Self> {
        config.validate(dataset_len)?;
        let dim = model.params().dim();
        let coeff_len = crate::model::coefficient_len(model.kind());
        let momentum =
            MomentumStore::for_variant(&config.variant, dataset_len, dim, coeff_len.is_some());
        Ok(OptimizerState {
            config,
            model,
            loss,
            momentum,
            coeff_len,
            step: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    fn gradients_for(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<GradVector>> {
        indices
            .par_iter()
            .map(|&i| {
                let (x, y) = dataset.sample(i);
                per_sample_gradient(&self.model, self.loss, x, y)
            })
            .collect()
    }

    fn coeffs_for(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<Vec<f64>>> {
        indices
            .par_iter()
            .map(|&i| {
                let (x, y) = dataset.sample(i);
                crate::model::gradient_coefficients(&self.model, self.loss, x, y)
            })
            .collect()
    }

    /// Scales, sums, perturbs, updates from dense per-sample vectors; the
    /// update rule is w <- w - (eta/B) g_hat.
    fn apply_update(
        &mut self,
        pre_scale: Vec<GradVector>,
        batch_indices: Vec<usize>,
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        let dim = self.model.params().dim();
        let mut presample_norms = Vec::with_capacity(pre_scale.len());
        let mut sum = GradVector::zeros(dim);
        let mut raw_sum = GradVector::zeros(dim);
        for g in &pre_scale {
            let norm = g.norm();
            let w = crate::scaling::weight(&self.config.rule, norm)?;
            sum.add_scaled(g, w);
            raw_sum.add(g);
            presample_norms.push(norm);
        }
        self.finish(sum, raw_sum, presample_norms, batch_indices, noise_rng)
    }

    /// The factored counterpart of [`Self::apply_update`]: per-sample
    /// coefficient vectors paired with the batch's feature rows.
    fn apply_update_factored(
        &mut self,
        dataset: &Dataset,
        coeffs: Vec<Vec<f64>>,
        batch_indices: Vec<usize>,
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        let dim = self.model.params().dim();
        let mut presample_norms = Vec::with_capacity(coeffs.len());
        let mut sum = GradVector::zeros(dim);
        let mut raw_sum = GradVector::zeros(dim);
        for (&i, coeff) in batch_indices.iter().zip(&coeffs) {
            let (x, _) = dataset.sample(i);
            presample_norms.push(accumulate_factored(
                &self.config.rule,
                coeff,
                x,
                &mut sum,
                &mut raw_sum,
            )?);
        }
        self.finish(sum, raw_sum, presample_norms, batch_indices, noise_rng)
    }

    /// Common tail: noise injection, outer-momentum fold, parameter update.
    fn finish(
        &mut self,
        sum: GradVector,
        raw_sum: GradVector,
        presample_norms: Vec<f64>,
        batch_indices: Vec<usize>,
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        let dim = self.model.params().dim();
        let signal_norm = sum.norm();
        let noise = sample_noise(self.config.noise_std, dim, noise_rng)?;
        let noise_norm = noise.vector.norm();

        let noisy_grad = match self.config.variant {
            Variant::Plain | Variant::MomentumGd { .. } => {
                let mut g_hat = sum;
                g_hat.add(&noise.vector);
                g_hat
            }
            Variant::InnerOuterSgd { gamma1, .. } => {
                let prev = self.momentum.outer.take().expect("outer momentum present");
                let mut m = prev.scaled(1.0 - gamma1);
                m.add(&sum);
                m.add(&noise.vector);
                self.momentum.outer = Some(m.clone());
                m
            }
        };
        noisy_grad.ensure_finite("noisy gradient")?;

        let b = batch_indices.len() as f64;
        let mut new_params = self.model.params().clone();
        new_params.add_scaled(&noisy_grad, -self.config.eta / b);
        self.model.set_params(new_params.clone())?;
        self.step += 1;
        Ok(StepResult {
            new_params,
            noisy_grad,
            raw_sum,
            batch_indices,
            presample_norms,
            noise_norm,
            signal_norm,
        })
    }

    /// One step of the plain loop on a pre-sampled batch.
    pub fn step_plain(
        &mut self,
        dataset: &Dataset,
        batch: &[usize],
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        if self.coeff_len.is_some() {
            let coeffs = self.coeffs_for(dataset, batch)?;
            return self.apply_update_factored(dataset, coeffs, batch.to_vec(), noise_rng);
        }
        let grads = self.gradients_for(dataset, batch)?;
        self.apply_update(grads, batch.to_vec(), noise_rng)
    }

    /// One full-dataset momentum GD step. Every per-sample momentum is
    /// refreshed with the fresh gradient first, then scaled.
    pub fn step_momentum_gd(
        &mut self,
        dataset: &Dataset,
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        let Variant::MomentumGd { gamma } = self.config.variant else {
            return Err(Error::InvalidArgument(
                "step_momentum_gd requires the momentum-gd variant".into(),
            ));
        };
        let all: Vec<usize> = (0..dataset.len()).collect();
        if self.coeff_len.is_some() {
            let coeffs = self.coeffs_for(dataset, &all)?;
            let mut momenta = Vec::with_capacity(coeffs.len());
            for (i, c) in coeffs.into_iter().enumerate() {
                let m = match self.momentum.coeff_per_sample[i].take() {
                    None => c, // m_{0,i} = g_{0,i}
                    Some(prev) => c
                        .iter()
                        .zip(&prev)
                        .map(|(cc, pc)| gamma * cc + (1.0 - gamma) * pc)
                        .collect(),
                };
                self.momentum.coeff_per_sample[i] = Some(m.clone());
                momenta.push(m);
            }
            return self.apply_update_factored(dataset, momenta, all, noise_rng);
        }
        let grads = self.gradients_for(dataset, &all)?;
        let mut momenta = Vec::with_capacity(grads.len());
        for (i, g) in grads.into_iter().enumerate() {
            let m = match self.momentum.per_sample[i].take() {
                None => g, // m_{0,i} = g_{0,i}
                Some(prev) => {
                    let mut m = g.scaled(gamma);
                    m.add_scaled(&prev, 1.0 - gamma);
                    m
                }
            };
            self.momentum.per_sample[i] = Some(m.clone());
            momenta.push(m);
        }
        self.apply_update(momenta, all, noise_rng)
    }

    /// One inner-outer momentum step on a pre-sampled batch.
    pub fn step_inner_outer(
        &mut self,
        dataset: &Dataset,
        batch: &[usize],
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        let Variant::InnerOuterSgd { gamma0, k0, .. } = self.config.variant else {
            return Err(Error::InvalidArgument(
                "step_inner_outer requires the inner-outer variant".into(),
            ));
        };
        let dim = self.model.params().dim();
        if let Some(len) = self.coeff_len {
            let coeffs = self.coeffs_for(dataset, batch)?;
            let mut momenta = Vec::with_capacity(batch.len());
            for (&i, c) in batch.iter().zip(coeffs) {
                let history = &mut self.momentum.coeff_histories[i];
                history.push_back(c);
                while history.len() > k0 + 1 {
                    history.pop_front();
                }
                momenta.push(inner_momentum_coeffs(history, gamma0, len));
            }
            return self.apply_update_factored(dataset, momenta, batch.to_vec(), noise_rng);
        }
        let grads = self.gradients_for(dataset, batch)?;
        let mut momenta = Vec::with_capacity(batch.len());
        for (&i, g) in batch.iter().zip(grads) {
            let history = &mut self.momentum.histories[i];
            history.push_back(g);
            while history.len() > k0 + 1 {
                history.pop_front();
            }
            momenta.push(inner_momentum(history, gamma0, dim));
        }
        self.apply_update(momenta, batch.to_vec(), noise_rng)
    }

    /// Variant dispatch for one step.
    pub fn step(
        &mut self,
        dataset: &Dataset,
        batch_rng: &mut impl rand::Rng,
        noise_rng: &mut impl rand::Rng,
    ) -> Result<StepResult> {
        match self.config.variant {
            Variant::Plain => {
                let batch = sample_batch(dataset.len(), self.config.batch_size, batch_rng)?;
                self.step_plain(dataset, &batch, noise_rng)
            }
            Variant::MomentumGd { .. } => self.step_momentum_gd(dataset, noise_rng),
            Variant::InnerOuterSgd { .. } => {
                let batch = sample_batch(dataset.len(), self.config.batch_size, batch_rng)?;
                self.step_inner_outer(dataset, &batch, noise_rng)
            }
        }
    }
}

/// Extra knobs for [`run`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    /// Held-out set for accuracy reporting.
    pub eval: Option<&'a Dataset>,
    /// Collect per-epoch similarity histograms with this many bins.
    pub similarity_bins: Option<usize>,
}

/// Classification accuracy of the model on a dataset (argmax prediction).
pub fn accuracy(model: &Model, dataset: &Dataset) -> Result<f64> {
    use crate::model::ModelKind;
    let mut correct = 0usize;
    for (x, y) in dataset.samples() {
        let pred = match model.kind() {
            ModelKind::LogisticRegression { num_classes: 2, .. } => {
                let z: f64 = model.params().values().iter().zip(x).map(|(a, b)| a * b).sum();
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::LogisticRegression {
                input_dim,
                num_classes,
            } => {
                let w = model.params().values();
                let mut best = (0usize, f64::NEG_INFINITY);
                for c in 0..*num_classes {
                    let z: f64 = w[c * input_dim..(c + 1) * input_dim]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum();
                    if z > best.1 {
                        best = (c, z);
                    }
                }
                best.0 as f64
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "accuracy is defined for classification models".into(),
                ))
            }
        };
        if pred == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Executes `config.steps` steps, recording one [`RunRecord`] per epoch
/// (per step for the GD variant). Fully reproducible from (config, seed).
pub fn run(
    config: &OptimizerConfig,
    dataset: &Dataset,
    model: Model,
    loss: LossKind,
    seed: u64,
    options: RunOptions<'_>,
) -> Result<Vec<RunRecord>> {
    if config.steps == 0 {
        return Ok(Vec::new());
    }
    let mut state = OptimizerState::new(*config, model, loss, dataset.len())?;
    let mut batch_rng = stream_rng(seed, STREAM_BATCH);
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);

    let all_samples: Vec<(&[f64], f64)> = dataset.samples().collect();
    let initial_loss = state.model.mean_loss(loss, &all_samples)?;
    let steps_per_epoch = match config.variant {
        Variant::MomentumGd { .. } => 1,
        _ => dataset.len().div_ceil(config.batch_size),
    };

    let mut records = Vec::new();
    let mut epoch_norms: Vec<f64> = Vec::new();
    let mut epoch_weights: Vec<f64> = Vec::new();
    let mut epoch_ns_ratio: Vec<f64> = Vec::new();
    let mut epoch_private: Vec<GradVector> = Vec::new();
    let mut epoch_nonprivate: Vec<GradVector> = Vec::new();

    for k in 0..config.steps {
        let result = state.step(dataset, &mut batch_rng, &mut noise_rng)?;
        epoch_norms.extend(&result.presample_norms);
        for &norm in &result.presample_norms {
            epoch_weights.push(crate::scaling::weight(&state.config.rule, norm)?);
        }
        if result.signal_norm > 0.0 {
            epoch_ns_ratio.push(result.noise_norm / result.signal_norm);
        }
        if options.similarity_bins.is_some() {
            let b = result.batch_indices.len() as f64;
            epoch_private.push(result.noisy_grad.scaled(1.0 / b));
            epoch_nonprivate.push(result.raw_sum.scaled(1.0 / b));
        }

        let end_of_epoch = (k + 1) % steps_per_epoch == 0 || k + 1 == config.steps;
        if end_of_epoch {
            let train_loss = state.model.mean_loss(loss, &all_samples)?;
            if train_loss > DIVERGENCE_FACTOR * initial_loss.max(1e-12) {
                return Err(Error::Divergence {
                    loss: train_loss,
                    initial: initial_loss,
                    factor: DIVERGENCE_FACTOR,
                    step: k + 1,
                });
            }
            let test_accuracy = match options.eval {
                Some(eval) => Some(accuracy(state.model(), eval)?),
                None => None,
            };
            let similarity_histogram = match options.similarity_bins {
                Some(bins) if !epoch_private.is_empty() => Some(
                    crate::metrics::similarity_histogram(&epoch_private, &epoch_nonprivate, bins)?,
                ),
                _ => None,
            };
            let mean = |v: &[f64]| {
                if v.is_empty() {
                    0.0
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            records.push(RunRecord {
                step: k + 1,
                epoch: records.len() + 1,
                train_loss,
                test_accuracy,
                mean_grad_norm: mean(&epoch_norms),
                mean_scaling_weight: mean(&epoch_weights),
                noise_to_signal_ratio: mean(&epoch_ns_ratio),
                similarity_histogram,
            });
            epoch_norms.clear();
            epoch_weights.clear();
            epoch_ns_ratio.clear();
            epoch_private.clear();
            epoch_nonprivate.clear();
        }
    }
    Ok(records)
}
