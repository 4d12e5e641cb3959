//! Minibatch Adam training with an optional similarity-weighted fairness
//! penalty, and held-out evaluation.
//!
//! One optimization step on a minibatch of size `n`:
//!
//! 1. `loss_mlc = (1/n) sum_i bce(p_i, y_i)`
//! 2. `s_i = s(y_i, y_adv)` for the configured kernel
//! 3. `penalty` = violation of the weighted group means on this minibatch
//! 4. `loss = loss_mlc + lambda * penalty`, backpropagate, clip the global
//!    gradient norm, take one Adam step.
//!
//! A minibatch whose violation is undefined (some group carries no weight)
//! contributes no penalty for that step.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{check_len, Result, SimFairError};
use crate::fairness::{
    dp_violation, eop_violation, simfair_violation, weighted_violation_with_gradient,
    ViolationForm, ViolationReport, WeightedPenalty,
};
use crate::linalg::Matrix;
use crate::metrics::F1Report;
use crate::model::{bce_grad, bce_loss, init_backbone, threshold, Backbone};
use crate::similarity::{weights_for, LabelVector, SimilaritySpec};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub lambda: f64,
    /// Kernel of the fairness penalty; `None` trains without one.
    pub spec: Option<SimilaritySpec>,
    pub y_adv: Option<LabelVector>,
    /// Violation composition; defaults to pairwise for `K = 2`, sum form otherwise.
    pub form: Option<ViolationForm>,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            spec: None,
            y_adv: None,
            form: None,
            hidden: vec![64],
            epochs: 20,
            batch_size: 128,
            learning_rate: 1e-3,
            max_grad_norm: 5.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(SimFairError::config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(SimFairError::config(format!(
                "max gradient norm must be > 0, got {}",
                self.max_grad_norm
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SimFairError::config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(SimFairError::config("batch size must be positive"));
        }
        if let Some(spec) = &self.spec {
            spec.validate()?;
            if *spec != SimilaritySpec::Constant && self.y_adv.is_none() {
                return Err(SimFairError::config(format!(
                    "the {spec} penalty needs an advantaged label group"
                )));
            }
        }
        Ok(())
    }

    fn penalty_active(&self) -> bool {
        self.spec.is_some() && self.lambda > 0.0
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_len("adam parameters", state.first_moment.len(), params.len())?;
    check_len("adam gradients", params.len(), grads.len())?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainHistory {
    /// Mean combined minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub total_batches: usize,
    /// Minibatches whose penalty was undefined and therefore skipped.
    pub skipped_penalty_batches: usize,
}

/// Loss of one minibatch and `dLoss/dp` for each of its samples.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub loss: f64,
    pub classification_loss: f64,
    /// `None` when no penalty was configured; `Undefined` batches skip it.
    pub penalty: Option<Option<f64>>,
    pub upstream: Matrix,
}

/// Combined objective `mean bce + lambda * violation` for one minibatch of
/// predictions. `weights` are the per-sample kernel values `s(y_i, y_adv)`.
pub fn batch_objective(
    probs: &Matrix,
    labels: &[LabelVector],
    sensitive: &[crate::fairness::SensitiveAttr],
    penalty: Option<(&[f64], f64, usize, ViolationForm)>,
) -> Result<BatchObjective> {
    let n = probs.rows();
    check_len("batch labels", n, labels.len())?;
    let inv_n = 1.0 / n as f64;
    let mut upstream = Matrix::zeros(n, probs.cols());
    let mut classification_loss = 0.0;
    for (i, y) in labels.iter().enumerate() {
        classification_loss += bce_loss(probs.row(i), y)?;
        for (u, g) in upstream
            .row_mut(i)
            .iter_mut()
            .zip(bce_grad(probs.row(i), y)?)
        {
            *u = g * inv_n;
        }
    }
    classification_loss *= inv_n;
    let mut loss = classification_loss;
    let penalty = match penalty {
        None => None,
        Some((weights, lambda, num_groups, form)) => {
            match weighted_violation_with_gradient(probs, sensitive, weights, num_groups, form)? {
                WeightedPenalty::Undefined => Some(None),
                WeightedPenalty::Defined {
                    violation,
                    gradient,
                } => {
                    loss += lambda * violation;
                    for (u, g) in upstream.as_mut_slice().iter_mut().zip(gradient.as_slice()) {
                        *u += lambda * g;
                    }
                    Some(Some(violation))
                }
            }
        }
    };
    Ok(BatchObjective {
        loss,
        classification_loss,
        penalty,
        upstream,
    })
}

pub fn backbone_dims(dataset: &Dataset, config: &TrainConfig) -> Vec<usize> {
    std::iter::once(dataset.num_features())
        .chain(config.hidden.iter().copied())
        .chain(std::iter::once(dataset.num_labels()))
        .collect()
}

/// Trains a fresh backbone on `dataset`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(Backbone, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(SimFairError::config("training split is empty"));
    }
    let num_groups = dataset.num_groups();
    let form = config
        .form
        .unwrap_or(ViolationForm::default_for(num_groups));
    if form == ViolationForm::Pairwise && num_groups != 2 {
        return Err(SimFairError::config("pairwise violation form needs K = 2"));
    }
    if let Some(y_adv) = &config.y_adv {
        check_len("advantaged label length", dataset.num_labels(), y_adv.len())?;
    }

    let mut backbone = init_backbone(&backbone_dims(dataset, config), config.seed)?;
    let mut adam = AdamState::new(backbone.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let weights = match (&config.spec, config.penalty_active()) {
        (Some(spec), true) => {
            let y_adv = config
                .y_adv
                .clone()
                .unwrap_or_else(|| LabelVector::zeros(dataset.num_labels()));
            Some(weights_for(spec, dataset.labels(), &y_adv)?)
        }
        _ => None,
    };

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = TrainHistory {
        epoch_losses: Vec::with_capacity(config.epochs),
        total_batches: 0,
        skipped_penalty_batches: 0,
    };
    let mut batch_weights = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let x = dataset.features().select_rows(chunk);
            let labels: Vec<LabelVector> =
                chunk.iter().map(|&i| dataset.labels()[i].clone()).collect();
            let sensitive: Vec<_> = chunk.iter().map(|&i| dataset.sensitive()[i]).collect();
            let pass = backbone.forward_pass(&x)?;
            let penalty = weights.as_ref().map(|w| {
                batch_weights.clear();
                batch_weights.extend(chunk.iter().map(|&i| w[i]));
                (batch_weights.as_slice(), config.lambda, num_groups, form)
            });
            let objective = batch_objective(pass.probs(), &labels, &sensitive, penalty)?;
            if objective.penalty == Some(None) {
                history.skipped_penalty_batches += 1;
            }
            let mut grads = pass.backward(&objective.upstream)?;
            clip_grad_norm(&mut grads, config.max_grad_norm);
            adam_step(
                &mut adam,
                backbone.params_mut(),
                &grads,
                config.learning_rate,
            )?;
            epoch_loss += objective.loss;
            batches += 1;
        }
        history.total_batches += batches;
        history.epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok((backbone, history))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub f1: F1Report,
    pub dp: ViolationReport,
    pub eop: Option<ViolationReport>,
    pub simfair: Vec<ViolationReport>,
}

/// F1 on thresholded predictions plus DP, EOp and `SimFair(gamma)` violations
/// of the predicted probabilities.
pub fn evaluate(
    backbone: &Backbone,
    test: &Dataset,
    y_adv: Option<&LabelVector>,
    gammas: &[f64],
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(SimFairError::config("test split is empty"));
    }
    let probs = backbone.forward_batch(test.features())?;
    evaluate_predictions(&probs, test, y_adv, gammas)
}

/// [`evaluate`] on precomputed probabilities.
pub fn evaluate_predictions(
    probs: &Matrix,
    test: &Dataset,
    y_adv: Option<&LabelVector>,
    gammas: &[f64],
) -> Result<EvalReport> {
    check_len("prediction rows", test.len(), probs.rows())?;
    let predicted: Vec<LabelVector> = probs.iter_rows().map(threshold).collect();
    let f1 = F1Report::compute(test.labels(), &predicted)?;
    let k = test.num_groups();
    let dp = dp_violation(probs, test.sensitive(), k)?;
    let (eop, simfair) = match y_adv {
        Some(y_adv) => {
            let eop = eop_violation(probs, test.sensitive(), test.labels(), y_adv, k)?;
            let simfair = gammas
                .iter()
                .map(|&g| {
                    let spec = SimilaritySpec::jaccard_exp(g)?;
                    simfair_violation(probs, test.sensitive(), test.labels(), y_adv, &spec, k)
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(eop), simfair)
        }
        None => (None, Vec::new()),
    };
    Ok(EvalReport {
        samples: test.len(),
        f1,
        dp,
        eop,
        simfair,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub history: TrainHistory,
    pub evaluation: Option<EvalReport>,
}
