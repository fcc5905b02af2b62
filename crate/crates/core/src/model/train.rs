//! Mini-batch Adam training of the self-normalized objective.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::{evaluate, loss_parts_and_grads, LossParts};
use super::params::Parameters;
use crate::corpus::ParallelPair;
use crate::{Error, Result};

const SHUFFLE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    /// Learning rate of the first epoch.
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch (1 keeps it constant).
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Weight of the `(log Z)²` penalty.
    pub beta: f64,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Seeds parameter initialization, the held-out split and batch shuffling.
    pub seed: u64,
    /// Share of pairs kept out of training for the per-epoch `|log Z|` metric.
    pub holdout_fraction: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            lr_decay: 1.0,
            batch_size: 128,
            beta: 0.1,
            epochs: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 7,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainHyper {
    /// Settings for the single-layer desk model on the synthetic corpus.
    pub fn desk() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 16,
            lr_decay: 0.8,
            epochs: 12,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidInput(format!(
                "holdout fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::InvalidInput("adam moments must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Token-averaged training objective over the epoch's batches.
    pub loss: f64,
    /// Mean `|log Σ exp(s)|` over every teacher-forced step of the held-out split.
    #[serde(rename = "mean_abs_logZ")]
    pub mean_abs_log_z: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: Parameters,
    pub metrics: Vec<EpochMetrics>,
    pub holdout: Vec<ParallelPair>,
}

/// Deterministic split into `(train, holdout)`. At least one pair is held
/// out whenever the fraction is positive and two or more pairs exist.
pub fn split_holdout(pairs: &[ParallelPair], fraction: f64, seed: u64) -> (Vec<ParallelPair>, Vec<ParallelPair>) {
    let mut shuffled = pairs.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    shuffled.shuffle(&mut rng);
    let mut held = (fraction * pairs.len() as f64).round() as usize;
    if fraction > 0.0 && pairs.len() >= 2 {
        held = held.clamp(1, pairs.len() - 1);
    }
    let holdout = shuffled.split_off(shuffled.len() - held);
    (shuffled, holdout)
}

/// Mean `|log Z|` over every teacher-forced step of `pairs`.
pub fn mean_abs_log_z(params: &Parameters, pairs: &[ParallelPair]) -> Result<f64> {
    let parts = evaluate(params, pairs)?;
    if parts.tokens == 0 {
        return Err(Error::NoData("no pairs to evaluate"));
    }
    Ok(parts.abs_log_z / parts.tokens as f64)
}

pub fn train(pairs: &[ParallelPair], config: ModelConfig, hyper: &TrainHyper) -> Result<Trained> {
    train_with(pairs, config, hyper, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    pairs: &[ParallelPair],
    config: ModelConfig,
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Trained> {
    hyper.validate()?;
    if pairs.is_empty() {
        return Err(Error::NoData("training corpus is empty"));
    }
    let mut params = Parameters::init(config, hyper.seed)?;
    let (mut train_set, holdout) = split_holdout(pairs, hyper.holdout_fraction, hyper.seed);
    let monitor: &[ParallelPair] = if holdout.is_empty() { &train_set } else { &holdout };
    let monitor = monitor.to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut adam = Adam::new(&params, hyper);
    let mut metrics = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        adam.lr = hyper.learning_rate * hyper.lr_decay.powi(epoch as i32 - 1);
        train_set.shuffle(&mut rng);
        let mut epoch_parts = LossParts::default();
        for batch in train_set.chunks(hyper.batch_size) {
            let (parts, grads) = loss_parts_and_grads(&params, batch, hyper.beta)?;
            epoch_parts.add(&parts);
            adam.update(&mut params, &grads);
            if !params.is_finite() {
                return Err(Error::Diverged { step: adam.step });
            }
        }
        let m = EpochMetrics {
            epoch,
            loss: epoch_parts.loss(hyper.beta),
            mean_abs_log_z: mean_abs_log_z(&params, &monitor)?,
        };
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(Trained {
        params,
        metrics,
        holdout,
    })
}

struct Adam {
    first: Parameters,
    second: Parameters,
    step: usize,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(params: &Parameters, hyper: &TrainHyper) -> Self {
        Self {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
            lr: hyper.learning_rate,
            beta1: hyper.adam_beta1,
            beta2: hyper.adam_beta2,
            epsilon: hyper.adam_epsilon,
        }
    }

    fn update(&mut self, params: &mut Parameters, grads: &Parameters) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().into_iter().zip(self.second.tensors_mut()));
        for ((w, g), (m, v)) in tensors {
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}
