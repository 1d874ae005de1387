use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{backward, bag_loss, forward_frame_scores, max_pool_clip, FrameScorer};
use crate::domain::{Dataset, ScoreMatrix};
use crate::error::{Error, Result};

/// SGD recipe for the frame scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    /// Each gradient component is clamped to `±grad_clip` before the update.
    pub grad_clip: f64,
    pub lr_decay: f64,
    pub plateau_epochs: usize,
    pub max_epochs: usize,
    pub hidden_units: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 95,
            lr0: 0.1,
            momentum: 0.8,
            grad_clip: 1e-3,
            lr_decay: 0.8,
            plateau_epochs: 3,
            max_epochs: 100,
            hidden_units: 0,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("lr_decay must lie in (0, 1)");
        }
        if self.plateau_epochs == 0 {
            return bad("plateau_epochs must be >= 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
    /// Model-selection score (higher is better).
    pub selection_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

/// Learning-rate decay on validation-loss stagnation.
///
/// An epoch improves only if its loss is strictly below the best seen so far;
/// after `patience` consecutive non-improving epochs the rate is multiplied by
/// `decay` and the counter restarts.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    decay: f64,
    patience: usize,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, decay: f64, patience: usize) -> Self {
        Self {
            lr: lr0,
            decay,
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feed one epoch's validation loss; returns the rate for the next epoch.
    pub fn observe(&mut self, valid_loss: f64) -> f64 {
        if valid_loss < self.best {
            self.best = valid_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.decay;
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Nesterov momentum with per-component gradient clamping.
#[derive(Debug, Clone)]
pub struct NesterovSgd {
    momentum: f64,
    clip: f64,
    velocity: Vec<f64>,
}

impl NesterovSgd {
    pub fn new(n_params: usize, momentum: f64, clip: f64) -> Self {
        Self {
            momentum,
            clip,
            velocity: vec![0.0; n_params],
        }
    }

    /// `v <- m v - lr g;  p <- p + m v - lr g` with `g` clamped to `±clip` first.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64], lr: f64) {
        for ((p, g), v) in params
            .iter_mut()
            .zip(grad.iter_mut())
            .zip(&mut self.velocity)
        {
            *g = g.clamp(-self.clip, self.clip);
            *v = self.momentum * *v - lr * *g;
            *p += self.momentum * *v - lr * *g;
        }
    }
}

fn check_pair(train: &Dataset, valid: &Dataset) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::Empty("training set has no clips".into()));
    }
    if valid.is_empty() {
        return Err(Error::Empty("validation set has no clips".into()));
    }
    if train.taxonomy != valid.taxonomy {
        return Err(Error::InvalidValue(
            "training and validation taxonomies differ".into(),
        ));
    }
    let f = train.feature_dim().unwrap_or(0);
    if valid.feature_dim() != Some(f) {
        return Err(Error::Dimension(format!(
            "training feature dim {f} vs validation {}",
            valid.feature_dim().unwrap_or(0)
        )));
    }
    Ok(f)
}

/// Train with validation loss as the model-selection criterion.
pub fn train(
    train_set: &Dataset,
    valid_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<(FrameScorer, TrainHistory)> {
    train_with_selection(train_set, valid_set, cfg, |_, loss| Ok(-loss))
}

/// Train, keeping the parameters whose validation predictions maximize `select`.
///
/// `select` receives the validation score matrix and loss after each epoch; the
/// learning-rate schedule always follows the validation loss.
pub fn train_with_selection<S>(
    train_set: &Dataset,
    valid_set: &Dataset,
    cfg: &TrainConfig,
    mut select: S,
) -> Result<(FrameScorer, TrainHistory)>
where
    S: FnMut(&ScoreMatrix, f64) -> Result<f64>,
{
    cfg.validate()?;
    let f = check_pair(train_set, valid_set)?;
    let k = train_set.n_events();
    let mut model = FrameScorer::init(f, cfg.hidden_units, k, cfg.rng_seed)?;
    let mut opt = NesterovSgd::new(model.params().len(), cfg.momentum, cfg.grad_clip);
    let mut sched = PlateauScheduler::new(cfg.lr0, cfg.lr_decay, cfg.plateau_epochs);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    shuffle_rng.set_stream(1);

    let labels: Vec<Vec<bool>> = train_set
        .clips()
        .iter()
        .map(|c| c.label_vector(k))
        .collect();
    let valid_truth = valid_set.label_matrix();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, FrameScorer)> = None;

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut grad = vec![0.0; model.params().len()];
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let g = backward(&model, &train_set.clips()[i], &labels[i])?;
                loss_sum += g.loss;
                for (acc, v) in grad.iter_mut().zip(&g.values) {
                    *acc += v;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            opt.step(model.params_mut(), &mut grad, lr);
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let scores = predict(&model, valid_set)?;
        let valid_loss = bag_loss(scores.values().view(), valid_truth.view())?;
        if !train_loss.is_finite() || !valid_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("train loss {train_loss}, validation loss {valid_loss}"),
            });
        }
        let score = select(&scores, valid_loss)?;
        log::debug!(
            "epoch {epoch}: lr {lr:.5} train {train_loss:.5} valid {valid_loss:.5} select {score:.5}"
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            lr,
            selection_score: score,
        });
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.clone()));
            history.best_epoch = epoch;
        }
        sched.observe(valid_loss);
    }

    let (_, best_model) = best.expect("at least one epoch");
    Ok((best_model, history))
}

fn clip_row(model: &FrameScorer, clip: &crate::domain::ClipBag) -> Result<Vec<f64>> {
    let frames = forward_frame_scores(model, clip)?;
    Ok(max_pool_clip(frames.view())?.0.to_vec())
}

fn assemble(data: &Dataset, rows: Vec<Vec<f64>>, k: usize) -> Result<ScoreMatrix> {
    let mut values = Array2::zeros((rows.len(), k));
    for (mut dst, row) in values.axis_iter_mut(Axis(0)).zip(&rows) {
        dst.assign(&ndarray::ArrayView1::from(row.as_slice()));
    }
    ScoreMatrix::new(data.clip_ids(), values)
}

/// Clip-level probabilities: max-pooled frame scores for every clip.
pub fn predict(model: &FrameScorer, data: &Dataset) -> Result<ScoreMatrix> {
    let rows = data
        .clips()
        .iter()
        .map(|c| clip_row(model, c))
        .collect::<Result<Vec<_>>>()?;
    assemble(data, rows, model.n_events())
}

/// Same as [`predict`], spread over the current rayon pool. Row order is preserved.
pub fn predict_parallel(model: &FrameScorer, data: &Dataset) -> Result<ScoreMatrix> {
    let rows = data
        .clips()
        .par_iter()
        .map(|c| clip_row(model, c))
        .collect::<Result<Vec<_>>>()?;
    assemble(data, rows, model.n_events())
}
