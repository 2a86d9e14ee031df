//! Training loop, success-probability evaluation and the learning-curve
//! experiment.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::dataset::BeamSequence;
use crate::error::{Error, Result};
use crate::model::{GruModel, ModelDims};
use crate::optim::{accumulate, adam_update, clip_grad_norm, AdamConfig, AdamState};
use crate::rng;
use crate::scenario::{generate_dataset, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub eval_every: usize,
    pub clip_norm: f64,
    pub hidden: usize,
    pub embed: usize,
    /// Episodes per optimizer step; gradients are averaged over the batch.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            seed: 0,
            adam: AdamConfig::default(),
            eval_every: 1,
            clip_norm: 5.0,
            hidden: 64,
            embed: 20,
            batch_size: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::contract("eval_every must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        if !(self.clip_norm > 0.0) || !(self.adam.lr > 0.0) {
            return Err(Error::contract(
                "clip_norm and learning rate must be positive",
            ));
        }
        Ok(())
    }

    pub fn dims(&self, vocab: usize, num_bs: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: self.embed,
            hidden: self.hidden,
            outputs: num_bs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean cross-entropy per time step.
    pub loss: f64,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    /// Success probability of the final model on the test set, or on the
    /// training set when no test set was given.
    pub final_success: f64,
}

impl TrainReport {
    /// `epoch,loss,train_acc,test_acc`; epochs that were not evaluated leave
    /// the accuracy cells empty.
    pub fn metrics_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut out = String::from("epoch,loss,train_acc,test_acc\n");
        for m in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{},{}\n",
                m.epoch,
                m.loss,
                cell(m.train_acc),
                cell(m.test_acc)
            ));
        }
        out
    }
}

/// Owns the model and optimizer state across epochs.
pub struct Trainer {
    pub model: GruModel,
    pub adam: AdamState,
    cfg: TrainConfig,
    shuffle: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(dims: ModelDims, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = GruModel::init(dims, rng::derive_seed(cfg.seed, "model"))?;
        Ok(Trainer {
            adam: AdamState::new(&model),
            model,
            shuffle: rng::stream(cfg.seed, "shuffle", 0),
            cfg,
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over `train` in a freshly shuffled order. Returns the mean
    /// per-step loss.
    pub fn run_epoch(&mut self, train: &[BeamSequence]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::contract("training set is empty"));
        }
        self.epoch += 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.shuffle);

        let mut total_loss = 0.0;
        let mut total_steps = 0usize;
        for batch in order.chunks(self.cfg.batch_size) {
            let mut grads = GruModel::zeros(self.model.dims);
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let (loss, g) = self.model.loss_and_grad(&train[i])?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        epoch: self.epoch,
                        episode: i,
                    });
                }
                total_loss += loss;
                total_steps += train[i].len();
                if batch.len() == 1 {
                    grads = g;
                } else {
                    accumulate(&mut grads, &g, weight);
                }
            }
            clip_grad_norm(&mut grads, self.cfg.clip_norm);
            adam_update(&mut self.model, &grads, &mut self.adam, &self.cfg.adam)?;
        }
        Ok(total_loss / total_steps as f64)
    }
}

/// The trained model together with its optimizer step count.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: GruModel,
    pub step: u64,
    pub report: TrainReport,
}

pub fn train(
    train_set: &[BeamSequence],
    test_set: &[BeamSequence],
    dims: ModelDims,
    cfg: &TrainConfig,
) -> Result<Trained> {
    if train_set.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let mut trainer = Trainer::new(dims, cfg.clone())?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let loss = trainer.run_epoch(train_set)?;
        let evaluate_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let (train_acc, test_acc) = if evaluate_now {
            let tr = Some(evaluate(&trainer.model, train_set)?);
            let te = if test_set.is_empty() {
                None
            } else {
                Some(evaluate(&trainer.model, test_set)?)
            };
            (tr, te)
        } else {
            (None, None)
        };
        epochs.push(EpochMetrics {
            epoch,
            loss,
            train_acc,
            test_acc,
            wall_secs: started.elapsed().as_secs_f64(),
        });
    }
    let last = epochs.last().expect("at least one epoch");
    let final_success = last
        .test_acc
        .or(last.train_acc)
        .expect("last epoch is evaluated");
    Ok(Trained {
        step: trainer.adam.step,
        model: trainer.model,
        report: TrainReport {
            epochs,
            final_success,
        },
    })
}

/// Number of `(correct, total)` next-base-station predictions.
pub fn count_correct(model: &GruModel, dataset: &[BeamSequence]) -> Result<(usize, usize)> {
    dataset
        .par_iter()
        .map(|seq| {
            let hits = model
                .predict(&seq.beams)?
                .iter()
                .zip(&seq.labels)
                .filter(|(p, l)| p == l)
                .count();
            Ok((hits, seq.len()))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
}

/// Fraction of time steps whose predicted next base station matches the label.
pub fn evaluate(model: &GruModel, dataset: &[BeamSequence]) -> Result<f64> {
    let (hits, total) = count_correct(model, dataset)?;
    if total == 0 {
        return Err(Error::contract("cannot evaluate on an empty dataset"));
    }
    Ok(hits as f64 / total as f64)
}

/// Accuracy of always predicting the most frequent label of `dataset`.
pub fn majority_baseline(dataset: &[BeamSequence]) -> f64 {
    let mut counts = std::collections::BTreeMap::<usize, usize>::new();
    for l in dataset.iter().flat_map(|s| &s.labels) {
        *counts.entry(*l).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    counts
        .values()
        .max()
        .map_or(0.0, |&m| m as f64 / total as f64)
}

pub fn total_steps(seqs: &[BeamSequence]) -> usize {
    seqs.iter().map(BeamSequence::len).sum()
}

/// Shortest prefix of `pool` holding at least `steps` labeled time steps.
pub fn prefix_with_steps(pool: &[BeamSequence], steps: usize) -> Option<&[BeamSequence]> {
    let mut acc = 0;
    for (i, s) in pool.iter().enumerate() {
        if acc >= steps {
            return Some(&pool[..i]);
        }
        acc += s.len();
    }
    (acc >= steps).then_some(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    /// Requested training sizes in time steps, ascending.
    pub sizes: Vec<usize>,
    /// Episodes generated per seed; the test set is taken from the front.
    pub pool_episodes: usize,
    pub test_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub train_size: usize,
    /// Time steps actually used (whole episodes).
    pub used_steps: usize,
    pub success: f64,
    pub baseline: f64,
}

/// Held-out test episodes and the remaining training pool for one seed.
pub fn curve_data(
    scenario: &ScenarioConfig,
    cb: &Codebook,
    curve: &CurveConfig,
    seed: u64,
) -> Result<(Vec<BeamSequence>, Vec<BeamSequence>)> {
    let episodes = generate_dataset(
        scenario,
        curve.pool_episodes,
        cb,
        rng::derive_seed(seed, "curve-data"),
    )?;
    let seqs: Vec<BeamSequence> = episodes.iter().map(BeamSequence::from).collect();
    let test_len = prefix_with_steps(&seqs, curve.test_steps)
        .ok_or_else(|| Error::contract("pool too small for the held-out set"))?
        .len();
    let pool = seqs[test_len..].to_vec();
    let mut test = seqs;
    test.truncate(test_len);
    Ok((test, pool))
}

/// Trains one fresh model per training size and scores each on a fixed
/// held-out set.
pub fn learning_curve(
    train_cfg: &TrainConfig,
    curve: &CurveConfig,
    scenario: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if curve.sizes.is_empty() || curve.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract(
            "sizes must be nonempty and strictly ascending",
        ));
    }
    if curve.sizes[0] == 0 {
        return Err(Error::contract("sizes must be positive"));
    }
    let cb = scenario.codebook()?;
    let (test, pool) = curve_data(scenario, &cb, curve, seed)?;
    let available = total_steps(&pool);
    if let Some(&too_big) = curve.sizes.iter().find(|&&s| s > available) {
        return Err(Error::contract(format!(
            "training size {too_big} exceeds the {available} generated steps"
        )));
    }
    let dims = train_cfg.dims(scenario.codebook_size(), scenario.num_bs());
    let cfg = TrainConfig {
        seed: rng::derive_seed(seed, "curve-train"),
        ..train_cfg.clone()
    };
    let baseline = majority_baseline(&test);
    curve
        .sizes
        .iter()
        .map(|&size| {
            let subset = prefix_with_steps(&pool, size).expect("checked above");
            let trained = train(subset, &[], dims, &cfg)?;
            Ok(CurvePoint {
                train_size: size,
                used_steps: total_steps(subset),
                success: evaluate(&trained.model, &test)?,
                baseline,
            })
        })
        .collect()
}
