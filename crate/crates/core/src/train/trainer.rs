//! The optimisation loop: seeded batches, AdamW, per-epoch cosine schedule,
//! validation-driven model selection, and resumable checkpoints.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::loss::{dice_ce_loss, LossWeights};
use super::optim::{adamw_step, cosine_lr, AdamHyper, AdamState, CosineSchedule};
use super::predict::{foreground_dsc, Sample};
use crate::error::{Error, Result};
use crate::net::Wemf;
use crate::rng;
use crate::tensor::{read_checkpoint, write_checkpoint, ParamStore, Tensor};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LAST: &str = "last";
pub const BEST: &str = "best";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub t_max: usize,
    pub eta_min: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cap on optimiser steps per epoch; the shuffled order is truncated.
    pub steps_per_epoch: Option<usize>,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossWeights,
    pub seed: u64,
    /// Seed for the initial weights; falls back to `seed`.
    pub init_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hp = AdamHyper::default();
        TrainConfig {
            lr0: 1e-4,
            t_max: 100,
            eta_min: 0.0,
            epochs: 20,
            batch_size: 4,
            steps_per_epoch: None,
            weight_decay: hp.weight_decay,
            beta1: hp.beta1,
            beta2: hp.beta2,
            eps: hp.eps,
            loss: LossWeights::default(),
            seed: 0,
            init_seed: None,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> CosineSchedule {
        CosineSchedule { lr0: self.lr0, t_max: self.t_max, eta_min: self.eta_min }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper { beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }

    pub fn weight_seed(&self) -> u64 {
        self.init_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 || self.steps_per_epoch == Some(0) {
            return Err(Error::Config("batch_size and steps_per_epoch must be positive".into()));
        }
        let unit = |x: f64| (0.0..1.0).contains(&x);
        if !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid optimiser settings in {self:?}")));
        }
        Ok(())
    }
}

/// Bookkeeping saved next to the weights and optimiser moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainProgress {
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    pub adam_t: u64,
    pub best_val_dsc: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Batch order for epoch `e` is drawn from `derive(seed, e)`, so the seed
    /// and the epoch counter are the whole RNG state.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub adam: AdamState,
    pub progress: TrainProgress,
    pub best: Option<ParamStore>,
}

impl TrainState {
    pub fn fresh(model: &Wemf, cfg: &TrainConfig) -> Self {
        let params = model.init(cfg.weight_seed());
        TrainState {
            adam: AdamState::zeros_like(&params),
            params,
            progress: TrainProgress {
                epoch: 0,
                step: 0,
                adam_t: 0,
                best_val_dsc: None,
                best_epoch: None,
                seed: cfg.seed,
            },
            best: None,
        }
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_checkpoint(&self.params, &dir.join(format!("{name}.wemf")))?;
        write_checkpoint(&self.adam.to_store(), &dir.join(format!("{name}.optim.wemf")))?;
        let mut progress = self.progress.clone();
        progress.adam_t = self.adam.t;
        let path = dir.join(format!("{name}.state.json"));
        fs::write(&path, serde_json::to_string_pretty(&progress)?).map_err(|e| Error::io(&path, e))
    }

    /// Reload a state written by [`TrainState::save`]; the best weights come
    /// from `best.wemf` when present.
    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let params = read_checkpoint(&dir.join(format!("{name}.wemf")))?;
        let moments = read_checkpoint(&dir.join(format!("{name}.optim.wemf")))?;
        let path = dir.join(format!("{name}.state.json"));
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let progress: TrainProgress = serde_json::from_str(&text)?;
        let adam = AdamState::from_store(&moments, progress.adam_t);
        params.check_compatible(&adam.m)?;
        params.check_compatible(&adam.v)?;
        let best_path = dir.join(format!("{BEST}.wemf"));
        let best = if progress.best_epoch.is_some() && best_path.exists() {
            Some(read_checkpoint(&best_path)?)
        } else {
            None
        };
        Ok(TrainState { params, adam, progress, best })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub val_dsc: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochLog>,
}

pub struct Trainer<'a> {
    pub model: &'a Wemf,
    pub cfg: TrainConfig,
    pub train: &'a [Sample],
    pub val: &'a [Sample],
    /// Where logs and checkpoints go; nothing is written when `None`.
    pub out: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    /// Forward one sample without gradients to surface shape problems early.
    pub fn dry_run(&self, params: &ParamStore) -> Result<()> {
        self.model.check_weights(params)?;
        let first = self
            .train
            .first()
            .ok_or_else(|| Error::InvalidSplit("training set is empty".into()))?;
        let s = self.model.cfg.img_size;
        let c = self.model.cfg.num_classes;
        for smp in self.train.iter().chain(self.val) {
            if smp.input.shape() != [s, s, self.model.cfg.in_channels] || smp.labels.len() != s * s {
                return Err(Error::shape(
                    "train",
                    format!(
                        "sample {}#{} has input {:?} and {} labels; model expects [{s}, {s}, {}]",
                        smp.case,
                        smp.index,
                        smp.input.shape(),
                        smp.labels.len(),
                        self.model.cfg.in_channels
                    ),
                ));
            }
            if let Some(&l) = smp.labels.iter().find(|&&l| l as usize >= c) {
                return Err(Error::LabelOutOfRange { label: l as usize, classes: c });
            }
        }
        let logits = self.model.forward(&params.bind(false)?, &first.input)?;
        if logits.shape() != [s, s, c] {
            return Err(Error::shape("train", format!("dry run produced {:?}", logits.shape())));
        }
        Ok(())
    }

    /// Batch order for one epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        rng::shuffle(&mut rng::seeded(rng::derive(self.cfg.seed, epoch as u64)), &mut order);
        let mut batches: Vec<Vec<usize>> = order.chunks(self.cfg.batch_size).map(<[usize]>::to_vec).collect();
        if let Some(cap) = self.cfg.steps_per_epoch {
            batches.truncate(cap);
        }
        batches
    }

    /// One optimiser step on `batch`; returns the loss.
    pub fn step(&self, state: &mut TrainState, batch: &[usize], lr: f64) -> Result<f64> {
        let p = state.params.bind(true)?;
        let mut logits = Vec::with_capacity(batch.len());
        let mut labels = Vec::new();
        for &i in batch {
            logits.push(self.model.forward(&p, &self.train[i].input)?);
            labels.extend_from_slice(&self.train[i].labels);
        }
        let logits = Tensor::concat(&logits, 0)?;
        let loss = dice_ce_loss(&logits, &labels, self.cfg.loss)?.total;
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "dice_ce_loss" });
        }
        loss.backward()?;
        adamw_step(&mut state.params, &p.grads(), &mut state.adam, lr, &self.cfg.adam())?;
        state.progress.step += 1;
        Ok(value)
    }

    pub fn run(&self) -> Result<(TrainState, TrainOutcome)> {
        self.cfg.validate()?;
        let mut state = TrainState::fresh(self.model, &self.cfg);
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let log = dir.join(LOG_FILE);
            fs::write(&log, "").map_err(|e| Error::io(&log, e))?;
        }
        let outcome = self.resume_from(&mut state)?;
        Ok((state, outcome))
    }

    /// Continue from the last checkpoint in `self.out`.
    pub fn resume(&self) -> Result<(TrainState, TrainOutcome)> {
        self.cfg.validate()?;
        let dir = self.out.as_ref().ok_or_else(|| Error::Config("resume needs an output directory".into()))?;
        let mut state = TrainState::load(dir, LAST)?;
        if state.progress.seed != self.cfg.seed {
            return Err(Error::Config(format!(
                "checkpoint seed {} differs from configured seed {}",
                state.progress.seed, self.cfg.seed
            )));
        }
        let outcome = self.resume_from(&mut state)?;
        Ok((state, outcome))
    }

    /// Train from `state` up to `cfg.epochs`.
    pub fn resume_from(&self, state: &mut TrainState) -> Result<TrainOutcome> {
        self.dry_run(&state.params)?;
        let mut outcome = TrainOutcome::default();
        let schedule = self.cfg.schedule();
        while state.progress.epoch < self.cfg.epochs {
            let epoch = state.progress.epoch;
            let lr = cosine_lr(epoch, &schedule);
            let mut sum = 0.0;
            let batches = self.epoch_order(epoch);
            for batch in &batches {
                let loss = self.step(state, batch, lr)?;
                outcome.step_losses.push(loss);
                sum += loss;
            }
            let val_dsc = if self.val.is_empty() {
                None
            } else {
                Some(foreground_dsc(self.model, &state.params.bind(false)?, self.val)?)
            };
            state.progress.epoch += 1;
            state.progress.adam_t = state.adam.t;
            if let Some(v) = val_dsc {
                if state.progress.best_val_dsc.map_or(true, |b| v > b) {
                    state.progress.best_val_dsc = Some(v);
                    state.progress.best_epoch = Some(epoch);
                    state.best = Some(state.params.clone());
                    if let Some(dir) = &self.out {
                        write_checkpoint(&state.params, &dir.join(format!("{BEST}.wemf")))?;
                    }
                }
            }
            let entry = EpochLog {
                epoch,
                step: state.progress.step,
                loss: sum / batches.len().max(1) as f64,
                lr,
                val_dsc,
            };
            if let Some(dir) = &self.out {
                state.save(dir, LAST)?;
                append_log(&dir.join(LOG_FILE), &entry)?;
            }
            outcome.epochs.push(entry);
        }
        Ok(outcome)
    }
}

fn append_log(path: &Path, entry: &EpochLog) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", serde_json::to_string(entry)?).map_err(|e| Error::io(path, e))
}
