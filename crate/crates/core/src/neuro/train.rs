use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::{prepare_input, AugmentParams};
use super::loss::{hardness_loss, hardness_loss_grad, LossValue};
use super::model::{HardnessModel, Mode};
use super::optim::{AdamW, AdamWConfig, GroupRates, Plateau};
use super::params::Grads;
use super::tape::Tape;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::seeding::{self, stream};
use crate::stats;
use crate::tactile::dataset::ClipSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub lr_early: f64,
    pub lr_late: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub augment: bool,
    /// Training aborts once the epoch loss exceeds this multiple of the
    /// first epoch's loss for `divergence_epochs` epochs in a row.
    pub divergence_factor: f64,
    pub divergence_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 80,
            finetune_epochs: 15,
            batch_size: 8,
            lr_early: 5e-5,
            lr_late: 1e-3,
            weight_decay: 1e-4,
            plateau_factor: 0.2,
            plateau_patience: 2,
            augment: true,
            divergence_factor: 10.0,
            divergence_epochs: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.lr_early > 0.0 && self.lr_late > self.lr_early) {
            return Err(Error::Config("need 0 < lr_early < lr_late".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Config("plateau factor must lie in (0, 1)".into()));
        }
        if !(self.divergence_factor > 1.0) || self.divergence_epochs == 0 {
            return Err(Error::Config("divergence guard must have factor > 1 and epochs ≥ 1".into()));
        }
        Ok(())
    }

    pub fn rates(&self) -> GroupRates {
        GroupRates { early: self.lr_early, late: self.lr_late }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Pretrain,
    Finetune,
    /// Fine-tune protocol from a fresh initialisation.
    Direct,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Direct => "direct",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Phase::Pretrain => 1,
            Phase::Finetune => 2,
            Phase::Direct => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_rmse: f64,
    pub val_r2: f64,
    pub val_spearman: f64,
    pub lr_early: f64,
    pub lr_late: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricHistory {
    pub records: Vec<EpochRecord>,
}

impl MetricHistory {
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.phase == phase.name())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,phase,train_loss,val_rmse,val_r2,val_rho\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.epoch, r.phase, r.train_loss, r.val_rmse, r.val_r2, r.val_spearman);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub loss: f64,
    pub rmse: f64,
    pub r2: f64,
    pub spearman: f64,
    /// Population variance of the predictions.
    pub variance: f64,
}

impl EvalMetrics {
    pub fn compute(p: &[f64], l: &[f64]) -> Result<Self> {
        let LossValue { total, variance, .. } = hardness_loss(p, l)?;
        Ok(EvalMetrics {
            loss: total,
            rmse: stats::rmse(p, l)?,
            r2: stats::r2(p, l)?,
            spearman: stats::spearman(p, l)?,
            variance,
        })
    }
}

/// Evaluation-mode predictions, one per sample, in input order.
pub fn predict(model: &HardnessModel, samples: &[ClipSample], exec: Exec) -> Result<Vec<f64>> {
    exec.map_slice(samples, |s| {
        let x = prepare_input(&s.clip, &model.config, &AugmentParams::IDENTITY)?;
        model.predict_one(&x)
    })
    .into_iter()
    .collect()
}

pub fn evaluate(model: &HardnessModel, samples: &[ClipSample], exec: Exec) -> Result<(Vec<f64>, EvalMetrics)> {
    let p = predict(model, samples, exec)?;
    let l: Vec<f64> = samples.iter().map(|s| s.hardness).collect();
    let m = EvalMetrics::compute(&p, &l)?;
    Ok((p, m))
}

/// Forward and backward over one batch with the given dropout seeds.
pub fn batch_gradient(
    model: &HardnessModel,
    inputs: &[Vec<f64>],
    labels: &[f64],
    dropout_seeds: &[u64],
    exec: Exec,
) -> Result<(LossValue, Grads)> {
    let runs: Vec<(Tape, super::tape::Var)> = exec
        .map_range(inputs.len(), |i| {
            let mut tape = Tape::new(&model.params);
            let mut rng = seeding::rng(dropout_seeds[i], &[stream::DROPOUT]);
            let y = model.forward(&mut tape, &inputs[i], &mut Mode::Train(&mut rng))?;
            Ok((tape, y))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let p: Vec<f64> = runs.iter().map(|(t, y)| t.value(*y).map(|v| v[0])).collect::<Result<_>>()?;
    let (value, dp) = hardness_loss_grad(&p, labels)?;
    let per: Vec<Result<Grads>> = exec.map_range(runs.len(), |i| runs[i].0.backward(runs[i].1, &[dp[i]]));
    let mut total = model.params.zero_grads();
    for g in per {
        total.add_assign(&g?);
    }
    Ok((value, total))
}

/// Runs one training phase with fresh optimiser and scheduler state. The
/// scheduler monitors validation RMSE, or the training loss when `val` is
/// empty.
pub fn train_phase(
    model: &mut HardnessModel,
    train: &[ClipSample],
    val: &[ClipSample],
    cfg: &TrainConfig,
    phase: Phase,
    epochs: usize,
    history: &mut MetricHistory,
    exec: Exec,
) -> Result<()> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(Error::invalid("training set needs at least 2 samples"));
    }
    let mut opt = AdamW::new(AdamWConfig { weight_decay: cfg.weight_decay, ..Default::default() }, &model.params);
    let mut plateau = Plateau::new(cfg.plateau_factor, cfg.plateau_patience);
    let mut first_loss = None;
    let mut over = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..epochs {
        let rates = cfg.rates().scaled(plateau.scale);
        order.sort_unstable();
        order.shuffle(&mut seeding::rng(cfg.seed, &[stream::SHUFFLE, phase.tag(), epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let inputs: Vec<Vec<f64>> = exec
                .map_slice(chunk, |&i| {
                    let aug = if cfg.augment {
                        let path = [stream::AUGMENT, phase.tag(), epoch as u64, i as u64];
                        AugmentParams::sample(&mut seeding::rng(cfg.seed, &path))
                    } else {
                        AugmentParams::IDENTITY
                    };
                    prepare_input(&train[i].clip, &model.config, &aug)
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let labels: Vec<f64> = chunk.iter().map(|&i| train[i].hardness).collect();
            let seeds: Vec<u64> = (0..chunk.len())
                .map(|k| seeding::mix(cfg.seed, &[phase.tag(), epoch as u64, b as u64, k as u64]))
                .collect();
            let (value, grads) = batch_gradient(model, &inputs, &labels, &seeds, exec)?;
            opt.step(&mut model.params, &grads, rates)?;
            loss_sum += value.total;
            batches += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;

        let mut rec = EpochRecord {
            phase: phase.name().into(),
            epoch,
            train_loss,
            val_loss: f64::NAN,
            val_rmse: f64::NAN,
            val_r2: f64::NAN,
            val_spearman: f64::NAN,
            lr_early: rates.early,
            lr_late: rates.late,
        };
        let monitored = if val.len() >= 2 {
            let (_, m) = evaluate(model, val, exec)?;
            rec.val_loss = m.loss;
            rec.val_rmse = m.rmse;
            rec.val_r2 = m.r2;
            rec.val_spearman = m.spearman;
            m.rmse
        } else {
            train_loss
        };
        history.records.push(rec);

        let first = *first_loss.get_or_insert(train_loss);
        if !train_loss.is_finite() || train_loss > cfg.divergence_factor * first {
            over += 1;
        } else {
            over = 0;
        }
        if !train_loss.is_finite() || over >= cfg.divergence_epochs {
            return Err(Error::Diverged { phase: phase.name().into(), epoch, history: Box::new(history.clone()) });
        }
        plateau.observe(monitored);
    }
    Ok(())
}

/// Datasets for the two-phase schedule.
#[derive(Debug, Clone, Copy)]
pub struct TrainSets<'a> {
    pub pretrain: &'a [ClipSample],
    pub pretrain_val: &'a [ClipSample],
    pub finetune: &'a [ClipSample],
    pub finetune_val: &'a [ClipSample],
}

/// Pretrains on the wide-range corpus, then fine-tunes on the object set.
pub fn train(model: &mut HardnessModel, sets: TrainSets, cfg: &TrainConfig, exec: Exec) -> Result<MetricHistory> {
    let mut history = MetricHistory::default();
    train_phase(model, sets.pretrain, sets.pretrain_val, cfg, Phase::Pretrain, cfg.pretrain_epochs, &mut history, exec)?;
    train_phase(model, sets.finetune, sets.finetune_val, cfg, Phase::Finetune, cfg.finetune_epochs, &mut history, exec)?;
    Ok(history)
}

/// Fine-tune protocol only, with no pretraining.
pub fn train_direct(
    model: &mut HardnessModel,
    finetune: &[ClipSample],
    val: &[ClipSample],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<MetricHistory> {
    let mut history = MetricHistory::default();
    train_phase(model, finetune, val, cfg, Phase::Direct, cfg.finetune_epochs, &mut history, exec)?;
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooFold {
    pub object: String,
    pub predictions: Vec<f64>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub folds: Vec<LooFold>,
    /// Metrics over the pooled held-out predictions of every fold.
    pub pooled: EvalMetrics,
}

/// Fine-tunes a copy of `pretrained` once per object with that object held
/// out, and scores each copy on the object it never saw.
pub fn leave_one_object_out(
    pretrained: &HardnessModel,
    finetune: &[ClipSample],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<LooReport> {
    let mut objects: Vec<&str> = Vec::new();
    for s in finetune {
        if !objects.contains(&s.object.as_str()) {
            objects.push(&s.object);
        }
    }
    if objects.len() < 2 {
        return Err(Error::invalid("leave-one-out needs at least two objects"));
    }
    let mut folds = Vec::new();
    for obj in objects {
        let (held, rest): (Vec<ClipSample>, Vec<ClipSample>) = finetune.iter().cloned().partition(|s| s.object == obj);
        let mut model = pretrained.clone();
        let mut history = MetricHistory::default();
        train_phase(&mut model, &rest, &[], cfg, Phase::Finetune, cfg.finetune_epochs, &mut history, exec)?;
        let predictions = predict(&model, &held, exec)?;
        folds.push(LooFold { object: obj.to_string(), predictions, labels: held.iter().map(|s| s.hardness).collect() });
    }
    let p: Vec<f64> = folds.iter().flat_map(|f| f.predictions.iter().copied()).collect();
    let l: Vec<f64> = folds.iter().flat_map(|f| f.labels.iter().copied()).collect();
    let pooled = EvalMetrics::compute(&p, &l)?;
    Ok(LooReport { folds, pooled })
}
