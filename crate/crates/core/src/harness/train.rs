use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::dataset::{class_weights, DatasetSplit, EcgRecord};
use crate::error::{MinaError, Result};
use crate::model::{ForwardOptions, Mina, ModelConfig, ModelParams, PreparedRecord, Variant};
use crate::nn::{adam_step, AdamConfig, AdamState, Parameters};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    /// Epochs without a validation PR-AUC improvement before stopping.
    pub patience: usize,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 50,
            lr: 0.003,
            patience: 10,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(MinaError::config("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(MinaError::config("max_epochs", "must be at least 1"));
        }
        if self.patience > self.max_epochs {
            return Err(MinaError::config("patience", "exceeds max_epochs"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MinaError::config("lr", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: Metrics,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_roc_auc,val_pr_auc,val_f1\n");
        for e in &self.epochs {
            let v = e.validation;
            let _ = writeln!(s, "{},{},{},{},{}", e.epoch, e.train_loss, v.roc_auc, v.pr_auc, v.f1);
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// Prepares every record, failing on the first bad one.
pub fn prepare_all(model: &Mina, records: &[EcgRecord]) -> Result<Vec<PreparedRecord>> {
    records.iter().map(|r| model.prepare(r)).collect()
}

/// Positive-class probabilities in inference mode.
pub fn predict_scores(model: &Mina, params: &ModelParams, records: &[PreparedRecord]) -> Result<Vec<f64>> {
    let opts = ForwardOptions::inference();
    records
        .iter()
        .map(|r| Ok(model.forward_prepared(params, r, &opts)?.prediction().positive()))
        .collect()
}

pub fn evaluate_prepared(model: &Mina, params: &ModelParams, records: &[PreparedRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(MinaError::EmptyDataset);
    }
    let scores = predict_scores(model, params, records)?;
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    Metrics::compute(&scores, &labels)
}

/// Inference-mode metrics over `records`.
pub fn evaluate(model: &Mina, params: &ModelParams, records: &[EcgRecord]) -> Result<Metrics> {
    evaluate_prepared(model, params, &prepare_all(model, records)?)
}

/// Trains from a seeded initialization and returns the parameters of the epoch
/// with the best validation PR-AUC.
pub fn train(
    split: &DatasetSplit,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams, TrainHistory)> {
    train_with(split, model_config, train_config, seed, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    split: &DatasetSplit,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainHistory)> {
    train_config.validate()?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(MinaError::EmptyDataset);
    }
    let model = Mina::new(model_config.clone())?;
    let labels: Vec<usize> = split.train.iter().map(|r| r.label).collect();
    let weights = class_weights(&labels, model_config.num_classes)?;
    if !split.validation.iter().any(|r| r.label != 0) {
        return Err(MinaError::InvalidInput(
            "validation split has no positive records".into(),
        ));
    }
    let train_set = prepare_all(&model, &split.train)?;
    let val_set = prepare_all(&model, &split.validation)?;

    let mut params = model.init_params(rng::derive_seed(seed, 0));
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: train_config.lr,
            ..AdamConfig::default()
        },
    );
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(seed, 1));
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 1..=train_config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let epoch_seed = rng::derive_seed(seed, 2 + epoch as u64);
        let mut total_loss = 0.0;
        for batch in order.chunks(train_config.batch_size) {
            grads.zero_all();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let opts = ForwardOptions::training(rng::derive_seed(epoch_seed, i as u64));
                let (loss, _) =
                    model.loss_and_grad(&params, &train_set[i], weights.as_slice(), &opts, scale, &mut grads)?;
                total_loss += loss;
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        let validation = evaluate_prepared(&model, &params, &val_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: total_loss / train_set.len() as f64,
            validation,
        };
        on_epoch(&record);
        history.epochs.push(record);
        if best.as_ref().is_none_or(|(score, _)| validation.pr_auc > *score) {
            best = Some((validation.pr_auc, params.clone()));
            history.best_epoch = epoch;
        }
        if epoch - history.best_epoch >= train_config.patience {
            break;
        }
    }
    let (_, best_params) = best.expect("at least one epoch runs");
    Ok((best_params, history))
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if let Some(&first) = values.first() {
            if values.iter().all(|&v| v == first) {
                return Summary { mean: first, std: 0.0 };
            }
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: Variant,
    pub roc_auc: Summary,
    pub pr_auc: Summary,
    pub f1: Summary,
    pub per_seed: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Plain-text table, one row per variant, `mean ± std` per metric.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8}{:>20}{:>20}{:>20}\n", "model", "ROC-AUC", "PR-AUC", "F1");
        let cell = |m: Summary| format!("{:.4} ± {:.4}", m.mean, m.std);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8}{:>20}{:>20}{:>20}",
                r.variant.to_string(),
                cell(r.roc_auc),
                cell(r.pr_auc),
                cell(r.f1)
            );
        }
        s
    }
}

/// Trains and tests every configuration once per seed.
pub fn multi_seed_report(
    split: &DatasetSplit,
    configs: &[ModelConfig],
    train_config: &TrainConfig,
    seeds: &[u64],
) -> Result<Report> {
    if seeds.len() < 2 {
        return Err(MinaError::config("seeds", "at least two seeds are required"));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        let model = Mina::new(config.clone())?;
        let test = prepare_all(&model, &split.test)?;
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let (params, _) = train(split, config, train_config, seed)?;
            per_seed.push(evaluate_prepared(&model, &params, &test)?);
        }
        let pick = |f: fn(&Metrics) -> f64| Summary::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        rows.push(ReportRow {
            variant: config.variant,
            roc_auc: pick(|m| m.roc_auc),
            pr_auc: pick(|m| m.pr_auc),
            f1: pick(|m| m.f1),
            per_seed,
        });
    }
    Ok(Report { rows })
}
