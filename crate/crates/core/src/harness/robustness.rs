use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::pr_auc;
use super::train::{predict_scores, prepare_all};
use crate::dataset::EcgRecord;
use crate::dsp::Interferer;
use crate::error::{MinaError, Result};
use crate::model::{Mina, ModelParams};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub kind: Interferer,
    pub amplitudes: Vec<f64>,
    pub pr_auc: Vec<f64>,
    /// `100 * (clean - perturbed) / clean`; positive means worse.
    pub drop_percent: Vec<f64>,
}

impl RobustnessCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("amp,pr_auc,drop_percent\n");
        for ((a, p), d) in self.amplitudes.iter().zip(&self.pr_auc).zip(&self.drop_percent) {
            let _ = writeln!(s, "{a},{p},{d}");
        }
        s
    }
}

/// Pooled standard deviation of every sample in `records`.
pub fn signal_std(records: &[EcgRecord]) -> f64 {
    let count = records.iter().map(|r| r.samples.len()).sum::<usize>() as f64;
    let mean = records.iter().flat_map(|r| &r.samples).sum::<f64>() / count;
    let ss = records
        .iter()
        .flat_map(|r| &r.samples)
        .map(|v| (v - mean).powi(2))
        .sum::<f64>();
    (ss / count).sqrt()
}

/// Seed of the noise added to record `index` at amplitude step `step`.
/// Depends only on the sweep seed, so different models see identical noise.
pub fn perturbation_seed(seed: u64, step: usize, index: usize) -> u64 {
    rng::derive_seed(rng::derive_seed(seed, step as u64), index as u64)
}

/// PR-AUC under increasing interference. `amplitudes` must start at 0 and ascend.
pub fn robustness_sweep(
    model: &Mina,
    params: &ModelParams,
    records: &[EcgRecord],
    kind: Interferer,
    amplitudes: &[f64],
    seed: u64,
) -> Result<RobustnessCurve> {
    if amplitudes.first() != Some(&0.0) {
        return Err(MinaError::InvalidInput("amplitude sweep must start at 0".into()));
    }
    if amplitudes.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) || amplitudes.iter().any(|a| !a.is_finite()) {
        return Err(MinaError::InvalidInput(
            "amplitudes must be finite and strictly ascending".into(),
        ));
    }
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    let mut curve = RobustnessCurve {
        kind,
        amplitudes: amplitudes.to_vec(),
        pr_auc: Vec::with_capacity(amplitudes.len()),
        drop_percent: Vec::with_capacity(amplitudes.len()),
    };
    for (step, &amp) in amplitudes.iter().enumerate() {
        let perturbed: Vec<EcgRecord> = records
            .iter()
            .enumerate()
            .map(|(i, r)| r.with_samples(kind.apply(&r.samples, amp, perturbation_seed(seed, step, i))))
            .collect();
        let scores = predict_scores(model, params, &prepare_all(model, &perturbed)?)?;
        let score = pr_auc(&scores, &labels)?;
        let clean = curve.pr_auc.first().copied().unwrap_or(score);
        curve.pr_auc.push(score);
        curve.drop_percent.push(100.0 * (clean - score) / clean);
    }
    Ok(curve)
}
