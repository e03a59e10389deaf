//! Ranking and thresholded classification metrics for binary labels.
//!
//! Labels are class indices; any nonzero label counts as positive.

use serde::{Deserialize, Serialize};

use crate::error::{MinaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub f1: f64,
}

impl Metrics {
    /// All three metrics, F1 at threshold 0.5.
    pub fn compute(scores: &[f64], labels: &[usize]) -> Result<Self> {
        Ok(Metrics {
            roc_auc: roc_auc(scores, labels)?,
            pr_auc: pr_auc(scores, labels)?,
            f1: f1(scores, labels, 0.5)?,
        })
    }
}

fn check(scores: &[f64], labels: &[usize]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(MinaError::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(MinaError::InvalidInput(format!("non-finite score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(MinaError::InvalidInput("ROC-AUC needs both classes".into()));
    }
    // Walk groups from the top: each positive beats every negative below it.
    let mut wins = 0.0;
    let mut negatives_left = neg;
    for g in tie_groups(scores) {
        let gp = g.iter().filter(|&&i| labels[i] != 0).count();
        let gn = g.len() - gp;
        negatives_left -= gn;
        wins += gp as f64 * (negatives_left as f64 + 0.5 * gn as f64);
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Average precision: sum over thresholds of precision times the recall gained.
pub fn pr_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(MinaError::InvalidInput("PR-AUC needs at least one positive".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let gp = g.iter().filter(|&&i| labels[i] != 0).count();
        tp += gp;
        seen += g.len();
        if gp > 0 {
            ap += tp as f64 * gp as f64 / seen as f64;
        }
    }
    // Rounding can push a perfect ranking a hair above 1.
    Ok((ap / pos as f64).min(1.0))
}

/// F1 of the rule `score >= threshold`; zero when nothing is predicted positive.
pub fn f1(scores: &[f64], labels: &[usize], threshold: f64) -> Result<f64> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}
