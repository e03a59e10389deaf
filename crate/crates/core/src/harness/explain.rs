//! Mapping attention weights back onto the signal, and the explanation document.

use serde::{Deserialize, Serialize};

use crate::dataset::EcgRecord;
use crate::dsp::Interferer;
use crate::error::{MinaError, Result};
use crate::model::{ForwardOptions, Mina, ModelParams};

/// Sample ranges covered by each of the `m * n_pos` flattened beat weights of a
/// record of `n` samples: entry `j` spans `[floor(n j / (m n_pos)), ceil(n (j + 1) / (m n_pos))]`,
/// clamped to `[0, n]`.
pub fn align_attention(m: usize, n_pos: usize, n: usize) -> Vec<(usize, usize)> {
    let total = m * n_pos;
    if total == 0 {
        return Vec::new();
    }
    (0..total)
        .map(|j| {
            let start = (n * j / total).min(n);
            let end = (n * (j + 1)).div_ceil(total).min(n);
            (start, end)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentWeight {
    pub segment: usize,
    pub start: usize,
    pub end: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelView {
    pub band: String,
    pub samples: Vec<f64>,
    pub alpha: Vec<Span>,
    pub beta: Vec<SegmentWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandWeight {
    pub band: String,
    pub weight: f64,
}

/// Signal, attention and prediction for one (possibly perturbed) input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationView {
    pub samples: Vec<f64>,
    pub channels: Vec<ChannelView>,
    pub gamma: Vec<BandWeight>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: Interferer,
    pub amp: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedView {
    #[serde(flatten)]
    pub perturbation: Perturbation,
    #[serde(flatten)]
    pub view: ExplanationView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub id: String,
    pub label: usize,
    #[serde(flatten)]
    pub view: ExplanationView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed: Option<PerturbedView>,
}

impl Explanation {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MinaError::InvalidInput(e.to_string()))
    }
}

fn view(model: &Mina, params: &ModelParams, record: &EcgRecord) -> Result<ExplanationView> {
    let prep = model.prepare(record)?;
    let pass = model.forward_prepared(params, &prep, &ForwardOptions::inference())?;
    let att = pass.attention();
    let n = record.len();
    let t = model.config().segment_len;
    let channels = prep
        .channels
        .iter()
        .zip(att.alpha.iter().zip(&att.beta))
        .map(|(ch, (alpha, beta))| {
            let ranges = align_attention(alpha.rows(), alpha.cols(), n);
            ChannelView {
                band: ch.band.label(),
                samples: ch.filtered.clone(),
                alpha: ranges
                    .iter()
                    .zip(alpha.data())
                    .map(|(&(start, end), &weight)| Span { start, end, weight })
                    .collect(),
                beta: beta
                    .iter()
                    .enumerate()
                    .map(|(k, &weight)| SegmentWeight {
                        segment: k,
                        start: k * t,
                        end: (k + 1) * t,
                        weight,
                    })
                    .collect(),
            }
        })
        .collect();
    let gamma = prep
        .channels
        .iter()
        .zip(&att.gamma)
        .map(|(ch, &weight)| BandWeight {
            band: ch.band.label(),
            weight,
        })
        .collect();
    Ok(ExplanationView {
        samples: record.samples.clone(),
        channels,
        gamma,
        p: pass.fusion.p,
    })
}

/// Attention at every level aligned to the signal, optionally side by side
/// with the same quantities for a perturbed copy of the record.
pub fn export_explanation(
    model: &Mina,
    params: &ModelParams,
    record: &EcgRecord,
    perturbation: Option<Perturbation>,
) -> Result<Explanation> {
    let clean = view(model, params, record)?;
    let perturbed = match perturbation {
        Some(p) => {
            let x = p.kind.apply(&record.samples, p.amp, p.seed);
            Some(PerturbedView {
                perturbation: p,
                view: view(model, params, &record.with_samples(x))?,
            })
        }
        None => None,
    };
    Ok(Explanation {
        id: record.id.clone(),
        label: record.label,
        view: clean,
        perturbed,
    })
}
