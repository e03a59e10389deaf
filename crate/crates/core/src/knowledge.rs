//! Hand-computed domain features that guide each attention level.
//!
//! * beat: a learnable single-filter convolution over the first difference of
//!   each segment, highlighting sharp transitions such as the QRS complex;
//! * rhythm: the dispersion of each segment, `(1/T) * sum (s_i - mean)^2`;
//! * frequency: the mean periodogram power of each band channel.
//!
//! The rhythm feature is the population variance. Its square root (standard
//! deviation) is available through `use_sqrt` but is off by default.

use crate::dsp::{periodogram_psd, ChannelBank};
use crate::error::{MinaError, Result};
use crate::nn::{conv1d, Tensor};

/// Single-row feature matrices, one per attention level (`E = 1` everywhere).
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeFeatures {
    /// `[M, N]`: row `k` is the beat feature of segment `k`.
    pub k_alpha: Tensor,
    /// Length `M`.
    pub k_beta: Vec<f64>,
    /// Length `F`.
    pub k_gamma: Vec<f64>,
}

/// `d_0 = s_0`, `d_i = s_i - s_{i-1}`.
pub fn first_difference(s: &[f64]) -> Result<Vec<f64>> {
    let (&head, _) = s
        .split_first()
        .ok_or_else(|| MinaError::InvalidInput("first difference of an empty sequence".into()))?;
    let mut out = Vec::with_capacity(s.len());
    out.push(head);
    out.extend(s.windows(2).map(|w| w[1] - w[0]));
    Ok(out)
}

/// Beat feature of one segment: `filter` (shape `[1, size]`) correlated with the
/// first difference at `stride`, no padding and no bias.
pub fn beat_knowledge(segment: &[f64], filter: &Tensor, stride: usize) -> Result<Vec<f64>> {
    let diff = first_difference(segment)?;
    Ok(conv1d(&diff, filter, None, stride)?.into_data())
}

fn dispersion(s: &[f64], use_sqrt: bool) -> f64 {
    let t = s.len() as f64;
    let mean = s.iter().sum::<f64>() / t;
    let var = s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
    if use_sqrt {
        var.sqrt()
    } else {
        var
    }
}

/// One dispersion value per row of `segments` (`[M, T]`).
pub fn rhythm_knowledge(segments: &Tensor, use_sqrt: bool) -> Vec<f64> {
    (0..segments.rows())
        .map(|k| dispersion(segments.row(k), use_sqrt))
        .collect()
}

/// Mean periodogram power of each channel.
pub fn freq_knowledge(bank: &ChannelBank, sampling_rate: f64) -> Result<Vec<f64>> {
    bank.channels
        .iter()
        .map(|ch| {
            let psd = periodogram_psd(ch, sampling_rate)?;
            Ok(psd.iter().sum::<f64>() / psd.len() as f64)
        })
        .collect()
}

/// Z-scores `v` in place; leaves a constant vector at zero.
pub fn standardize(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 1e-12 { (*x - mean) / sd } else { 0.0 };
    }
}
