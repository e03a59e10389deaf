//! Central finite-difference verification of analytic gradients.

use rand::seq::index;

use super::tensor::Parameters;
use crate::error::{MinaError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Every coordinate is checked when the model has at most this many; otherwise
    /// this many are sampled uniformly without replacement (never fewer than 200).
    pub max_coords: usize,
    /// Relative error is `|a - n| / max(|a|, |n|, abs_floor)`, so gradients below the
    /// floor are compared absolutely rather than amplifying round-off.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            max_coords: 4000,
            abs_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Offset of the worst coordinate within the tensor.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub per_tensor: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.per_tensor
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn finite_diff_check<P, F>(params: &P, analytic: &P, loss: F, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> Result<f64>,
{
    let total = params.num_values();
    if analytic.num_values() != total {
        return Err(MinaError::Shape("gradient and parameter sizes differ".into()));
    }
    let first = loss(params)?;
    let second = loss(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(MinaError::GradCheck(format!(
            "forward pass is not deterministic ({first} vs {second})"
        )));
    }

    let mut coords: Vec<usize> = if total <= config.max_coords.max(200) {
        (0..total).collect()
    } else {
        let mut r = rng::seeded(config.seed);
        index::sample(&mut r, total, config.max_coords.max(200)).into_vec()
    };
    coords.sort_unstable();

    let layout: Vec<(String, usize, usize)> = {
        let mut offset = 0;
        params
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                let entry = (name, offset, t.len());
                offset += t.len();
                entry
            })
            .collect()
    };
    let mut per_tensor: Vec<TensorCheck> = layout
        .iter()
        .map(|(name, _, _)| TensorCheck {
            name: name.clone(),
            checked: 0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_error: 0.0,
        })
        .collect();

    let mut probe = params.clone();
    let mut tensor_idx = 0;
    for &c in &coords {
        while c >= layout[tensor_idx].1 + layout[tensor_idx].2 {
            tensor_idx += 1;
        }
        let orig = params.flat_get(c);
        probe.flat_set(c, orig + config.eps);
        let plus = loss(&probe)?;
        probe.flat_set(c, orig - config.eps);
        let minus = loss(&probe)?;
        probe.flat_set(c, orig);
        let numeric = (plus - minus) / (2.0 * config.eps);
        let a = analytic.flat_get(c);
        let denom = a.abs().max(numeric.abs()).max(config.abs_floor);
        let rel = (a - numeric).abs() / denom;
        if !rel.is_finite() {
            return Err(MinaError::GradCheck(format!("non-finite gradient at coordinate {c}")));
        }
        let entry = &mut per_tensor[tensor_idx];
        entry.checked += 1;
        if entry.checked == 1 || rel > entry.rel_error {
            entry.worst_index = c - layout[tensor_idx].1;
            entry.analytic = a;
            entry.numeric = numeric;
            entry.rel_error = rel;
        }
    }
    per_tensor.retain(|t| t.checked > 0);
    let max_rel_error = per_tensor.iter().map(|t| t.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_error,
        coords_checked: coords.len(),
        per_tensor,
    })
}
