//! Knowledge-guided attention pooling.
//!
//! For items `x_j = [f_j ; k_j]` (learned feature row plus knowledge row) the
//! score is `e_j = V . (W^T x_j + b)`: an affine layer followed by a linear
//! projection, with no nonlinearity in between. Weights are `softmax(e)` and
//! the context is the weighted sum of the feature rows.
//!
//! Note that the bias `b` only shifts every score by `b . V`, so it never
//! changes the weights and its gradient is always zero.

use crate::error::{MinaError, Result};
use crate::nn::{axpy, dot, softmax, softmax_backward, Tensor};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `[dim + E, D]`
    pub w: Tensor,
    /// `[D]`
    pub b: Tensor,
    /// `[D]`
    pub v: Tensor,
}

impl AttentionParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        AttentionParams {
            w: Tensor::zeros(&[input, hidden]),
            b: Tensor::zeros(&[hidden]),
            v: Tensor::zeros(&[hidden]),
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut p = AttentionParams::zeros(input, hidden);
        let bw = 1.0 / (input as f64).sqrt();
        let bv = 1.0 / (hidden as f64).sqrt();
        for x in p.w.data_mut().iter_mut().chain(p.b.data_mut()) {
            *x = rng::uniform_range(rng, -bw, bw);
        }
        for x in p.v.data_mut() {
            *x = rng::uniform_range(rng, -bv, bv);
        }
        p
    }

    /// `W V`, the score sensitivity to each input coordinate.
    fn projection(&self) -> Vec<f64> {
        (0..self.input_dim())
            .map(|r| dot(self.w.row(r), self.v.data()))
            .collect()
    }

    fn input_dim(&self) -> usize {
        self.w.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attended {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// Scores `len` items given features `[len, dim]` and knowledge `[len, E]`.
///
/// With no nonlinearity between the two layers the score reduces to
/// `x_j . (W V) + b . V`, which is what gets evaluated.
pub fn knowledge_attention(features: &Tensor, knowledge: &Tensor, params: &AttentionParams) -> Result<Attended> {
    let len = features.rows();
    let dim = features.cols();
    if knowledge.rows() != len {
        return Err(MinaError::Shape(format!(
            "attention: {len} feature items but {} knowledge items",
            knowledge.rows()
        )));
    }
    if dim + knowledge.cols() != params.input_dim() {
        return Err(MinaError::Shape(format!(
            "attention: input width {} + {} but weights expect {}",
            dim,
            knowledge.cols(),
            params.input_dim()
        )));
    }
    if len == 0 {
        return Err(MinaError::Shape("attention over zero items".into()));
    }
    let wv = params.projection();
    let offset = dot(params.b.data(), params.v.data());
    let scores: Vec<f64> = (0..len)
        .map(|j| offset + dot(features.row(j), &wv[..dim]) + dot(knowledge.row(j), &wv[dim..]))
        .collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; dim];
    for (j, &a) in weights.iter().enumerate() {
        axpy(a, features.row(j), &mut context);
    }
    Ok(Attended { weights, context })
}

/// Accumulates parameter gradients into `grads` and returns
/// `(d_features [len, dim], d_knowledge [len, E])`.
pub fn knowledge_attention_backward(
    features: &Tensor,
    knowledge: &Tensor,
    params: &AttentionParams,
    out: &Attended,
    d_context: &[f64],
    grads: &mut AttentionParams,
) -> (Tensor, Tensor) {
    let len = features.rows();
    let dim = features.cols();
    let e = knowledge.cols();
    let d_weights: Vec<f64> = (0..len).map(|j| dot(d_context, features.row(j))).collect();
    let d_scores = softmax_backward(&out.weights, &d_weights);

    let wv = params.projection();
    let mut d_features = Tensor::zeros(&[len, dim]);
    let mut d_knowledge = Tensor::zeros(&[len, e]);
    // sum_j ds_j x_j
    let mut weighted_input = vec![0.0; dim + e];
    for (j, (&a, &ds)) in out.weights.iter().zip(&d_scores).enumerate() {
        let df = d_features.row_mut(j);
        axpy(a, d_context, df);
        axpy(ds, &wv[..dim], df);
        axpy(ds, &wv[dim..], d_knowledge.row_mut(j));
        axpy(ds, features.row(j), &mut weighted_input[..dim]);
        axpy(ds, knowledge.row(j), &mut weighted_input[dim..]);
    }
    let ds_sum: f64 = d_scores.iter().sum();
    let v = params.v.data();
    // dV = W^T (sum_j ds_j x_j) + b sum_j ds_j, dW = (sum_j ds_j x_j) V^T, db = V sum_j ds_j
    axpy(ds_sum, params.b.data(), grads.v.data_mut());
    axpy(ds_sum, v, grads.b.data_mut());
    for (r, &s) in weighted_input.iter().enumerate() {
        if s != 0.0 {
            axpy(s, params.w.row(r), grads.v.data_mut());
            axpy(s, v, grads.w.row_mut(r));
        }
    }
    (d_features, d_knowledge)
}

/// Uniform pooling: every item weighted `1 / len`.
pub fn mean_pool(features: &Tensor) -> Attended {
    let len = features.rows();
    let weights = vec![1.0 / len as f64; len];
    let mut context = vec![0.0; features.cols()];
    for (j, &w) in weights.iter().enumerate() {
        axpy(w, features.row(j), &mut context);
    }
    Attended { weights, context }
}

pub fn mean_pool_backward(features: &Tensor, d_context: &[f64]) -> Tensor {
    let len = features.rows();
    let mut d = Tensor::zeros(features.shape());
    for j in 0..len {
        axpy(1.0 / len as f64, d_context, d.row_mut(j));
    }
    d
}
