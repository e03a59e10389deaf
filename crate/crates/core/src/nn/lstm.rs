//! Single-layer LSTM and its bidirectional wrapper.
//!
//! Gate rows are stacked `[input, forget, candidate, output]`, each `hidden` wide.

use super::tensor::{axpy, Tensor};
use crate::error::{MinaError, Result};
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[4 * hidden, input]`
    pub w_ih: Tensor,
    /// `[4 * hidden, hidden]`
    pub w_hh: Tensor,
    /// `[4 * hidden]`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_ih: Tensor::zeros(&[4 * hidden, input]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Weights uniform in `±1/sqrt(hidden)`, forget-gate bias 1, other biases 0.
    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut p = LstmParams::zeros(input, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        for t in [&mut p.w_ih, &mut p.w_hh] {
            for v in t.data_mut() {
                *v = rng::uniform_range(rng, -bound, bound);
            }
        }
        p.bias.data_mut()[hidden..2 * hidden].fill(1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols()
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Post-activation gates per step, `[steps, 4 * hidden]`.
    gates: Tensor,
    /// Cell states per step, `[steps, hidden]`.
    cells: Tensor,
    /// Hidden states per step, `[steps, hidden]`.
    pub hidden: Tensor,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the LSTM over the rows of `inputs` (`[steps, input]`) from zero state.
pub fn lstm(params: &LstmParams, inputs: &Tensor) -> Result<LstmCache> {
    let h = params.hidden();
    if inputs.cols() != params.input() {
        return Err(MinaError::Shape(format!(
            "lstm: input width {} but weights expect {}",
            inputs.cols(),
            params.input()
        )));
    }
    let steps = inputs.rows();
    let mut gates = Tensor::zeros(&[steps, 4 * h]);
    let mut cells = Tensor::zeros(&[steps, h]);
    let mut hidden = Tensor::zeros(&[steps, h]);
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let w_ih = params.w_ih.transpose();
    let w_hh = params.w_hh.transpose();
    for t in 0..steps {
        let x = inputs.row(t);
        let g = gates.row_mut(t);
        g.copy_from_slice(params.bias.data());
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, w_ih.row(i), g);
            }
        }
        for (i, &hi) in h_prev.iter().enumerate() {
            axpy(hi, w_hh.row(i), g);
        }
        for j in 0..h {
            g[j] = sigmoid(g[j]);
            g[h + j] = sigmoid(g[h + j]);
            g[2 * h + j] = g[2 * h + j].tanh();
            g[3 * h + j] = sigmoid(g[3 * h + j]);
        }
        let c = cells.row_mut(t);
        for j in 0..h {
            c[j] = g[h + j] * c_prev[j] + g[j] * g[2 * h + j];
        }
        let hr = hidden.row_mut(t);
        for j in 0..h {
            hr[j] = g[3 * h + j] * c[j].tanh();
        }
        h_prev.copy_from_slice(hr);
        c_prev.copy_from_slice(c);
    }
    Ok(LstmCache { gates, cells, hidden })
}

/// Backpropagates `d_hidden` (`[steps, hidden]`) through time; accumulates into `grads`
/// and returns the input gradient `[steps, input]`.
pub fn lstm_backward(
    params: &LstmParams,
    inputs: &Tensor,
    cache: &LstmCache,
    d_hidden: &Tensor,
    grads: &mut LstmParams,
) -> Tensor {
    let h = params.hidden();
    let steps = inputs.rows();
    let mut d_inputs = Tensor::zeros(&[steps, params.input()]);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let zeros = vec![0.0; h];
    for t in (0..steps).rev() {
        let g = cache.gates.row(t);
        let c = cache.cells.row(t);
        let (c_prev, h_prev) = if t > 0 {
            (cache.cells.row(t - 1), cache.hidden.row(t - 1))
        } else {
            (&zeros[..], &zeros[..])
        };
        let dh_t = d_hidden.row(t);
        for j in 0..h {
            let (i, f, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let dh = dh_t[j] + dh_next[j];
            let tc = c[j].tanh();
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * cand * i * (1.0 - i);
            dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc * i * (1.0 - cand * cand);
            dz[3 * h + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let x = inputs.row(t);
        dh_next.fill(0.0);
        let dx = d_inputs.row_mut(t);
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grads.bias.data_mut()[r] += d;
            axpy(d, x, grads.w_ih.row_mut(r));
            axpy(d, h_prev, grads.w_hh.row_mut(r));
            axpy(d, params.w_ih.row(r), dx);
            axpy(d, params.w_hh.row(r), &mut dh_next);
        }
    }
    d_inputs
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmParams {
            forward: LstmParams::zeros(input, hidden),
            backward: LstmParams::zeros(input, hidden),
        }
    }

    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        BiLstmParams {
            forward: LstmParams::init(input, hidden, rng),
            backward: LstmParams::init(input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden()
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    forward: LstmCache,
    backward: LstmCache,
    reversed: Tensor,
    /// `[steps, 2 * hidden]`; row `k` is `[forward h_k ; backward h_k]`.
    pub output: Tensor,
}

fn reverse_rows(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(t.shape());
    let n = t.rows();
    for r in 0..n {
        out.row_mut(r).copy_from_slice(t.row(n - 1 - r));
    }
    out
}

pub fn bilstm(params: &BiLstmParams, inputs: &Tensor) -> Result<BiLstmCache> {
    let forward = lstm(&params.forward, inputs)?;
    let reversed = reverse_rows(inputs);
    let backward = lstm(&params.backward, &reversed)?;
    let h = params.forward.hidden();
    let steps = inputs.rows();
    let mut output = Tensor::zeros(&[steps, 2 * h]);
    for k in 0..steps {
        let row = output.row_mut(k);
        row[..h].copy_from_slice(forward.hidden.row(k));
        row[h..].copy_from_slice(backward.hidden.row(steps - 1 - k));
    }
    Ok(BiLstmCache {
        forward,
        backward,
        reversed,
        output,
    })
}

pub fn bilstm_backward(
    params: &BiLstmParams,
    inputs: &Tensor,
    cache: &BiLstmCache,
    d_output: &Tensor,
    grads: &mut BiLstmParams,
) -> Tensor {
    let h = params.forward.hidden();
    let steps = inputs.rows();
    let mut d_fwd = Tensor::zeros(&[steps, h]);
    let mut d_bwd = Tensor::zeros(&[steps, h]);
    for k in 0..steps {
        let row = d_output.row(k);
        d_fwd.row_mut(k).copy_from_slice(&row[..h]);
        d_bwd.row_mut(steps - 1 - k).copy_from_slice(&row[h..]);
    }
    let mut d_inputs = lstm_backward(&params.forward, inputs, &cache.forward, &d_fwd, &mut grads.forward);
    let d_rev = lstm_backward(
        &params.backward,
        &cache.reversed,
        &cache.backward,
        &d_bwd,
        &mut grads.backward,
    );
    for k in 0..steps {
        axpy(1.0, d_rev.row(steps - 1 - k), d_inputs.row_mut(k));
    }
    d_inputs
}
