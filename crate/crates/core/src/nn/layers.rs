use super::tensor::{axpy, dot, Tensor};
use crate::error::{MinaError, Result};
use crate::rng::{self, SeededRng};

/// Lower bound applied to probabilities before taking logs in the loss.
pub const LOG_CLAMP: f64 = 1e-12;

/// `y_r = x_r W + b` for every row `r`; `x` is `[rows, in]`, `w` is `[in, out]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &[f64]) -> Result<Tensor> {
    let (rows, fan_in) = (x.rows(), x.cols());
    let fan_out = w.cols();
    if w.rows() != fan_in || b.len() != fan_out {
        return Err(MinaError::Shape(format!(
            "dense: input {:?}, weight {:?}, bias {}",
            x.shape(),
            w.shape(),
            b.len()
        )));
    }
    let mut y = Tensor::zeros(&[rows, fan_out]);
    for r in 0..rows {
        let yr = y.row_mut(r);
        yr.copy_from_slice(b);
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, w.row(i), yr);
            }
        }
    }
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> DenseGrads {
    let mut input = Tensor::zeros_like(x);
    let mut weight = Tensor::zeros_like(w);
    let mut bias = vec![0.0; w.cols()];
    for r in 0..x.rows() {
        let dyr = dy.row(r);
        axpy(1.0, dyr, &mut bias);
        let dxr = input.row_mut(r);
        for (i, dxi) in dxr.iter_mut().enumerate() {
            *dxi = dot(dyr, w.row(i));
        }
        for (i, &xi) in x.row(r).iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, dyr, weight.row_mut(i));
            }
        }
    }
    DenseGrads { input, weight, bias }
}

pub fn conv_output_len(len: usize, size: usize, stride: usize) -> Option<usize> {
    (size >= 1 && stride >= 1 && len >= size).then(|| (len - size) / stride + 1)
}

/// Valid (unpadded) strided cross-correlation; returns `[N, K]` for `K` filters.
pub fn conv1d(input: &[f64], filters: &Tensor, bias: Option<&[f64]>, stride: usize) -> Result<Tensor> {
    let layout = ConvLayout::new(filters, bias)?;
    layout.apply(input, bias, stride)
}

/// [`conv1d`] applied to every row of `inputs`, sharing one weight layout.
pub fn conv1d_rows(inputs: &Tensor, filters: &Tensor, bias: Option<&[f64]>, stride: usize) -> Result<Vec<Tensor>> {
    let layout = ConvLayout::new(filters, bias)?;
    (0..inputs.rows())
        .map(|r| layout.apply(inputs.row(r), bias, stride))
        .collect()
}

/// Filters arranged for the inner loop: wide banks are transposed to
/// `[size, K]` so each output row accumulates contiguous filter columns.
struct ConvLayout<'a> {
    filters: &'a Tensor,
    transposed: Option<Tensor>,
}

impl<'a> ConvLayout<'a> {
    fn new(filters: &'a Tensor, bias: Option<&[f64]>) -> Result<Self> {
        if bias.is_some_and(|b| b.len() != filters.rows()) {
            return Err(MinaError::Shape("conv1d: bias length differs from filter count".into()));
        }
        let transposed = (filters.rows() >= 8).then(|| filters.transpose());
        Ok(ConvLayout { filters, transposed })
    }

    fn apply(&self, input: &[f64], bias: Option<&[f64]>, stride: usize) -> Result<Tensor> {
        let (k, size) = (self.filters.rows(), self.filters.cols());
        let n = conv_output_len(input.len(), size, stride).ok_or_else(|| {
            MinaError::Shape(format!(
                "conv1d: input of length {} shorter than filter size {size} (stride {stride})",
                input.len()
            ))
        })?;
        let mut out = Tensor::zeros(&[n, k]);
        for j in 0..n {
            let window = &input[j * stride..j * stride + size];
            let row = out.row_mut(j);
            if let Some(b) = bias {
                row.copy_from_slice(b);
            }
            match &self.transposed {
                Some(t) => {
                    for (i, &x) in window.iter().enumerate() {
                        axpy(x, t.row(i), row);
                    }
                }
                None => {
                    for (f, o) in row.iter_mut().enumerate() {
                        *o += dot(self.filters.row(f), window);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub filters: Tensor,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

/// Accumulates filter (and optionally bias) gradients without forming the input gradient.
pub fn conv1d_param_grads(
    input: &[f64],
    stride: usize,
    d_out: &Tensor,
    filter_grads: &mut Tensor,
    mut bias_grads: Option<&mut [f64]>,
) {
    let size = filter_grads.cols();
    for j in 0..d_out.rows() {
        let window = &input[j * stride..j * stride + size];
        for (f, &d) in d_out.row(j).iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            if let Some(b) = bias_grads.as_deref_mut() {
                b[f] += d;
            }
            axpy(d, window, filter_grads.row_mut(f));
        }
    }
}

pub fn conv1d_backward(input: &[f64], filters: &Tensor, stride: usize, d_out: &Tensor) -> ConvGrads {
    let size = filters.cols();
    let mut g = ConvGrads {
        filters: Tensor::zeros_like(filters),
        bias: vec![0.0; filters.rows()],
        input: vec![0.0; input.len()],
    };
    for j in 0..d_out.rows() {
        let start = j * stride;
        let window = &input[start..start + size];
        for (f, &d) in d_out.row(j).iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g.bias[f] += d;
            axpy(d, window, g.filters.row_mut(f));
            axpy(d, filters.row(f), &mut g.input[start..start + size]);
        }
    }
    g
}

pub fn relu_in_place(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}

/// Vector-Jacobian product of softmax: `dv_i = p_i (dp_i - <p, dp>)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}

/// Inverted-dropout keep mask: each entry is 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut SeededRng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng::uniform(rng) < rate { 0.0 } else { keep })
        .collect()
}

pub fn dropout(v: &[f64], rate: f64, training: bool, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(MinaError::InvalidInput(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(v.to_vec());
    }
    let mask = dropout_mask(v.len(), rate, &mut rng::seeded(seed));
    Ok(v.iter().zip(&mask).map(|(x, m)| x * m).collect())
}

/// `-sum_c 1{z_c = 1} w_c log p_c`, with `p_c` clamped below at [`LOG_CLAMP`].
pub fn weighted_cross_entropy(p: &[f64], z: &[f64], w: &[f64]) -> Result<f64> {
    if p.len() != z.len() || p.len() != w.len() {
        return Err(MinaError::Shape("cross entropy: p, z and w lengths differ".into()));
    }
    let ones = z.iter().filter(|&&v| v == 1.0).count();
    if ones != 1 || z.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(MinaError::InvalidInput("label vector is not one-hot".into()));
    }
    Ok(z.iter()
        .zip(p.iter().zip(w))
        .filter(|(zc, _)| **zc == 1.0)
        .map(|(_, (pc, wc))| -wc * pc.max(LOG_CLAMP).ln())
        .sum())
}

/// Gradient of the weighted cross entropy with respect to the logits feeding the softmax.
pub fn weighted_cross_entropy_grad(p: &[f64], label: usize, w: &[f64]) -> Vec<f64> {
    if p[label] < LOG_CLAMP {
        return vec![0.0; p.len()];
    }
    p.iter()
        .enumerate()
        .map(|(c, &pc)| w[label] * (pc - if c == label { 1.0 } else { 0.0 }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_and_broadcast() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(dense(&x, &eye, &[0.0, 0.0]).unwrap(), x);
        let y = dense(&x, &Tensor::zeros(&[2, 2]), &[1.0, 2.0]).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[1.0, 2.0]);
        }
        assert!(dense(&x, &Tensor::zeros(&[3, 2]), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn conv_shapes_and_errors() {
        let filters = Tensor::zeros(&[64, 32]);
        let out = conv1d(&[0.5; 50], &filters, Some(&[0.0; 64]), 2).unwrap();
        assert_eq!(out.shape(), &[10, 64]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(conv1d(&[0.0; 31], &filters, None, 2).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p[0], 1.0);
        assert!(p[1] > 0.0 && p[1] < 1e-300 || p[1] == 0.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dropout_modes() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(dropout(&v, 0.5, false, 1).unwrap(), v);
        assert_eq!(dropout(&v, 0.0, true, 1).unwrap(), v);
        assert!(dropout(&v, 1.0, true, 1).is_err());
        let kept = dropout(&vec![1.0; 100_000], 0.5, true, 9)
            .unwrap()
            .iter()
            .filter(|&&x| x != 0.0)
            .count() as f64
            / 1e5;
        assert!(kept > 0.49 && kept < 0.51, "{kept}");
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(
            weighted_cross_entropy(&[1.0, 0.0], &[1.0, 0.0], &[3.0, 7.0]).unwrap(),
            0.0
        );
        let l = weighted_cross_entropy(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!((l - 1.3862943611198906).abs() < 1e-12);
        let l2 = weighted_cross_entropy(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 4.0]).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-12);
        assert!(weighted_cross_entropy(&[0.5, 0.5], &[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(weighted_cross_entropy(&[0.5, 0.5], &[0.5, 0.5], &[1.0, 1.0]).is_err());
        let finite = weighted_cross_entropy(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((finite + LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn ce_grad_vanishes_at_optimum() {
        let g = weighted_cross_entropy_grad(&[0.0, 1.0], 1, &[1.0, 2.0]);
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }
}
