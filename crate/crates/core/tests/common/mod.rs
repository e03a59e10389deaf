//! Independent reference implementations used as test oracles. Everything here
//! is written with plain loops and no shared code with the library kernels.

#![allow(dead_code)]

pub mod criteria;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn random_vec(r: &mut Pcg64, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn random_matrix(r: &mut Pcg64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_vec(r, cols)).collect()
}

/// `out[j][f] = b[f] + sum_i w[f][i] x[j*stride + i]`
pub fn naive_conv1d(x: &[f64], w: &[Vec<f64>], b: Option<&[f64]>, stride: usize) -> Vec<Vec<f64>> {
    let size = w[0].len();
    let n = (x.len() - size) / stride + 1;
    let mut out = vec![vec![0.0; w.len()]; n];
    for j in 0..n {
        for f in 0..w.len() {
            let mut acc = b.map_or(0.0, |b| b[f]);
            for i in 0..size {
                acc += w[f][i] * x[j * stride + i];
            }
            out[j][f] = acc;
        }
    }
    out
}

/// `y[r][o] = b[o] + sum_i x[r][i] w[i][o]`
pub fn naive_dense(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..b.len())
                .map(|o| {
                    let mut acc = b[o];
                    for i in 0..row.len() {
                        acc += row[i] * w[i][o];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction with gate blocks ordered input, forget, candidate, output.
/// `w_ih` is `[4h][in]`, `w_hh` is `[4h][h]`.
pub fn naive_lstm(w_ih: &[Vec<f64>], w_hh: &[Vec<f64>], bias: &[f64], xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = w_hh[0].len();
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    let mut out = Vec::new();
    for x in xs {
        let pre: Vec<f64> = (0..4 * h)
            .map(|r| {
                let mut a = bias[r];
                for i in 0..x.len() {
                    a += w_ih[r][i] * x[i];
                }
                for i in 0..h {
                    a += w_hh[r][i] * hs[i];
                }
                a
            })
            .collect();
        let mut new_h = vec![0.0; h];
        for j in 0..h {
            let i_g = sigmoid(pre[j]);
            let f_g = sigmoid(pre[h + j]);
            let g_g = pre[2 * h + j].tanh();
            let o_g = sigmoid(pre[3 * h + j]);
            cs[j] = f_g * cs[j] + i_g * g_g;
            new_h[j] = o_g * cs[j].tanh();
        }
        hs = new_h;
        out.push(hs.clone());
    }
    out
}

/// Fraction of (positive, negative) pairs ordered correctly, ties worth one half.
pub fn brute_roc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Average precision by enumerating every distinct threshold: the rule
/// `score >= t` for each observed `t`, summing precision times recall gained.
pub fn brute_ap(scores: &[f64], labels: &[usize]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if *l == 1 {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// One-sided periodogram by direct DFT: `|X_k|^2 / (fs n)`, interior bins doubled.
pub fn naive_psd(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    let bins = n / 2 + 1;
    (0..bins)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let p = (re * re + im * im) / (fs * n as f64);
            let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
            if edge {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Attention in its two-layer form `V^T (W^T [f; k] + b)`, softmax, weighted sum.
pub fn naive_attention(
    features: &[Vec<f64>],
    knowledge: &[Vec<f64>],
    w: &[Vec<f64>],
    b: &[f64],
    v: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = features
        .iter()
        .zip(knowledge)
        .map(|(f, k)| {
            let x: Vec<f64> = f.iter().chain(k).copied().collect();
            let mut s = 0.0;
            for d in 0..b.len() {
                let mut u = b[d];
                for i in 0..x.len() {
                    u += w[i][d] * x[i];
                }
                s += v[d] * u;
            }
            s
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = e.iter().sum();
    let weights: Vec<f64> = e.iter().map(|x| x / z).collect();
    let mut ctx = vec![0.0; features[0].len()];
    for (a, f) in weights.iter().zip(features) {
        for i in 0..ctx.len() {
            ctx[i] += a * f[i];
        }
    }
    (weights, ctx)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Root mean square over `x[from..to]`.
pub fn rms(x: &[f64], from: usize, to: usize) -> f64 {
    (x[from..to].iter().map(|v| v * v).sum::<f64>() / (to - from) as f64).sqrt()
}

pub fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (2.0 * std::f64::consts::PI * freq * k as f64 / fs).sin())
        .collect()
}

/// Lag in `-max..=max` maximizing `sum_t x[t] y[t + lag]`.
pub fn xcorr_peak_lag(x: &[f64], y: &[f64], max: i64) -> i64 {
    let n = x.len() as i64;
    (-max..=max)
        .max_by(|&a, &b| {
            let c = |lag: i64| -> f64 {
                (0..n)
                    .filter(|t| (0..n).contains(&(t + lag)))
                    .map(|t| x[t as usize] * y[(t + lag) as usize])
                    .sum()
            };
            c(a).partial_cmp(&c(b)).unwrap()
        })
        .unwrap()
}

/// Indices of local maxima above `threshold` at least `gap` samples apart.
pub fn detect_peaks(x: &[f64], threshold: f64, gap: usize) -> Vec<usize> {
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..x.len() - 1 {
        if x[i] > threshold && x[i] >= x[i - 1] && x[i] > x[i + 1] {
            match peaks.last() {
                Some(&p) if i - p < gap => {
                    if x[i] > x[p] {
                        *peaks.last_mut().unwrap() = i;
                    }
                }
                _ => peaks.push(i),
            }
        }
    }
    peaks
}

/// Coefficient of variation of consecutive differences.
pub fn interval_cv(peaks: &[usize]) -> f64 {
    let d: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
    var.sqrt() / mean
}
