//! Checks shared by the acceptance run and the per-area tests. Each returns an
//! [`Outcome`] instead of panicking so the acceptance run can report them all.

use std::time::Instant;

use mina::dataset::{synth_ecg, EcgRecord};
use mina::dsp::{add_baseline_wander, add_white_noise, apply_filter, design_fir_bandpass, periodogram_psd, BandSpec};
use mina::harness::{align_attention, pr_auc, roc_auc};
use mina::model::{ForwardOptions, Mina, ModelConfig, ModelParams, Variant};
use mina::nn::{
    bilstm, conv1d, dense, finite_diff_check, BiLstmParams, GradCheckConfig, LstmParams, Parameters, Tensor,
};
use rand::RngExt;

use super::*;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }

    pub fn assert(&self, name: &str) {
        assert!(self.pass, "{name}: {}", self.detail);
    }
}

fn tensor(rows: &[Vec<f64>]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

fn vector(v: &[f64]) -> Tensor {
    Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
}

/// `ModelConfig::tiny` switched to `variant`, with the single full band the baselines use.
pub fn tiny_for(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::tiny();
    c.variant = variant;
    if variant != Variant::Mina {
        c.bands = vec![BandSpec::new(0.0, c.sampling_rate / 2.0)];
    }
    c
}

pub fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let config = ModelConfig::tiny();
    let model = Mina::new(config.clone()).unwrap();
    let params = model.init_params(5);
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for class in 0..2 {
        let record = synth_ecg(class, 40 + class as u64, config.n, config.sampling_rate).unwrap();
        let prep = model.prepare(&record).unwrap();
        let weights = [0.8, 1.3];
        let opts = ForwardOptions::inference();
        let mut grads = params.zeros_like();
        model
            .loss_and_grad(&params, &prep, &weights, &opts, 1.0, &mut grads)
            .unwrap();
        let report = finite_diff_check(
            &params,
            &grads,
            |p| model.loss(p, &prep, &weights, &opts),
            &GradCheckConfig::default(),
        )
        .unwrap();
        worst = worst.max(report.max_rel_error);
        coords += report.coords_checked;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over {coords} coordinates in {secs:.1} s"),
    )
}

fn is_distribution(w: &[f64]) -> bool {
    let sum: f64 = w.iter().sum();
    w.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() <= 1e-6
}

/// Every coordinate of `point` lies between the column minimum and maximum of `items`.
fn in_hull(point: &[f64], items: &[Vec<f64>]) -> bool {
    let slack = 1e-12;
    (0..point.len()).all(|c| {
        let lo = items.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let hi = items.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        point[c] >= lo - slack && point[c] <= hi + slack
    })
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// One random draw: a variant, parameters scaled to sharpen or flatten the
/// softmax, and a synthetic or white-noise input.
fn random_draw(r: &mut rand_pcg::Pcg64) -> (Mina, ModelParams, EcgRecord) {
    let variant = Variant::ALL[r.random_range(0..Variant::ALL.len())];
    let config = tiny_for(variant);
    let model = Mina::new(config.clone()).unwrap();
    let mut params = model.init_params(r.random::<u64>());
    let gain = r.random_range(0.2..6.0);
    for t in params.tensors_mut() {
        t.scale(gain);
    }
    let record = if r.random::<bool>() {
        synth_ecg(
            r.random_range(0..2usize),
            r.random::<u64>(),
            config.n,
            config.sampling_rate,
        )
        .unwrap()
    } else {
        let scale = r.random_range(0.1..3.0);
        EcgRecord {
            id: "noise".into(),
            samples: random_vec(r, config.n).iter().map(|v| v * scale).collect(),
            label: 0,
            sampling_rate: config.sampling_rate,
        }
    };
    (model, params, record)
}

pub fn attention_normalization() -> Outcome {
    let mut r = rng(21);
    for draw in 0..100 {
        let (model, params, record) = random_draw(&mut r);
        let config = model.config().clone();
        let prep = model.prepare(&record).unwrap();
        let pass = model
            .forward_prepared(&params, &prep, &ForwardOptions::inference())
            .unwrap();
        let att = pass.attention();
        for (i, alpha) in att.alpha.iter().enumerate() {
            if !(0..alpha.rows()).all(|m| is_distribution(alpha.row(m))) {
                return Outcome::new(
                    false,
                    format!("draw {draw}: alpha row of channel {i} not a distribution"),
                );
            }
        }
        if !att.beta.iter().all(|b| is_distribution(b)) || !is_distribution(&att.gamma) {
            return Outcome::new(false, format!("draw {draw}: beta or gamma not a distribution"));
        }
        for (i, ch) in prep.channels.iter().enumerate() {
            let p = params.channel(i);
            let w = rows(&p.conv_w);
            let beat = &pass.beats[i];
            for m in 0..ch.segments.rows() {
                let mut feats = naive_conv1d(ch.segments.row(m), &w, Some(p.conv_b.data()), config.conv_stride);
                if config.conv_relu {
                    feats.iter_mut().flatten().for_each(|v| *v = v.max(0.0));
                }
                if !in_hull(beat.o.row(m), &feats) {
                    return Outcome::new(false, format!("draw {draw}: o row {m} outside its features"));
                }
            }
            let rhythm = &pass.rhythms[i];
            if !in_hull(&rhythm.c, &rows(&rhythm.states)) {
                return Outcome::new(false, format!("draw {draw}: c outside its states"));
            }
        }
        if !in_hull(&pass.fusion.d, &rows(&pass.fusion.q)) {
            return Outcome::new(false, format!("draw {draw}: d outside the channel vectors"));
        }
    }
    Outcome::new(true, "100 draws over all variants")
}

pub fn layer_oracles() -> Outcome {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = r.random_range(1..12usize);
        let size = r.random_range(1..9usize);
        let stride = r.random_range(1..4usize);
        let len = size + r.random_range(0..40usize);
        let x = random_vec(&mut r, len);
        let w = random_matrix(&mut r, k, size);
        let b = random_vec(&mut r, k);
        let got = conv1d(&x, &tensor(&w), Some(&b), stride).unwrap();
        let want = naive_conv1d(&x, &w, Some(&b), stride);
        if got.rows() != want.len() {
            return Outcome::new(false, "conv1d output length");
        }
        for (g, e) in rows(&got).iter().zip(&want) {
            worst = worst.max(max_abs_diff(g, e));
        }
    }
    for _ in 0..50 {
        let (n, fan_in, fan_out) = (
            r.random_range(1..8usize),
            r.random_range(1..20usize),
            r.random_range(1..20usize),
        );
        let x = random_matrix(&mut r, n, fan_in);
        let w = random_matrix(&mut r, fan_in, fan_out);
        let b = random_vec(&mut r, fan_out);
        let got = dense(&tensor(&x), &tensor(&w), &b).unwrap();
        for (g, e) in rows(&got).iter().zip(&naive_dense(&x, &w, &b)) {
            worst = worst.max(max_abs_diff(g, e));
        }
    }
    for _ in 0..50 {
        let (steps, input, hidden) = (
            r.random_range(1..12usize),
            r.random_range(1..10usize),
            r.random_range(1..7usize),
        );
        let dirs: Vec<_> = (0..2)
            .map(|_| {
                (
                    random_matrix(&mut r, 4 * hidden, input),
                    random_matrix(&mut r, 4 * hidden, hidden),
                    random_vec(&mut r, 4 * hidden),
                )
            })
            .collect();
        let cell = |d: &(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)| LstmParams {
            w_ih: tensor(&d.0),
            w_hh: tensor(&d.1),
            bias: vector(&d.2),
        };
        let params = BiLstmParams {
            forward: cell(&dirs[0]),
            backward: cell(&dirs[1]),
        };
        let xs = random_matrix(&mut r, steps, input);
        let out = bilstm(&params, &tensor(&xs)).unwrap().output;
        let fwd = naive_lstm(&dirs[0].0, &dirs[0].1, &dirs[0].2, &xs);
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let bwd = naive_lstm(&dirs[1].0, &dirs[1].1, &dirs[1].2, &rev);
        for k in 0..steps {
            let want: Vec<f64> = fwd[k].iter().chain(&bwd[steps - 1 - k]).copied().collect();
            worst = worst.max(max_abs_diff(out.row(k), &want));
        }
    }
    Outcome::new(
        worst <= 1e-12,
        format!("conv1d, dense, bilstm x50 each, max abs diff {worst:.1e}"),
    )
}

/// Random scores drawn from a small pool so ties are common, labels with both classes.
fn random_case(r: &mut rand_pcg::Pcg64) -> (Vec<f64>, Vec<usize>) {
    let n = r.random_range(2..=12usize);
    let pool = r.random_range(1..=n);
    let levels = random_vec(r, pool);
    loop {
        let scores: Vec<f64> = (0..n).map(|_| levels[r.random_range(0..pool)]).collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..2usize)).collect();
        if labels.contains(&0) && labels.contains(&1) {
            return (scores, labels);
        }
    }
}

pub fn metric_oracles() -> Outcome {
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (scores, labels) = random_case(&mut r);
        let roc = roc_auc(&scores, &labels).unwrap();
        let ap = pr_auc(&scores, &labels).unwrap();
        worst = worst.max((roc - brute_roc(&scores, &labels)).abs());
        worst = worst.max((ap - brute_ap(&scores, &labels)).abs());
        // Strictly increasing transforms keep the ranking, so both metrics must not move.
        for t in [|s: f64| s.exp(), |s: f64| 3.0 * s - 7.0, |s: f64| s.powi(3)] {
            let moved: Vec<f64> = scores.iter().map(|&s| t(s)).collect();
            worst = worst.max((roc_auc(&moved, &labels).unwrap() - roc).abs());
            worst = worst.max((pr_auc(&moved, &labels).unwrap() - ap).abs());
        }
    }
    Outcome::new(
        worst <= 1e-12,
        format!("500 trials with ties, max deviation {worst:.1e}"),
    )
}

pub fn dsp() -> Outcome {
    let fs = 300.0;
    let mut r = rng(41);
    let mut parseval: f64 = 0.0;
    for _ in 0..20 {
        let n = r.random_range(2..600usize);
        let x = random_vec(&mut r, n);
        let psd = periodogram_psd(&x, fs).unwrap();
        let power = psd.iter().sum::<f64>() * fs / n as f64;
        let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        parseval = parseval.max((power - mean_sq).abs() / mean_sq);
    }
    let tone = periodogram_psd(&sine(10.0, fs, 3000), fs).unwrap();
    let peak = (0..tone.len()).max_by(|&a, &b| tone[a].total_cmp(&tone[b])).unwrap();
    let filter = design_fir_bandpass(BandSpec::new(10.0, 50.0), fs, 251).unwrap();
    let pass_db = 20.0 * filter.magnitude_at(25.0, fs).log10();
    let stop_db = 20.0 * filter.magnitude_at(1.0, fs).log10();
    let x = sine(25.0, fs, 3000);
    let y = apply_filter(&x, &filter).unwrap();
    let lag = xcorr_peak_lag(&x, &y, 20);
    let pass = parseval <= 1e-6 && peak == 100 && pass_db.abs() <= 1.0 && stop_db <= -20.0 && lag.abs() <= 1;
    Outcome::new(
        pass,
        format!(
            "Parseval rel err {parseval:.1e}, 10 Hz peak bin {peak}, 25 Hz {pass_db:+.3} dB, 1 Hz {stop_db:.1} dB, xcorr lag {lag}"
        ),
    )
}

pub fn alignment() -> Outcome {
    let ranges = align_attention(60, 10, 3000);
    let exact = ranges.len() == 600
        && ranges
            .iter()
            .enumerate()
            .all(|(j, &(s, e))| s == 5 * j && e == 5 * j + 5);
    let tiles = ranges.first().map(|r| r.0) == Some(0)
        && ranges.last().map(|r| r.1) == Some(3000)
        && ranges.windows(2).all(|w| w[0].1 == w[1].0);
    Outcome::new(
        exact && tiles,
        format!("{} ranges, exact [5j, 5j+5] tiling of [0, 3000]", ranges.len()),
    )
}

pub fn interferers() -> Outcome {
    let mut r = rng(51);
    let x = random_vec(&mut r, 10_000);
    let identity = add_baseline_wander(&x, 0.0) == x && add_white_noise(&x, 0.0, 9) == x;
    let amp = 0.37;
    let w = add_baseline_wander(&x, amp);
    let mid = x.len() / 2 - 1;
    let offset = w[mid] - x[mid];
    let noisy = add_white_noise(&x, amp, 9);
    let d: Vec<f64> = noisy.iter().zip(&x).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    let pass = identity && (offset - amp).abs() <= 1e-9 && (std / amp - 1.0).abs() <= 0.03;
    Outcome::new(
        pass,
        format!(
            "identity {identity}, wander midpoint offset {offset:.12}, noise std/amp {:.4}",
            std / amp
        ),
    )
}
