mod common;

use common::*;
use mina::dataset::{synth_ecg, EcgRecord};
use mina::dsp::{apply_filter, decompose, design_fir_bandpass, periodogram_psd, BandSpec, DEFAULT_NUM_TAPS};
use mina::knowledge::freq_knowledge;

const FS: f64 = 300.0;

#[test]
fn dsp_criteria() {
    criteria::dsp().assert("dsp");
}

#[test]
fn interferer_formulas() {
    criteria::interferers().assert("interferers");
}

#[test]
fn periodogram_matches_direct_dft() {
    let mut r = rng(42);
    for n in [2, 3, 17, 64, 101] {
        let x = random_vec(&mut r, n);
        let fast = periodogram_psd(&x, FS).unwrap();
        let slow = naive_psd(&x, FS);
        let scale = slow.iter().cloned().fold(0.0, f64::max);
        assert!(max_abs_diff(&fast, &slow) <= 1e-10 * scale.max(1.0), "n = {n}");
        assert!(fast.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn filter_is_linear_phase_and_linear() {
    let f = design_fir_bandpass(BandSpec::new(10.0, 50.0), FS, DEFAULT_NUM_TAPS).unwrap();
    let n = f.taps.len();
    assert_eq!(n % 2, 1);
    for k in 0..n {
        assert!((f.taps[k] - f.taps[n - 1 - k]).abs() <= 1e-12);
    }
    let mut r = rng(43);
    let (x, y) = (random_vec(&mut r, 500), random_vec(&mut r, 500));
    let (a, b) = (1.7, -0.4);
    let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
    let lhs = apply_filter(&mix, &f).unwrap();
    let (fx, fy) = (apply_filter(&x, &f).unwrap(), apply_filter(&y, &f).unwrap());
    let rhs: Vec<f64> = fx.iter().zip(&fy).map(|(u, v)| a * u + b * v).collect();
    let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(max_abs_diff(&lhs, &rhs) <= 1e-9 * scale);
    assert!(design_fir_bandpass(BandSpec::new(10.0, 50.0), FS, 250).is_err());
    assert!(design_fir_bandpass(BandSpec::new(10.0, 200.0), FS, 251).is_err());
}

#[test]
fn one_hz_sine_is_suppressed_in_the_band_channel() {
    let f = design_fir_bandpass(BandSpec::new(10.0, 50.0), FS, 251).unwrap();
    let y = apply_filter(&sine(1.0, FS, 3000), &f).unwrap();
    // Skip the edges where the zero-padded convolution ramps in and out.
    assert!(rms(&y, 300, 2700) / std::f64::consts::FRAC_1_SQRT_2 <= 0.1);
}

#[test]
fn bands_separate_a_two_tone_signal() {
    let slow = sine(0.2, FS, 3000);
    let fast: Vec<f64> = sine(25.0, FS, 3000);
    let mix: Vec<f64> = slow.iter().zip(&fast).map(|(a, b)| a + b).collect();
    let record = EcgRecord {
        id: "two-tone".into(),
        samples: mix,
        label: 0,
        sampling_rate: FS,
    };
    let bank = decompose(&record, &[BandSpec::new(0.0, 0.5), BandSpec::new(10.0, 50.0)], 251).unwrap();
    let power_near = |x: &[f64], hz: f64| -> (f64, f64) {
        let psd = periodogram_psd(x, FS).unwrap();
        let bin = (hz * 3000.0 / FS).round() as usize;
        let near: f64 = psd[bin.saturating_sub(2)..=bin + 2].iter().sum();
        (near, psd.iter().sum())
    };
    let (slow_in, _) = power_near(&bank.channels[0], 0.2);
    let (slow_ref, _) = power_near(&slow, 0.2);
    let (fast_in, _) = power_near(&bank.channels[1], 25.0);
    let (fast_ref, _) = power_near(&fast, 25.0);
    assert!(slow_in >= 0.9 * slow_ref, "{slow_in} vs {slow_ref}");
    assert!(fast_in >= 0.9 * fast_ref, "{fast_in} vs {fast_ref}");
}

#[test]
fn frequency_knowledge_scales_with_power() {
    let one = EcgRecord {
        id: "a".into(),
        samples: sine(25.0, FS, 3000),
        label: 0,
        sampling_rate: FS,
    };
    let two = one.with_samples(one.samples.iter().map(|v| 2.0 * v).collect());
    let band = [BandSpec::new(0.0, FS / 2.0)];
    let k1 = freq_knowledge(&decompose(&one, &band, 251).unwrap(), FS).unwrap()[0];
    let k2 = freq_knowledge(&decompose(&two, &band, 251).unwrap(), FS).unwrap()[0];
    assert!((k2 / k1 - 4.0).abs() <= 4e-6);
}

#[test]
fn synthetic_classes_differ_in_rhythm_regularity() {
    // About a dozen intervals per record, so the irregular class is judged on
    // its mean CV (uniform jitter of 45% gives 0.26 in expectation).
    let gap = (0.25 * FS) as usize;
    let mut irregular_cvs = Vec::new();
    for seed in 0..10 {
        let regular = synth_ecg(0, seed, 3000, FS).unwrap();
        let irregular = synth_ecg(1, seed, 3000, FS).unwrap();
        let cv0 = interval_cv(&detect_peaks(&regular.samples, 0.5, gap));
        let cv1 = interval_cv(&detect_peaks(&irregular.samples, 0.5, gap));
        assert!(cv0 < 0.05, "seed {seed}: regular CV {cv0}");
        assert!(cv1 > 0.1, "seed {seed}: irregular CV {cv1}");
        irregular_cvs.push(cv1);
    }
    let mean = irregular_cvs.iter().sum::<f64>() / irregular_cvs.len() as f64;
    assert!(mean > 0.2, "mean irregular CV {mean}");
}

#[test]
fn synthetic_records_are_deterministic() {
    assert_eq!(synth_ecg(1, 9, 3000, FS).unwrap(), synth_ecg(1, 9, 3000, FS).unwrap());
    assert_ne!(
        synth_ecg(1, 9, 3000, FS).unwrap().samples,
        synth_ecg(1, 10, 3000, FS).unwrap().samples
    );
}
