//! Frequency-channel decomposition and signal interferers.
//!
//! Filters are linear-phase windowed-sinc FIR designs (Hamming window). They
//! are applied with their group delay removed so every channel stays
//! sample-aligned with the source trace; downstream attention weights index
//! real signal time only under that alignment.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dataset::EcgRecord;
use crate::error::{MinaError, Result};
use crate::rng;

pub const DEFAULT_NUM_TAPS: usize = 251;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub low: f64,
    pub high: f64,
}

impl BandSpec {
    pub const fn new(low: f64, high: f64) -> Self {
        BandSpec { low, high }
    }

    pub fn validate(&self, sampling_rate: f64) -> Result<()> {
        let nyquist = sampling_rate / 2.0;
        let ok = self.low.is_finite()
            && self.high.is_finite()
            && self.low >= 0.0
            && self.low < self.high
            && self.high <= nyquist;
        if ok {
            Ok(())
        } else {
            Err(MinaError::InvalidInput(format!(
                "band {self} must satisfy 0 <= low < high <= {nyquist} Hz"
            )))
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}Hz", self.low, self.high)
    }
}

/// The four channels used by default: `<0.5`, `0.5-50`, `10-50` and `>50` Hz.
pub fn default_bands(sampling_rate: f64) -> Vec<BandSpec> {
    vec![
        BandSpec::new(0.0, 0.5),
        BandSpec::new(0.5, 50.0),
        BandSpec::new(10.0, 50.0),
        BandSpec::new(50.0, sampling_rate / 2.0),
    ]
}

/// Named ECG frequency bands. Open-ended bands run to Nyquist; `all` passes the raw signal.
pub fn band_catalog(sampling_rate: f64) -> Vec<(&'static str, BandSpec)> {
    let nyquist = sampling_rate / 2.0;
    vec![
        ("very-low", BandSpec::new(0.0, 0.5)),
        ("respiration", BandSpec::new(0.12, 0.5)),
        ("pqrst", BandSpec::new(0.5, 50.0)),
        ("p-wave", BandSpec::new(0.67, 5.0)),
        ("t-wave", BandSpec::new(1.0, 7.0)),
        ("muscle", BandSpec::new(5.0, 50.0)),
        ("qrs", BandSpec::new(10.0, 50.0)),
        ("high", BandSpec::new(50.0, nyquist)),
        ("all", BandSpec::new(0.0, nyquist)),
    ]
}

pub fn preset_band(name: &str, sampling_rate: f64) -> Option<BandSpec> {
    band_catalog(sampling_rate)
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, b)| b)
}

/// Parses a band list: one `low_hz,high_hz` pair per line, `#` starts a comment.
pub fn parse_bands(text: &str) -> Result<Vec<BandSpec>> {
    let mut bands = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |m: &str| MinaError::Parse {
            path: "<bands>".into(),
            line: i + 1,
            message: m.to_string(),
        };
        let (lo, hi) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `low_hz,high_hz`"))?;
        let low: f64 = lo.trim().parse().map_err(|_| parse_err("low edge is not a number"))?;
        let high: f64 = hi.trim().parse().map_err(|_| parse_err("high edge is not a number"))?;
        bands.push(BandSpec::new(low, high));
    }
    Ok(bands)
}

pub fn read_bands(path: &Path) -> Result<Vec<BandSpec>> {
    let text = fs::read_to_string(path).map_err(|e| MinaError::io(path, e))?;
    parse_bands(&text).map_err(|e| match e {
        MinaError::Parse { line, message, .. } => MinaError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

pub fn format_bands(bands: &[BandSpec]) -> String {
    bands.iter().map(|b| format!("{},{}\n", b.low, b.high)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub band: BandSpec,
    pub group_delay: usize,
}

impl FirFilter {
    /// Single unit tap; passes the input through unchanged.
    pub fn identity(sampling_rate: f64) -> Self {
        FirFilter {
            taps: vec![1.0],
            band: BandSpec::new(0.0, sampling_rate / 2.0),
            group_delay: 0,
        }
    }

    /// Complex frequency response magnitude at `freq` Hz.
    pub fn magnitude_at(&self, freq: f64, sampling_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sampling_rate;
        let (re, im) = self.taps.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, h)| {
            (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
        });
        re.hypot(im)
    }
}

/// Hamming-windowed sinc lowpass with unit DC gain; offsets measured from the centre tap.
fn lowpass_taps(cutoff: f64, sampling_rate: f64, num_taps: usize) -> Vec<f64> {
    let centre = (num_taps - 1) / 2;
    let mut taps = vec![0.0; num_taps];
    if cutoff <= 0.0 {
        return taps;
    }
    if cutoff >= sampling_rate / 2.0 {
        taps[centre] = 1.0;
        return taps;
    }
    let fc = cutoff / sampling_rate;
    let span = (num_taps - 1) as f64;
    for (k, t) in taps.iter_mut().enumerate() {
        let m = (k as f64 - centre as f64).abs();
        let sinc = if m == 0.0 {
            2.0 * fc
        } else {
            (2.0 * PI * fc * m).sin() / (PI * m)
        };
        let window = if num_taps == 1 {
            1.0
        } else {
            0.54 + 0.46 * (2.0 * PI * m / span).cos()
        };
        *t = sinc * window;
    }
    let gain: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= gain;
    }
    taps
}

/// Designs a linear-phase bandpass as the difference of two windowed-sinc lowpasses.
///
/// `low == 0` yields a pure lowpass, `high == Nyquist` a highpass and the full
/// band `[0, Nyquist]` the identity (a centred unit impulse).
pub fn design_fir_bandpass(band: BandSpec, sampling_rate: f64, num_taps: usize) -> Result<FirFilter> {
    if num_taps < 3 || num_taps.is_multiple_of(2) {
        return Err(MinaError::InvalidInput(format!(
            "FIR tap count must be odd and at least 3, got {num_taps}"
        )));
    }
    band.validate(sampling_rate)?;
    let upper = lowpass_taps(band.high, sampling_rate, num_taps);
    let lower = lowpass_taps(band.low, sampling_rate, num_taps);
    let taps = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
    Ok(FirFilter {
        taps,
        band,
        group_delay: (num_taps - 1) / 2,
    })
}

/// Zero-padded convolution advanced by the group delay; output length equals input length.
pub fn apply_filter(x: &[f64], filter: &FirFilter) -> Result<Vec<f64>> {
    let len = x.len();
    let delay = filter.group_delay;
    if len == 0 || len <= delay {
        return Err(MinaError::InvalidInput(format!(
            "signal of length {len} is too short for a filter with group delay {delay}"
        )));
    }
    let taps = &filter.taps;
    let mut y = vec![0.0; len];
    for (k, out) in y.iter_mut().enumerate() {
        // y[k] = sum_j h[j] x[k + delay - j]
        let shifted = k + delay;
        let j_lo = shifted.saturating_sub(len - 1);
        let j_hi = shifted.min(taps.len() - 1);
        let mut acc = 0.0;
        for j in j_lo..=j_hi {
            acc += taps[j] * x[shifted - j];
        }
        *out = acc;
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBank {
    pub channels: Vec<Vec<f64>>,
    pub bands: Vec<BandSpec>,
    pub source_id: String,
}

impl ChannelBank {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

/// Designs one filter per band; reuse the result across records with [`decompose_with`].
pub fn design_bank(bands: &[BandSpec], sampling_rate: f64, num_taps: usize) -> Result<Vec<FirFilter>> {
    if bands.is_empty() {
        return Err(MinaError::InvalidInput("at least one band is required".into()));
    }
    bands
        .iter()
        .map(|&b| design_fir_bandpass(b, sampling_rate, num_taps))
        .collect()
}

pub fn decompose(record: &EcgRecord, bands: &[BandSpec], num_taps: usize) -> Result<ChannelBank> {
    let filters = design_bank(bands, record.sampling_rate, num_taps)?;
    decompose_with(record, &filters)
}

pub fn decompose_with(record: &EcgRecord, filters: &[FirFilter]) -> Result<ChannelBank> {
    let channels = filters
        .iter()
        .map(|f| apply_filter(&record.samples, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelBank {
        channels,
        bands: filters.iter().map(|f| f.band).collect(),
        source_id: record.id.clone(),
    })
}

/// One-sided periodogram: bin `k` holds `|X_k|^2 / (fs * len)` for `k = 0..=len/2`,
/// with every bin except DC and (for even lengths) Nyquist doubled.
pub fn periodogram_psd(x: &[f64], sampling_rate: f64) -> Result<Vec<f64>> {
    let len = x.len();
    if len < 2 {
        return Err(MinaError::InvalidInput("periodogram needs at least 2 samples".into()));
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let scale = 1.0 / (sampling_rate * len as f64);
    let bins = len / 2 + 1;
    Ok((0..bins)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            let doubled = k != 0 && !(len.is_multiple_of(2) && k == len / 2);
            if doubled {
                2.0 * p
            } else {
                p
            }
        })
        .collect())
}

/// Bin spacing in Hz of [`periodogram_psd`] for a signal of `len` samples.
pub fn psd_resolution(len: usize, sampling_rate: f64) -> f64 {
    sampling_rate / len as f64
}

/// Adds `amp * sin((k + 1) * pi / n)`: a half-period sine spanning the record.
pub fn add_baseline_wander(x: &[f64], amp: f64) -> Vec<f64> {
    if amp == 0.0 {
        return x.to_vec();
    }
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(k, v)| v + amp * ((k as f64 + 1.0) * PI / n).sin())
        .collect()
}

/// Adds `amp` times i.i.d. standard normal noise from a PCG-64 stream seeded by `seed`.
pub fn add_white_noise(x: &[f64], amp: f64, seed: u64) -> Vec<f64> {
    if amp == 0.0 {
        return x.to_vec();
    }
    let mut noise = vec![0.0; x.len()];
    rng::fill_standard_normal(&mut rng::seeded(seed), &mut noise);
    x.iter().zip(&noise).map(|(v, g)| v + amp * g).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interferer {
    Wander,
    Noise,
}

impl Interferer {
    pub fn apply(self, x: &[f64], amp: f64, seed: u64) -> Vec<f64> {
        match self {
            Interferer::Wander => add_baseline_wander(x, amp),
            Interferer::Noise => add_white_noise(x, amp, seed),
        }
    }
}

impl fmt::Display for Interferer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interferer::Wander => "wander",
            Interferer::Noise => "noise",
        })
    }
}

impl std::str::FromStr for Interferer {
    type Err = MinaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wander" => Ok(Interferer::Wander),
            "noise" => Ok(Interferer::Noise),
            other => Err(MinaError::InvalidInput(format!(
                "unknown interferer `{other}` (expected wander or noise)"
            ))),
        }
    }
}
