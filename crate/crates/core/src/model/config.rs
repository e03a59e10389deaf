use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, BandSpec};
use crate::error::{MinaError, Result};
use crate::nn::conv_output_len;

/// Architecture family. The baselines replace attention with uniform pooling
/// (`Cnn`, `Crnn`) or keep attention but drop the knowledge features (`Acrnn`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Mina,
    Acrnn,
    Crnn,
    Cnn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Mina, Variant::Acrnn, Variant::Crnn, Variant::Cnn];

    pub fn has_recurrence(self) -> bool {
        !matches!(self, Variant::Cnn)
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::Mina | Variant::Acrnn)
    }

    pub fn uses_knowledge(self) -> bool {
        matches!(self, Variant::Mina)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mina => "mina",
            Variant::Acrnn => "acrnn",
            Variant::Crnn => "crnn",
            Variant::Cnn => "cnn",
        })
    }
}

impl FromStr for Variant {
    type Err = MinaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mina" => Ok(Variant::Mina),
            "acrnn" => Ok(Variant::Acrnn),
            "crnn" => Ok(Variant::Crnn),
            "cnn" => Ok(Variant::Cnn),
            other => Err(MinaError::config("variant", format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Record length after preprocessing.
    pub n: usize,
    /// Segment length `T`.
    pub segment_len: usize,
    pub sampling_rate: f64,
    pub bands: Vec<BandSpec>,
    pub fir_taps: usize,
    /// Number of convolution filters `K`.
    pub conv_filters: usize,
    pub conv_size: usize,
    pub conv_stride: usize,
    /// ReLU after the segment convolution.
    pub conv_relu: bool,
    /// Hidden units per LSTM direction; the rhythm features are twice as wide.
    pub lstm_hidden: usize,
    /// Width `H` of the per-channel projection fed to frequency fusion.
    pub fusion_dim: usize,
    pub beat_att_dim: usize,
    pub rhythm_att_dim: usize,
    pub freq_att_dim: usize,
    pub num_classes: usize,
    pub dropout: f64,
    pub share_channel_params: bool,
    pub variant: Variant,
    /// Use the segment standard deviation instead of the variance as rhythm knowledge.
    pub rhythm_use_sqrt: bool,
    /// Z-score the rhythm and frequency knowledge vectors before attention.
    pub standardize_knowledge: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n: 3000,
            segment_len: 50,
            sampling_rate: 300.0,
            bands: dsp::default_bands(300.0),
            fir_taps: dsp::DEFAULT_NUM_TAPS,
            conv_filters: 64,
            conv_size: 32,
            conv_stride: 2,
            conv_relu: true,
            lstm_hidden: 32,
            fusion_dim: 32,
            beat_att_dim: 8,
            rhythm_att_dim: 8,
            freq_att_dim: 8,
            num_classes: 2,
            dropout: 0.5,
            share_channel_params: false,
            variant: Variant::Mina,
            rhythm_use_sqrt: false,
            standardize_knowledge: false,
        }
    }
}

impl ModelConfig {
    /// Default hyperparameters for `variant`. Baselines see the raw signal as a
    /// single full-band channel; only MINA decomposes into frequency bands.
    pub fn for_variant(variant: Variant) -> Self {
        let mut c = ModelConfig {
            variant,
            ..ModelConfig::default()
        };
        if variant != Variant::Mina {
            c.bands = vec![BandSpec::new(0.0, c.sampling_rate / 2.0)];
        }
        c
    }

    /// Small configuration used for gradient verification.
    pub fn tiny() -> Self {
        ModelConfig {
            n: 200,
            segment_len: 50,
            bands: vec![BandSpec::new(0.5, 50.0), BandSpec::new(10.0, 50.0)],
            fir_taps: 31,
            conv_filters: 4,
            lstm_hidden: 3,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    pub fn num_channels(&self) -> usize {
        self.bands.len()
    }

    /// `M = floor(n / T)`.
    pub fn num_segments(&self) -> usize {
        self.n / self.segment_len.max(1)
    }

    /// `N`, positions per segment after the strided convolution.
    pub fn conv_len(&self) -> usize {
        conv_output_len(self.segment_len, self.conv_size, self.conv_stride).unwrap_or(0)
    }

    /// `J`, the width of the rhythm features.
    pub fn rhythm_dim(&self) -> usize {
        if self.variant.has_recurrence() {
            2 * self.lstm_hidden
        } else {
            self.conv_filters
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n", self.n),
            ("segment_len", self.segment_len),
            ("conv_filters", self.conv_filters),
            ("conv_size", self.conv_size),
            ("conv_stride", self.conv_stride),
            ("lstm_hidden", self.lstm_hidden),
            ("fusion_dim", self.fusion_dim),
            ("beat_att_dim", self.beat_att_dim),
            ("rhythm_att_dim", self.rhythm_att_dim),
            ("freq_att_dim", self.freq_att_dim),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(MinaError::config(field, "must be at least 1"));
            }
        }
        if self.num_classes < 2 {
            return Err(MinaError::config("num_classes", "must be at least 2"));
        }
        if self.n < self.segment_len {
            return Err(MinaError::config("segment_len", "longer than the record length n"));
        }
        if self.conv_size > self.segment_len {
            return Err(MinaError::config("conv_size", "longer than segment_len"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MinaError::config("dropout", "must lie in [0, 1)"));
        }
        if self.sampling_rate.is_nan() || self.sampling_rate <= 0.0 {
            return Err(MinaError::config("sampling_rate", "must be positive"));
        }
        if self.bands.is_empty() {
            return Err(MinaError::config("bands", "at least one band is required"));
        }
        for b in &self.bands {
            b.validate(self.sampling_rate)
                .map_err(|e| MinaError::config("bands", e.to_string()))?;
        }
        if self.fir_taps < 3 || self.fir_taps.is_multiple_of(2) {
            return Err(MinaError::config("fir_taps", "must be odd and at least 3"));
        }
        if self.n <= self.fir_taps / 2 {
            return Err(MinaError::config(
                "fir_taps",
                "filter group delay exceeds record length",
            ));
        }
        Ok(())
    }
}
