use super::attention::AttentionParams;
use super::config::ModelConfig;
use crate::nn::{BiLstmParams, Parameters, Tensor};
use crate::rng::{self, SeededRng};

/// Per-channel tensors. Optional parts exist only for variants that use them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// `[K, size]`
    pub conv_w: Tensor,
    /// `[K]`
    pub conv_b: Tensor,
    /// Beat-knowledge filter `[1, size]`.
    pub conv_alpha: Option<Tensor>,
    pub lstm: Option<BiLstmParams>,
    /// Input width `K + 1`.
    pub beat_att: Option<AttentionParams>,
    /// Input width `J + 1`.
    pub rhythm_att: Option<AttentionParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// One entry per band, or a single entry when channels share weights.
    pub channels: Vec<ChannelParams>,
    /// `[J, H]`
    pub fusion_w: Tensor,
    /// `[H]`
    pub fusion_b: Tensor,
    /// Input width `H + 1`.
    pub freq_att: Option<AttentionParams>,
    /// `[H, C]`
    pub out_w: Tensor,
    /// `[C]`
    pub out_b: Tensor,
}

fn uniform_fill(t: &mut Tensor, bound: f64, rng: &mut SeededRng) {
    for v in t.data_mut() {
        *v = rng::uniform_range(rng, -bound, bound);
    }
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let v = config.variant;
        let k = config.conv_filters;
        let j = config.rhythm_dim();
        let h = config.fusion_dim;
        let count = if config.share_channel_params {
            1
        } else {
            config.num_channels()
        };
        let channel = ChannelParams {
            conv_w: Tensor::zeros(&[k, config.conv_size]),
            conv_b: Tensor::zeros(&[k]),
            conv_alpha: v.uses_knowledge().then(|| Tensor::zeros(&[1, config.conv_size])),
            lstm: v.has_recurrence().then(|| BiLstmParams::zeros(k, config.lstm_hidden)),
            beat_att: v
                .has_attention()
                .then(|| AttentionParams::zeros(k + 1, config.beat_att_dim)),
            rhythm_att: v
                .has_attention()
                .then(|| AttentionParams::zeros(j + 1, config.rhythm_att_dim)),
        };
        ModelParams {
            channels: vec![channel; count],
            fusion_w: Tensor::zeros(&[j, h]),
            fusion_b: Tensor::zeros(&[h]),
            freq_att: v
                .has_attention()
                .then(|| AttentionParams::zeros(h + 1, config.freq_att_dim)),
            out_w: Tensor::zeros(&[h, config.num_classes]),
            out_b: Tensor::zeros(&[config.num_classes]),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` for convolution and dense layers; LSTM and
    /// attention use their own initializers.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let mut p = ModelParams::zeros(config);
        let k = config.conv_filters;
        let j = config.rhythm_dim();
        let h = config.fusion_dim;
        let conv_bound = 1.0 / (config.conv_size as f64).sqrt();
        for ch in p.channels.iter_mut() {
            uniform_fill(&mut ch.conv_w, conv_bound, &mut rng);
            uniform_fill(&mut ch.conv_b, conv_bound, &mut rng);
            if let Some(a) = ch.conv_alpha.as_mut() {
                uniform_fill(a, conv_bound, &mut rng);
            }
            if ch.lstm.is_some() {
                ch.lstm = Some(BiLstmParams::init(k, config.lstm_hidden, &mut rng));
            }
            if ch.beat_att.is_some() {
                ch.beat_att = Some(AttentionParams::init(k + 1, config.beat_att_dim, &mut rng));
            }
            if ch.rhythm_att.is_some() {
                ch.rhythm_att = Some(AttentionParams::init(j + 1, config.rhythm_att_dim, &mut rng));
            }
        }
        let fusion_bound = 1.0 / (j as f64).sqrt();
        uniform_fill(&mut p.fusion_w, fusion_bound, &mut rng);
        uniform_fill(&mut p.fusion_b, fusion_bound, &mut rng);
        if p.freq_att.is_some() {
            p.freq_att = Some(AttentionParams::init(h + 1, config.freq_att_dim, &mut rng));
        }
        let out_bound = 1.0 / (h as f64).sqrt();
        uniform_fill(&mut p.out_w, out_bound, &mut rng);
        uniform_fill(&mut p.out_b, out_bound, &mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_all();
        z
    }

    /// Parameter set serving channel `i`.
    pub fn channel(&self, i: usize) -> &ChannelParams {
        &self.channels[i.min(self.channels.len() - 1)]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut ChannelParams {
        let last = self.channels.len() - 1;
        &mut self.channels[i.min(last)]
    }
}

fn push_attention<'a>(out: &mut Vec<(String, &'a Tensor)>, prefix: &str, a: &'a AttentionParams) {
    out.push((format!("{prefix}.w"), &a.w));
    out.push((format!("{prefix}.b"), &a.b));
    out.push((format!("{prefix}.v"), &a.v));
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        let shared = self.channels.len() == 1;
        for (i, ch) in self.channels.iter().enumerate() {
            let p = if shared { "shared".to_string() } else { format!("ch{i}") };
            out.push((format!("{p}.conv.w"), &ch.conv_w));
            out.push((format!("{p}.conv.b"), &ch.conv_b));
            if let Some(a) = &ch.conv_alpha {
                out.push((format!("{p}.conv_alpha.w"), a));
            }
            if let Some(l) = &ch.lstm {
                for (dir, cell) in [("fwd", &l.forward), ("bwd", &l.backward)] {
                    out.push((format!("{p}.lstm.{dir}.w_ih"), &cell.w_ih));
                    out.push((format!("{p}.lstm.{dir}.w_hh"), &cell.w_hh));
                    out.push((format!("{p}.lstm.{dir}.b"), &cell.bias));
                }
            }
            if let Some(a) = &ch.beat_att {
                push_attention(&mut out, &format!("{p}.beat_att"), a);
            }
            if let Some(a) = &ch.rhythm_att {
                push_attention(&mut out, &format!("{p}.rhythm_att"), a);
            }
        }
        out.push(("fusion.w".into(), &self.fusion_w));
        out.push(("fusion.b".into(), &self.fusion_b));
        if let Some(a) = &self.freq_att {
            push_attention(&mut out, "freq_att", a);
        }
        out.push(("out.w".into(), &self.out_w));
        out.push(("out.b".into(), &self.out_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for ch in self.channels.iter_mut() {
            out.push(&mut ch.conv_w);
            out.push(&mut ch.conv_b);
            if let Some(a) = ch.conv_alpha.as_mut() {
                out.push(a);
            }
            if let Some(l) = ch.lstm.as_mut() {
                for cell in [&mut l.forward, &mut l.backward] {
                    out.push(&mut cell.w_ih);
                    out.push(&mut cell.w_hh);
                    out.push(&mut cell.bias);
                }
            }
            for a in [ch.beat_att.as_mut(), ch.rhythm_att.as_mut()].into_iter().flatten() {
                out.push(&mut a.w);
                out.push(&mut a.b);
                out.push(&mut a.v);
            }
        }
        out.push(&mut self.fusion_w);
        out.push(&mut self.fusion_b);
        if let Some(a) = self.freq_att.as_mut() {
            out.push(&mut a.w);
            out.push(&mut a.b);
            out.push(&mut a.v);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }
}
