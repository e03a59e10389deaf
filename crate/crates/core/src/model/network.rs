//! Forward and backward passes of the multilevel network.
//!
//! Per channel: segment, convolve each segment, pool the convolution outputs
//! into one vector per segment (beat level), run a BiLSTM across segments and
//! pool its states (rhythm level). The channel vectors are projected, pooled
//! across channels (frequency level) and classified.
//!
//! Pooling is knowledge-guided attention for MINA, attention with zero
//! knowledge for ACRNN and a uniform mean for CNN and CRNN.

use super::attention::{knowledge_attention, knowledge_attention_backward, mean_pool, mean_pool_backward, Attended};
use super::config::{ModelConfig, Variant};
use super::params::{ChannelParams, ModelParams};
use crate::dataset::EcgRecord;
use crate::dsp::{self, BandSpec, FirFilter};
use crate::error::{MinaError, Result};
use crate::knowledge::{first_difference, freq_knowledge, rhythm_knowledge, standardize};
use crate::nn::{
    axpy, bilstm, bilstm_backward, conv1d, conv1d_param_grads, conv1d_rows, dense, dense_backward, dot, dropout_mask,
    softmax, weighted_cross_entropy, weighted_cross_entropy_grad, BiLstmCache, Parameters, Tensor,
};
use crate::rng;

/// Class probabilities for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p: Vec<f64>,
}

impl Prediction {
    /// Probability of the last class, used as the ranking score.
    pub fn positive(&self) -> f64 {
        *self.p.last().unwrap_or(&0.0)
    }
}

/// Attention weights at every level, for interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    /// Per channel, `[M, N]`.
    pub alpha: Vec<Tensor>,
    /// Per channel, length `M`.
    pub beta: Vec<Vec<f64>>,
    /// Length `F`.
    pub gamma: Vec<f64>,
}

/// Splits `x` into non-overlapping rows of length `t`, dropping the remainder.
pub fn segment(x: &[f64], t: usize) -> Result<Tensor> {
    if t == 0 || x.len() < t {
        return Err(MinaError::Shape(format!(
            "cannot segment {} samples into windows of {t}",
            x.len()
        )));
    }
    let m = x.len() / t;
    Tensor::from_vec(&[m, t], x[..m * t].to_vec())
}

/// Inputs that do not depend on learnable parameters, computed once per record.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedChannel {
    pub band: BandSpec,
    pub filtered: Vec<f64>,
    /// `[M, T]`
    pub segments: Tensor,
    /// First difference of each segment, `[M, T]`.
    pub diffs: Tensor,
    /// Rhythm knowledge, length `M`.
    pub k_beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    pub id: String,
    pub label: usize,
    pub channels: Vec<PreparedChannel>,
    /// Frequency knowledge, length `F`.
    pub k_gamma: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    /// Enables dropout.
    pub training: bool,
    pub dropout_seed: u64,
    /// Replaces every knowledge input with zeros.
    pub zero_knowledge: bool,
    /// `false` entries force a channel's frequency weight to zero.
    pub channel_mask: Option<Vec<bool>>,
}

impl ForwardOptions {
    pub fn inference() -> Self {
        ForwardOptions::default()
    }

    pub fn training(seed: u64) -> Self {
        ForwardOptions {
            training: true,
            dropout_seed: seed,
            ..ForwardOptions::default()
        }
    }
}

/// Beat-level outputs for one channel.
#[derive(Debug, Clone)]
pub struct BeatLevel {
    /// Pooled segment vectors, `[M, K]`.
    pub o: Tensor,
    /// `[M, N]`
    pub alpha: Tensor,
    /// Beat knowledge, `[M, N]`.
    pub k_alpha: Tensor,
    conv: Vec<Tensor>,
    pooled: Vec<Attended>,
}

/// Rhythm-level outputs for one channel.
#[derive(Debug, Clone)]
pub struct RhythmLevel {
    pub c: Vec<f64>,
    pub beta: Vec<f64>,
    /// Items pooled by the rhythm attention: BiLSTM states or, without recurrence, `o`.
    pub states: Tensor,
    knowledge: Tensor,
    lstm: Option<BiLstmCache>,
    pooled: Attended,
}

/// Frequency fusion and prediction.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub p: Vec<f64>,
    /// Length `F`; masked channels are exactly zero.
    pub gamma: Vec<f64>,
    pub d: Vec<f64>,
    /// Projected channel vectors, `[F, H]`.
    pub q: Tensor,
    c_mat: Tensor,
    active: Vec<usize>,
    active_q: Tensor,
    knowledge: Tensor,
    pooled: Attended,
    drop_mask: Option<Vec<f64>>,
    d_dropped: Vec<f64>,
}

fn column(values: &[f64], zero: bool) -> Tensor {
    let data = if zero { vec![0.0; values.len()] } else { values.to_vec() };
    Tensor::from_vec(&[values.len(), 1], data).expect("column shape")
}

fn pool(features: &Tensor, knowledge: &Tensor, att: Option<&super::AttentionParams>) -> Result<Attended> {
    match att {
        Some(a) => knowledge_attention(features, knowledge, a),
        None => Ok(mean_pool(features)),
    }
}

fn missing(what: &str) -> MinaError {
    MinaError::Shape(format!("parameters lack {what} required by the variant"))
}

/// Convolution plus beat attention over every segment of one channel.
pub fn beat_level(
    segments: &Tensor,
    diffs: &Tensor,
    params: &ChannelParams,
    config: &ModelConfig,
    zero_knowledge: bool,
) -> Result<BeatLevel> {
    let m = segments.rows();
    let k = params.conv_w.rows();
    let n = config.conv_len();
    let variant = config.variant;
    let use_knowledge = variant.uses_knowledge() && !zero_knowledge;
    let att = if variant.has_attention() {
        Some(params.beat_att.as_ref().ok_or_else(|| missing("beat attention"))?)
    } else {
        None
    };
    let mut o = Tensor::zeros(&[m, k]);
    let mut alpha = Tensor::zeros(&[m, n]);
    let mut k_alpha = Tensor::zeros(&[m, n]);
    let mut conv = Vec::with_capacity(m);
    let mut pooled = Vec::with_capacity(m);
    let convs = conv1d_rows(segments, &params.conv_w, Some(params.conv_b.data()), config.conv_stride)?;
    for (s, mut l) in convs.into_iter().enumerate() {
        if l.rows() != n {
            return Err(MinaError::Shape(format!(
                "segment of length {} gives {} conv outputs, expected {n}",
                segments.cols(),
                l.rows()
            )));
        }
        if config.conv_relu {
            crate::nn::relu_in_place(l.data_mut());
        }
        if use_knowledge {
            let filter = params
                .conv_alpha
                .as_ref()
                .ok_or_else(|| missing("beat knowledge filter"))?;
            let ka = conv1d(diffs.row(s), filter, None, config.conv_stride)?;
            k_alpha.row_mut(s).copy_from_slice(ka.data());
        }
        let knowledge = Tensor::from_vec(&[n, 1], k_alpha.row(s).to_vec())?;
        let a = pool(&l, &knowledge, att)?;
        o.row_mut(s).copy_from_slice(&a.context);
        alpha.row_mut(s).copy_from_slice(&a.weights);
        conv.push(l);
        pooled.push(a);
    }
    Ok(BeatLevel {
        o,
        alpha,
        k_alpha,
        conv,
        pooled,
    })
}

fn beat_level_backward(
    prep: &PreparedChannel,
    params: &ChannelParams,
    config: &ModelConfig,
    beat: &BeatLevel,
    d_o: &Tensor,
    zero_knowledge: bool,
    grads: &mut ChannelParams,
) {
    let n = beat.alpha.cols();
    let use_knowledge = config.variant.uses_knowledge() && !zero_knowledge;
    for s in 0..beat.conv.len() {
        let l = &beat.conv[s];
        let d_ctx = d_o.row(s);
        let mut d_l = match (params.beat_att.as_ref(), config.variant.has_attention()) {
            (Some(att), true) => {
                let knowledge = Tensor::from_vec(&[n, 1], beat.k_alpha.row(s).to_vec()).expect("column");
                let g = grads.beat_att.as_mut().expect("gradient layout matches parameters");
                let (d_l, d_k) = knowledge_attention_backward(l, &knowledge, att, &beat.pooled[s], d_ctx, g);
                if use_knowledge {
                    let ga = grads.conv_alpha.as_mut().expect("gradient layout matches parameters");
                    conv1d_param_grads(prep.diffs.row(s), config.conv_stride, &d_k, ga, None);
                }
                d_l
            }
            _ => mean_pool_backward(l, d_ctx),
        };
        if config.conv_relu {
            for (d, &v) in d_l.data_mut().iter_mut().zip(l.data()) {
                if v <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        conv1d_param_grads(
            prep.segments.row(s),
            config.conv_stride,
            &d_l,
            &mut grads.conv_w,
            Some(grads.conv_b.data_mut()),
        );
    }
}

/// BiLSTM over the segment vectors `o` (`[M, K]`) followed by rhythm attention.
pub fn rhythm_level(
    o: &Tensor,
    params: &ChannelParams,
    k_beta: &[f64],
    config: &ModelConfig,
    zero_knowledge: bool,
) -> Result<RhythmLevel> {
    let variant = config.variant;
    let lstm = if variant.has_recurrence() {
        Some(bilstm(params.lstm.as_ref().ok_or_else(|| missing("BiLSTM"))?, o)?)
    } else {
        None
    };
    let states = lstm.as_ref().map_or_else(|| o.clone(), |c| c.output.clone());
    let knowledge = column(k_beta, zero_knowledge || !variant.uses_knowledge());
    let att = if variant.has_attention() {
        Some(params.rhythm_att.as_ref().ok_or_else(|| missing("rhythm attention"))?)
    } else {
        None
    };
    let pooled = pool(&states, &knowledge, att)?;
    Ok(RhythmLevel {
        c: pooled.context.clone(),
        beta: pooled.weights.clone(),
        states,
        knowledge,
        lstm,
        pooled,
    })
}

fn rhythm_level_backward(
    o: &Tensor,
    params: &ChannelParams,
    config: &ModelConfig,
    rhythm: &RhythmLevel,
    d_c: &[f64],
    grads: &mut ChannelParams,
) -> Tensor {
    let d_states = match (params.rhythm_att.as_ref(), config.variant.has_attention()) {
        (Some(att), true) => {
            let g = grads.rhythm_att.as_mut().expect("gradient layout matches parameters");
            knowledge_attention_backward(&rhythm.states, &rhythm.knowledge, att, &rhythm.pooled, d_c, g).0
        }
        _ => mean_pool_backward(&rhythm.states, d_c),
    };
    match (rhythm.lstm.as_ref(), params.lstm.as_ref()) {
        (Some(cache), Some(p)) => {
            let g = grads.lstm.as_mut().expect("gradient layout matches parameters");
            bilstm_backward(p, o, cache, &d_states, g)
        }
        _ => d_states,
    }
}

/// Projects the channel vectors `c_mat` (`[F, J]`), pools them across
/// channels, applies dropout in training mode and classifies.
pub fn fusion_predict(
    c_mat: &Tensor,
    params: &ModelParams,
    k_gamma: &[f64],
    config: &ModelConfig,
    options: &ForwardOptions,
) -> Result<Fusion> {
    let f = c_mat.rows();
    if k_gamma.len() != f {
        return Err(MinaError::Shape(format!(
            "{f} channels but {} frequency knowledge values",
            k_gamma.len()
        )));
    }
    let q = dense(c_mat, &params.fusion_w, params.fusion_b.data())?;
    let active: Vec<usize> = match &options.channel_mask {
        Some(mask) if mask.len() != f => {
            return Err(MinaError::Shape(format!(
                "channel mask of {} for {f} channels",
                mask.len()
            )))
        }
        Some(mask) => (0..f).filter(|&i| mask[i]).collect(),
        None => (0..f).collect(),
    };
    if active.is_empty() {
        return Err(MinaError::InvalidInput("channel mask removes every channel".into()));
    }
    let h = q.cols();
    let mut active_q = Tensor::zeros(&[active.len(), h]);
    let mut kg = Vec::with_capacity(active.len());
    for (r, &i) in active.iter().enumerate() {
        active_q.row_mut(r).copy_from_slice(q.row(i));
        kg.push(k_gamma[i]);
    }
    let zero = options.zero_knowledge || !config.variant.uses_knowledge();
    let knowledge = column(&kg, zero);
    let att = if config.variant.has_attention() {
        Some(params.freq_att.as_ref().ok_or_else(|| missing("frequency attention"))?)
    } else {
        None
    };
    let pooled = pool(&active_q, &knowledge, att)?;
    let mut gamma = vec![0.0; f];
    for (r, &i) in active.iter().enumerate() {
        gamma[i] = pooled.weights[r];
    }
    let d = pooled.context.clone();
    let drop_mask = (options.training && config.dropout > 0.0)
        .then(|| dropout_mask(d.len(), config.dropout, &mut rng::seeded(options.dropout_seed)));
    let d_dropped: Vec<f64> = match &drop_mask {
        Some(m) => d.iter().zip(m).map(|(x, k)| x * k).collect(),
        None => d.clone(),
    };
    let logits = dense(
        &Tensor::from_vec(&[1, d_dropped.len()], d_dropped.clone())?,
        &params.out_w,
        params.out_b.data(),
    )?;
    let p = softmax(logits.data());
    Ok(Fusion {
        p,
        gamma,
        d,
        q,
        c_mat: c_mat.clone(),
        active,
        active_q,
        knowledge,
        pooled,
        drop_mask,
        d_dropped,
    })
}

fn fusion_backward(
    params: &ModelParams,
    config: &ModelConfig,
    fusion: &Fusion,
    d_logits: &[f64],
    grads: &mut ModelParams,
) -> Tensor {
    axpy(1.0, d_logits, grads.out_b.data_mut());
    let mut d_d = vec![0.0; fusion.d.len()];
    for (i, &x) in fusion.d_dropped.iter().enumerate() {
        axpy(x, d_logits, grads.out_w.row_mut(i));
        d_d[i] = dot(params.out_w.row(i), d_logits);
    }
    if let Some(mask) = &fusion.drop_mask {
        for (g, m) in d_d.iter_mut().zip(mask) {
            *g *= m;
        }
    }
    let d_active = match (params.freq_att.as_ref(), config.variant.has_attention()) {
        (Some(att), true) => {
            let g = grads.freq_att.as_mut().expect("gradient layout matches parameters");
            knowledge_attention_backward(&fusion.active_q, &fusion.knowledge, att, &fusion.pooled, &d_d, g).0
        }
        _ => mean_pool_backward(&fusion.active_q, &d_d),
    };
    let mut d_q = Tensor::zeros(fusion.q.shape());
    for (r, &i) in fusion.active.iter().enumerate() {
        d_q.row_mut(i).copy_from_slice(d_active.row(r));
    }
    let g = dense_backward(&fusion.c_mat, &params.fusion_w, &d_q);
    grads.fusion_w.add_assign(&g.weight);
    axpy(1.0, &g.bias, grads.fusion_b.data_mut());
    g.input
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub beats: Vec<BeatLevel>,
    pub rhythms: Vec<RhythmLevel>,
    pub fusion: Fusion,
    zero_knowledge: bool,
}

impl ForwardPass {
    pub fn prediction(&self) -> Prediction {
        Prediction {
            p: self.fusion.p.clone(),
        }
    }

    pub fn attention(&self) -> AttentionBundle {
        AttentionBundle {
            alpha: self.beats.iter().map(|b| b.alpha.clone()).collect(),
            beta: self.rhythms.iter().map(|r| r.beta.clone()).collect(),
            gamma: self.fusion.gamma.clone(),
        }
    }
}

/// A configured network: validated hyperparameters plus the designed filter bank.
#[derive(Debug, Clone)]
pub struct Mina {
    config: ModelConfig,
    filters: Vec<FirFilter>,
    layout: Vec<(String, Vec<usize>)>,
}

impl Mina {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let filters = dsp::design_bank(&config.bands, config.sampling_rate, config.fir_taps)?;
        let layout = ModelParams::zeros(&config)
            .tensors()
            .into_iter()
            .map(|(name, t)| (name, t.shape().to_vec()))
            .collect();
        Ok(Mina {
            config,
            filters,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn filters(&self) -> &[FirFilter] {
        &self.filters
    }

    pub fn init_params(&self, seed: u64) -> ModelParams {
        ModelParams::init(&self.config, seed)
    }

    /// Fails unless `params` has exactly the tensors this configuration needs.
    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        let got = params.tensors();
        let matches = got.len() == self.layout.len()
            && got
                .iter()
                .zip(&self.layout)
                .all(|((n, t), (en, es))| n == en && t.shape() == es.as_slice());
        if matches {
            Ok(())
        } else {
            Err(MinaError::Shape(format!(
                "parameters do not match the {} configuration",
                self.config.variant
            )))
        }
    }

    /// Filters, segments and computes the parameter-free knowledge features.
    pub fn prepare(&self, record: &EcgRecord) -> Result<PreparedRecord> {
        let c = &self.config;
        if record.len() != c.n {
            return Err(MinaError::Shape(format!(
                "record `{}` has {} samples, the model expects {}",
                record.id,
                record.len(),
                c.n
            )));
        }
        let bank = dsp::decompose_with(record, &self.filters)?;
        let mut k_gamma = freq_knowledge(&bank, c.sampling_rate)?;
        if c.standardize_knowledge {
            standardize(&mut k_gamma);
        }
        let mut channels = Vec::with_capacity(bank.num_channels());
        for (filtered, band) in bank.channels.into_iter().zip(bank.bands) {
            let segments = segment(&filtered, c.segment_len)?;
            let mut diffs = Tensor::zeros(segments.shape());
            for s in 0..segments.rows() {
                diffs.row_mut(s).copy_from_slice(&first_difference(segments.row(s))?);
            }
            let mut k_beta = rhythm_knowledge(&segments, c.rhythm_use_sqrt);
            if c.standardize_knowledge {
                standardize(&mut k_beta);
            }
            channels.push(PreparedChannel {
                band,
                filtered,
                segments,
                diffs,
                k_beta,
            });
        }
        Ok(PreparedRecord {
            id: record.id.clone(),
            label: record.label,
            channels,
            k_gamma,
        })
    }

    pub fn forward_prepared(
        &self,
        params: &ModelParams,
        prep: &PreparedRecord,
        options: &ForwardOptions,
    ) -> Result<ForwardPass> {
        self.check_params(params)?;
        let c = &self.config;
        let f = prep.channels.len();
        let mut beats = Vec::with_capacity(f);
        let mut rhythms = Vec::with_capacity(f);
        let mut c_mat = Tensor::zeros(&[f, c.rhythm_dim()]);
        for (i, ch) in prep.channels.iter().enumerate() {
            let p = params.channel(i);
            let beat = beat_level(&ch.segments, &ch.diffs, p, c, options.zero_knowledge)?;
            let rhythm = rhythm_level(&beat.o, p, &ch.k_beta, c, options.zero_knowledge)?;
            c_mat.row_mut(i).copy_from_slice(&rhythm.c);
            beats.push(beat);
            rhythms.push(rhythm);
        }
        let fusion = fusion_predict(&c_mat, params, &prep.k_gamma, c, options)?;
        Ok(ForwardPass {
            beats,
            rhythms,
            fusion,
            zero_knowledge: options.zero_knowledge,
        })
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the output logits is `d_logits`.
    pub fn backward(
        &self,
        params: &ModelParams,
        prep: &PreparedRecord,
        pass: &ForwardPass,
        d_logits: &[f64],
        grads: &mut ModelParams,
    ) {
        let c = &self.config;
        let d_c = fusion_backward(params, c, &pass.fusion, d_logits, grads);
        for (i, ch) in prep.channels.iter().enumerate() {
            let p = params.channel(i);
            let g = grads.channel_mut(i);
            let beat = &pass.beats[i];
            let d_o = rhythm_level_backward(&beat.o, p, c, &pass.rhythms[i], d_c.row(i), g);
            beat_level_backward(ch, p, c, beat, &d_o, pass.zero_knowledge, g);
        }
    }

    /// Weighted cross entropy of one record, scaled by `scale`, with its
    /// gradient accumulated into `grads`. Returns the unscaled loss and `p`.
    pub fn loss_and_grad(
        &self,
        params: &ModelParams,
        prep: &PreparedRecord,
        class_weights: &[f64],
        options: &ForwardOptions,
        scale: f64,
        grads: &mut ModelParams,
    ) -> Result<(f64, Vec<f64>)> {
        let pass = self.forward_prepared(params, prep, options)?;
        let p = &pass.fusion.p;
        let loss = record_loss(p, prep.label, class_weights)?;
        let mut d_logits = weighted_cross_entropy_grad(p, prep.label, class_weights);
        for d in d_logits.iter_mut() {
            *d *= scale;
        }
        self.backward(params, prep, &pass, &d_logits, grads);
        Ok((loss, pass.fusion.p))
    }

    /// Weighted cross entropy of one record without gradients.
    pub fn loss(
        &self,
        params: &ModelParams,
        prep: &PreparedRecord,
        class_weights: &[f64],
        options: &ForwardOptions,
    ) -> Result<f64> {
        let pass = self.forward_prepared(params, prep, options)?;
        record_loss(&pass.fusion.p, prep.label, class_weights)
    }

    /// Inference-mode prediction and attention weights.
    pub fn predict(&self, params: &ModelParams, record: &EcgRecord) -> Result<(Prediction, AttentionBundle)> {
        let prep = self.prepare(record)?;
        let pass = self.forward_prepared(params, &prep, &ForwardOptions::inference())?;
        Ok((pass.prediction(), pass.attention()))
    }
}

fn record_loss(p: &[f64], label: usize, class_weights: &[f64]) -> Result<f64> {
    if label >= p.len() {
        return Err(MinaError::InvalidInput(format!(
            "label {label} outside {} classes",
            p.len()
        )));
    }
    let mut z = vec![0.0; p.len()];
    z[label] = 1.0;
    weighted_cross_entropy(p, &z, class_weights)
}

/// Runs the configured network on one record. In training mode dropout uses seed 0.
pub fn forward(
    record: &EcgRecord,
    params: &ModelParams,
    config: &ModelConfig,
    training: bool,
) -> Result<(Prediction, AttentionBundle)> {
    let model = Mina::new(config.clone())?;
    let prep = model.prepare(record)?;
    let options = if training {
        ForwardOptions::training(0)
    } else {
        ForwardOptions::inference()
    };
    let pass = model.forward_prepared(params, &prep, &options)?;
    Ok((pass.prediction(), pass.attention()))
}

/// Inference-mode prediction for whichever variant `config` selects.
pub fn forward_variant(record: &EcgRecord, params: &ModelParams, config: &ModelConfig) -> Result<Prediction> {
    forward(record, params, config, false).map(|(p, _)| p)
}
