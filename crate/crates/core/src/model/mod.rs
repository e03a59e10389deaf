//! The multilevel attention network and its baseline variants.

mod attention;
mod config;
mod network;
mod params;

pub use attention::{
    knowledge_attention, knowledge_attention_backward, mean_pool, mean_pool_backward, Attended, AttentionParams,
};
pub use config::{ModelConfig, Variant};
pub use network::{
    beat_level, forward, forward_variant, fusion_predict, rhythm_level, segment, AttentionBundle, BeatLevel,
    ForwardOptions, ForwardPass, Fusion, Mina, Prediction, PreparedChannel, PreparedRecord, RhythmLevel,
};
pub use params::{ChannelParams, ModelParams};
