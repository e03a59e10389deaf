//! Training, evaluation, robustness sweeps and explanation export.

mod explain;
mod metrics;
mod robustness;
mod train;

pub use explain::{
    align_attention, export_explanation, BandWeight, ChannelView, Explanation, ExplanationView, Perturbation,
    PerturbedView, SegmentWeight, Span,
};
pub use metrics::{f1, pr_auc, roc_auc, Metrics};
pub use robustness::{perturbation_seed, robustness_sweep, signal_std, RobustnessCurve};
pub use train::{
    evaluate, evaluate_prepared, multi_seed_report, predict_scores, prepare_all, train, train_with, EpochRecord,
    Report, ReportRow, Summary, TrainConfig, TrainHistory,
};
